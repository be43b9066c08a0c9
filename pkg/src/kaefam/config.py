"""JSON run configuration: schema, defaults, validation and overrides."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, KaefamError
from .expr import BackgroundForm, parse_potential

COMMANDS = ("solve", "verify", "sweep", "bergman")
FORMATS = ("csv", "json", "plots")


@dataclass(frozen=True)
class GridConfig:
    resolution: int = 64
    tau_re: float = 0.0
    tau_im: float = 1.0

    @property
    def tau(self) -> complex:
        return complex(self.tau_re, self.tau_im)


@dataclass(frozen=True)
class FamilyConfig:
    potential: str
    H_tt: float = 1.0
    H_zz: float = 1.0
    H_tz_re: float = 0.0
    H_tz_im: float = 0.0
    base_points: tuple = ((0.0, 0.0),)
    epsilon_list: tuple = (1.0, 0.5, 0.25, 0.1, 0.05)
    disk_radius: float = 1.0
    psd_tol: float = 1e-10
    allow_non_psd: bool = False

    @property
    def background(self) -> BackgroundForm:
        return BackgroundForm(
            self.H_tt, self.H_zz, complex(self.H_tz_re, self.H_tz_im), self.psd_tol
        )

    @property
    def base_points_complex(self):
        return [complex(re, im) for re, im in self.base_points]


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-12
    max_iters: int = 50


@dataclass(frozen=True)
class BergmanConfig:
    radius: float = 1.0
    weight: str = "abs2(z)"
    m_list: tuple = (10, 20, 40)
    degree: int = 60
    quadrature: int = 256
    points: tuple = ((0.0, 0.0),)

    @property
    def points_complex(self):
        return [complex(re, im) for re, im in self.points]


@dataclass(frozen=True)
class VerifyConfig:
    identity_tol: float = 1e-8
    positivity_tol: float = 1e-10
    gap_tol: float = 1e-8


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "kaefam-out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    family: FamilyConfig
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    bergman: BergmanConfig = field(default_factory=BergmanConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return _listify(asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return _build(data)


_SECTIONS = {
    "grid": GridConfig,
    "family": FamilyConfig,
    "solver": SolverConfig,
    "bergman": BergmanConfig,
    "verify": VerifyConfig,
    "output": OutputConfig,
}


def _listify(obj):
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_listify(v) for v in obj]
    return obj


def _tupleify(obj):
    if isinstance(obj, list):
        return tuple(_tupleify(v) for v in obj)
    return obj


def _num(key, value, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{key}: must be finite")
    return float(value)


def _points(key, value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{key}: expected a non-empty list of [re, im] pairs")
    out = []
    for i, p in enumerate(value):
        if not isinstance(p, (list, tuple)) or len(p) != 2:
            raise ConfigError(f"{key}[{i}]: expected a [re, im] pair, got {p!r}")
        out.append((_num(f"{key}[{i}]", p[0]), _num(f"{key}[{i}]", p[1])))
    return tuple(out)


def _tolerance(key, value):
    v = _num(key, value)
    if not 0 < v < 1:
        raise ConfigError(f"{key}: tolerance must lie in (0, 1), got {v!r}")
    return v


def _section(name, cls, raw):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown key")
    return {k: _tupleify(v) for k, v in raw.items()}


def _build(data) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown section")
    if "family" not in data or "potential" not in (data.get("family") or {}):
        raise ConfigError("family.potential: required key is missing")

    g = _section("grid", GridConfig, data.get("grid"))
    grid = GridConfig(**g)
    res = _num("grid.resolution", grid.resolution, int)
    if res < 8 or res & (res - 1):
        raise ConfigError("grid.resolution: resolution must be a power of two (and >= 8)")
    tau_re = _num("grid.tau_re", grid.tau_re)
    tau_im = _num("grid.tau_im", grid.tau_im)
    if not tau_im > 0:
        raise ConfigError("grid.tau_im: Im τ must be positive")
    grid = GridConfig(res, tau_re, tau_im)

    f = _section("family", FamilyConfig, data.get("family"))
    family = FamilyConfig(**f)
    if not isinstance(family.potential, str):
        raise ConfigError("family.potential: expected a string")
    try:
        parse_potential(family.potential)
    except KaefamError as exc:
        raise ConfigError(f"family.potential: {exc}") from None
    if not isinstance(family.allow_non_psd, bool):
        raise ConfigError("family.allow_non_psd: expected true or false")
    eps = family.epsilon_list
    if not isinstance(eps, tuple) or not eps:
        raise ConfigError("family.epsilon_list: expected a non-empty list")
    eps = tuple(_num(f"family.epsilon_list[{i}]", e) for i, e in enumerate(eps))
    if any(e <= 0 for e in eps):
        raise ConfigError("family.epsilon_list: every epsilon must be positive")
    radius = _num("family.disk_radius", family.disk_radius)
    if not radius > 0:
        raise ConfigError("family.disk_radius: must be positive")
    points = _points("family.base_points", family.base_points)
    if any(math.hypot(*p) > radius for p in points):
        raise ConfigError("family.base_points: every base point must lie in the disk")
    family = FamilyConfig(
        potential=family.potential,
        H_tt=_num("family.H_tt", family.H_tt),
        H_zz=_num("family.H_zz", family.H_zz),
        H_tz_re=_num("family.H_tz_re", family.H_tz_re),
        H_tz_im=_num("family.H_tz_im", family.H_tz_im),
        base_points=points,
        epsilon_list=eps,
        disk_radius=radius,
        psd_tol=_tolerance("family.psd_tol", family.psd_tol),
        allow_non_psd=family.allow_non_psd,
    )
    try:
        family.background
    except KaefamError as exc:
        raise ConfigError(f"family.H: {exc}") from None

    s = SolverConfig(**_section("solver", SolverConfig, data.get("solver")))
    solver = SolverConfig(
        tol=_tolerance("solver.tol", s.tol),
        max_iters=_num("solver.max_iters", s.max_iters, int),
    )
    if solver.max_iters < 1:
        raise ConfigError("solver.max_iters: must be at least 1")

    b = BergmanConfig(**_section("bergman", BergmanConfig, data.get("bergman")))
    if not isinstance(b.weight, str):
        raise ConfigError("bergman.weight: expected a string")
    try:
        parse_potential(b.weight, "z", allow_modes=False)
    except KaefamError as exc:
        raise ConfigError(f"bergman.weight: {exc}") from None
    m_list = b.m_list
    if not isinstance(m_list, tuple) or not m_list:
        raise ConfigError("bergman.m_list: expected a non-empty list")
    m_list = tuple(_num(f"bergman.m_list[{i}]", m, int) for i, m in enumerate(m_list))
    if any(m < 1 for m in m_list) or list(m_list) != sorted(m_list):
        raise ConfigError("bergman.m_list: must be positive and increasing")
    bradius = _num("bergman.radius", b.radius)
    if not bradius > 0:
        raise ConfigError("bergman.radius: must be positive")
    bpoints = _points("bergman.points", b.points)
    if any(math.hypot(*p) >= bradius for p in bpoints):
        raise ConfigError("bergman.points: every point must lie inside the chart disk")
    bergman = BergmanConfig(
        radius=bradius,
        weight=b.weight,
        m_list=m_list,
        degree=_num("bergman.degree", b.degree, int),
        quadrature=_num("bergman.quadrature", b.quadrature, int),
        points=bpoints,
    )
    if bergman.degree < 0:
        raise ConfigError("bergman.degree: must be non-negative")
    if bergman.quadrature < 4:
        raise ConfigError("bergman.quadrature: must be at least 4")

    v = VerifyConfig(**_section("verify", VerifyConfig, data.get("verify")))
    verify = VerifyConfig(
        identity_tol=_tolerance("verify.identity_tol", v.identity_tol),
        positivity_tol=_tolerance("verify.positivity_tol", v.positivity_tol),
        gap_tol=_tolerance("verify.gap_tol", v.gap_tol),
    )

    o = OutputConfig(**_section("output", OutputConfig, data.get("output")))
    if not isinstance(o.directory, str) or not o.directory:
        raise ConfigError("output.directory: expected a non-empty string")
    formats = o.formats if isinstance(o.formats, tuple) else (o.formats,)
    bad = [x for x in formats if x not in FORMATS]
    if bad:
        raise ConfigError(f"output.formats: unknown format {bad[0]!r}; expected {FORMATS}")
    output = OutputConfig(o.directory, tuple(formats))

    return RunConfig(family, grid, solver, bergman, verify, output)


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` overrides; values are parsed as JSON when possible."""
    data = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"override {key!r}: expected section.key")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        section = data.setdefault(parts[0], {})
        if not isinstance(section, dict):
            raise ConfigError(f"{parts[0]}: expected an object")
        section[parts[1]] = value
    return data


def load_config(path, overrides=()):
    """Read, override and validate a config file.

    Returns ``(config, raw_bytes)``; the bytes feed the manifest hash.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config: invalid JSON: {exc}") from None
    return _build(apply_overrides(data, overrides)), raw
