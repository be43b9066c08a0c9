"""Command line entry point: ``kaefam <command> --config <path>``.

Every run writes a bundle into the output directory: ``manifest.json`` (config
hash, echoed config, versions, file list), one CSV table, ``summary.json`` and,
on request, a plotting script.  Wall-clock timings go to ``timings.json`` so the
rest of the bundle is byte-identical across reruns of the same config.

Exit codes: 0 pass, 2 verification failure, 3 configuration error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bergman import BergmanChart, bergman_kernel_diag
from .config import COMMANDS, RunConfig, load_config
from .errors import ConfigError, KaefamError, SemiPositivityViolation
from .family import Family
from .solver import solve_fiber_ke
from .verify import epsilon_sweep, verify_family

log = logging.getLogger("kaefam")

EXIT_PASS = 0
EXIT_VERIFY = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

COLUMNS = {
    "solve": ("t_re", "t_im", "newton_iters", "residual_sup", "fiber_volume", "beta_volume"),
    "verify": (
        "t_re",
        "t_im",
        "min_c",
        "min_eig_rho",
        "residual_sup",
        "residual_l2",
        "ratio_35",
        "argmin_gap",
    ),
    "sweep": ("epsilon", "t_re", "t_im", "min_c", "min_eig_rho"),
    "bergman": ("m", "x_re", "x_im", "value", "abs_error"),
}


def fmt(value) -> str:
    """Fixed 17-significant-digit rendering; integers stay integers."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, ".17g")


def _json_value(value):
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else fmt(v)
    if isinstance(value, np.integer):
        return int(value)
    return value


def dump_json(obj) -> str:
    return json.dumps(_json_value(obj), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class ReportBundle:
    command: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    passed: bool = True
    timings: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.failures:
            return EXIT_NUMERIC
        return EXIT_PASS if self.passed else EXIT_VERIFY


def _family(config: RunConfig) -> Family:
    fam = config.family
    return Family.from_text(
        fam.potential,
        fam.background,
        N=config.grid.resolution,
        tau=config.grid.tau,
        disk_radius=fam.disk_radius,
        psd_tol=fam.psd_tol,
        allow_non_psd=fam.allow_non_psd,
    )


def _run_solve(config, bundle, workers):
    family = _family(config)
    points = config.family.base_points_complex
    family.require_semipositive(points)
    for i, t in enumerate(points):
        beta = family.beta(t)
        volume = float(family.grid.integrate(beta.zz))
        try:
            sol = solve_fiber_ke(
                beta.zz, family.grid, tol=config.solver.tol, max_iters=config.solver.max_iters
            )
        except KaefamError as exc:
            bundle.failures.append({"t": [t.real, t.imag], "error": str(exc)})
            bundle.rows.append((t.real, t.imag, 0, math.nan, math.nan, volume))
            continue
        bundle.rows.append(
            (t.real, t.imag, sol.newton_iters, sol.residual_sup, sol.fiber_volume, volume)
        )
        bundle.arrays[f"fields/psi_t{i:03d}.npy"] = sol.psi
    ok = [r for r in bundle.rows if not math.isnan(r[3])]
    bundle.summary = {
        "base_points": len(points),
        "max_residual_sup": max((r[3] for r in ok), default=math.nan),
        "max_volume_defect": max((abs(r[4] - r[5]) for r in ok), default=math.nan),
    }
    bundle.passed = all(r[3] <= config.solver.tol for r in ok)


def _run_verify(config, bundle, workers):
    family = _family(config)
    report = verify_family(
        family,
        config.family.base_points_complex,
        tol=config.solver.tol,
        max_iters=config.solver.max_iters,
        workers=workers,
    )
    for r in report.rows:
        bundle.rows.append(
            (
                r.t.real,
                r.t.imag,
                r.min_c,
                r.min_eig_rho,
                r.residual_sup,
                r.residual_l2,
                r.ratio_35,
                r.argmin_gap,
            )
        )
        if r.error:
            bundle.failures.append({"t": [r.t.real, r.t.imag], "error": r.error})
    v = config.verify
    checks = {
        "identity": report.identity_residual_sup <= v.identity_tol,
        "positivity": report.min_eig_rho >= -v.positivity_tol,
        "argmin_gap": report.argmin_bound_gap >= -v.gap_tol,
    }
    bundle.summary = {
        "identity_residual_sup": report.identity_residual_sup,
        "identity_residual_l2": report.identity_residual_l2,
        "min_c": report.min_c,
        "min_eig_rho": report.min_eig_rho,
        "argmin_bound_gap": report.argmin_bound_gap,
        "ratio_35": report.ratio_35,
        "ratio_35_degenerate_points": sum(r.degenerate_35 for r in report.rows),
        "checks": checks,
    }
    bundle.passed = all(checks.values())


def _run_sweep(config, bundle, workers):
    family = _family(config)
    points = config.family.base_points_complex
    family.require_semipositive(points)
    rows = epsilon_sweep(
        family,
        config.family.epsilon_list,
        points,
        tol=config.solver.tol,
        max_iters=config.solver.max_iters,
        workers=workers,
    )
    index = {t: i for i, t in enumerate(points)}
    for r in rows:
        bundle.rows.append((r.epsilon, r.t.real, r.t.imag, r.min_c, r.min_eig_rho))
        if r.error:
            bundle.failures.append({"epsilon": r.epsilon, "t": [r.t.real, r.t.imag], "error": r.error})
        else:
            bundle.arrays[f"certificates/psi_eps{fmt(r.epsilon)}_t{index[r.t]:03d}.npy"] = r.psi
    ok = [r for r in rows if r.error is None]
    per_eps = {}
    for r in ok:
        per_eps[r.epsilon] = min(per_eps.get(r.epsilon, math.inf), r.min_eig_rho)
    bundle.summary = {
        "min_eig_rho_by_epsilon": {fmt(e): per_eps[e] for e in sorted(per_eps, reverse=True)},
        "note": "the product total space has trivial relative canonical class; "
        "the certificate content is the positivity of rho_eps",
    }
    bundle.passed = all(r.min_eig_rho > -config.verify.positivity_tol for r in ok)


def _run_bergman(config, bundle, workers):
    b = config.bergman
    template = BergmanChart(b.radius, b.weight, b.m_list[0], b.degree, b.quadrature)
    points = b.points_complex
    sup_errors = []
    for m in b.m_list:
        chart = template.with_m(m)
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                values = bergman_kernel_diag(chart, points)
            for w in caught:
                log.warning("%s", w.message)
        except KaefamError as exc:
            bundle.failures.append({"m": m, "error": str(exc)})
            for p in points:
                bundle.rows.append((m, p.real, p.imag, math.nan, math.nan))
            continue
        taus = chart.tau(np.array(points))
        errs = np.abs(values - taus)
        for p, val, err in zip(points, values, errs):
            bundle.rows.append((m, p.real, p.imag, float(val), float(err)))
        sup_errors.append(float(np.max(errs)))
    decreasing = all(b2 < a for a, b2 in zip(sup_errors, sup_errors[1:]))
    bundle.summary = {
        "m_list": list(b.m_list),
        "sup_error_by_m": sup_errors,
        "error_decreasing": decreasing,
    }
    bundle.passed = decreasing


RUNNERS = {
    "solve": _run_solve,
    "verify": _run_verify,
    "sweep": _run_sweep,
    "bergman": _run_bergman,
}


def run_experiment(config: RunConfig, command: str, workers: int = 1) -> ReportBundle:
    """Execute one command; module failures become failure rows, not exceptions."""
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}; expected one of {COMMANDS}")
    bundle = ReportBundle(command)
    start = time.perf_counter()
    try:
        RUNNERS[command](config, bundle, workers)
    except SemiPositivityViolation as exc:
        # hypothesis not met: a verification failure, not a numerical one
        bundle.summary["hypothesis_violation"] = str(exc)
        bundle.passed = False
    except ConfigError:
        raise
    except KaefamError as exc:
        bundle.failures.append({"error": str(exc)})
        bundle.passed = False
    bundle.timings["total_seconds"] = time.perf_counter() - start
    bundle.summary["passed"] = bundle.passed and not bundle.failures
    bundle.summary["failures"] = bundle.failures
    return bundle


def _versions() -> dict:
    return {
        "kaefam": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


PLOT_TEMPLATE = '''"""Plot {command}.csv from this bundle (requires matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
with open(here / "{command}.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{x}"]) for r in rows]
y = [float(r["{y}"]) for r in rows]
plt.semilogy(x, [abs(v) for v in y], "o-") if {logy} else plt.plot(x, y, "o")
plt.xlabel("{x}")
plt.ylabel("{y}")
plt.title("{command}")
out = here / "{command}.png"
plt.savefig(out, dpi=150)
print(out, file=sys.stderr)
'''

PLOT_AXES = {
    "solve": ("t_re", "residual_sup", True),
    "verify": ("t_re", "min_c", False),
    "sweep": ("epsilon", "min_eig_rho", False),
    "bergman": ("m", "abs_error", True),
}


def write_bundle(bundle: ReportBundle, config: RunConfig, raw_config: bytes, out_dir, overrides=()):
    """Write all bundle files; returns the list of relative paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    formats = set(config.output.formats)
    files = {}
    if "csv" in formats:
        lines = [",".join(COLUMNS[bundle.command])]
        lines += [",".join(fmt(v) for v in row) for row in bundle.rows]
        files[f"{bundle.command}.csv"] = "\n".join(lines) + "\n"
    if "json" in formats:
        files["summary.json"] = dump_json(bundle.summary)
    if "plots" in formats:
        x, y, logy = PLOT_AXES[bundle.command]
        files[f"plot_{bundle.command}.py"] = PLOT_TEMPLATE.format(
            command=bundle.command, x=x, y=y, logy=logy
        )
    for rel, arr in sorted(bundle.arrays.items()):
        path = out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, np.ascontiguousarray(arr), allow_pickle=False)
    for rel, text in files.items():
        (out / rel).write_text(text, encoding="utf-8")
    listing = sorted(list(files) + list(bundle.arrays) + ["manifest.json", "timings.json"])
    manifest = {
        "command": bundle.command,
        "config_sha256": hashlib.sha256(raw_config).hexdigest(),
        "config": config.to_dict(),
        "overrides": list(overrides),
        "versions": _versions(),
        "files": listing,
        "passed": bundle.summary.get("passed", bundle.passed),
    }
    (out / "manifest.json").write_text(dump_json(manifest), encoding="utf-8")
    (out / "timings.json").write_text(dump_json(bundle.timings), encoding="utf-8")
    return listing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="kaefam",
        description="Fiberwise twisted Kähler-Einstein metrics on torus fibrations over a disk.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="path to the JSON run configuration")
    p.add_argument("--out", help="output directory (default: output.directory from the config)")
    p.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config entry, e.g. grid.resolution=32 (repeatable)",
    )
    p.add_argument("--workers", type=int, default=1, help="threads for independent work items")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config, raw = load_config(args.config, args.override)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bundle = run_experiment(config, args.command, workers=max(1, args.workers))
    out_dir = args.out or config.output.directory
    write_bundle(bundle, config, raw, out_dir, args.override)
    status = {EXIT_PASS: "PASS", EXIT_VERIFY: "FAIL", EXIT_NUMERIC: "NUMERICAL FAILURE"}
    print(f"{args.command}: {status[bundle.exit_code]} ({out_dir})")
    for f in bundle.failures:
        print(f"  failure: {f}", file=sys.stderr)
    return bundle.exit_code


if __name__ == "__main__":
    sys.exit(main())
