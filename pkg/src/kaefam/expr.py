"""Twist potentials: a small expression language with exact Wirtinger derivatives.

A twist form on ``D x T`` is ``beta = H + i ddbar Phi`` where ``H`` is a constant
Hermitian matrix and ``Phi`` is a potential built from

    re(t)  im(t)  abs2(t)  cosm(m,n)  sinm(m,n)  real literals  + - *  ( )

with ``cosm(m,n) = cos(2 pi (m x + n y))`` in lattice coordinates of the fiber
``C / (Z + tau Z)``, ``z = x + tau y``.  Products may contain at most one
fiber-dependent factor.  Derivatives are produced symbolically, so every
coefficient of ``beta`` and its ``t``-derivatives is exact.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np

from .errors import ParseError, SemiPositivityViolation

Number = Union[int, float, complex]

DERIVATIVES = ("t", "tbar", "z", "zbar")


# --------------------------------------------------------------------------
# Expression nodes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: Number


@dataclass(frozen=True)
class Scale:
    """Numeric factor inside a ``Product``."""

    value: Number


@dataclass(frozen=True)
class ReT:
    pass


@dataclass(frozen=True)
class ImT:
    pass


@dataclass(frozen=True)
class Abs2T:
    pass


@dataclass(frozen=True)
class T:
    """``t`` itself; only produced by differentiation of ``abs2``."""


@dataclass(frozen=True)
class TBar:
    """``conj(t)``; only produced by differentiation of ``abs2``."""


@dataclass(frozen=True)
class CosMode:
    m: int
    n: int


@dataclass(frozen=True)
class SinMode:
    m: int
    n: int


@dataclass(frozen=True)
class Sum:
    terms: tuple

    def __init__(self, *terms):
        if len(terms) == 1 and isinstance(terms[0], tuple):
            terms = terms[0]
        object.__setattr__(self, "terms", tuple(terms))


@dataclass(frozen=True)
class Product:
    factors: tuple

    def __init__(self, *factors):
        if len(factors) == 1 and isinstance(factors[0], tuple):
            factors = factors[0]
        object.__setattr__(self, "factors", tuple(factors))


PotentialExpr = Union[Const, Scale, ReT, ImT, Abs2T, T, TBar, CosMode, SinMode, Sum, Product]

_NUMERIC = (Const, Scale)
_BASE_LEAVES = (ReT, ImT, Abs2T, T, TBar)
_MODES = (CosMode, SinMode)


def is_zero(e) -> bool:
    return isinstance(e, _NUMERIC) and e.value == 0


def depends_on_fiber(e) -> bool:
    if isinstance(e, _MODES):
        return True
    if isinstance(e, Sum):
        return any(depends_on_fiber(s) for s in e.terms)
    if isinstance(e, Product):
        return any(depends_on_fiber(f) for f in e.factors)
    return False


def add(*terms):
    """Flattened sum with zero terms dropped and constants folded."""
    flat = []
    const = 0
    for term in terms:
        parts = term.terms if isinstance(term, Sum) else (term,)
        for p in parts:
            if isinstance(p, _NUMERIC):
                const += p.value
            else:
                flat.append(p)
    if const != 0:
        flat.append(Const(const))
    if not flat:
        return Const(0)
    if len(flat) == 1:
        return flat[0]
    return Sum(tuple(flat))


def mul(*factors):
    """Flattened product; numeric factors merge into a single leading ``Scale``."""
    coeff = 1
    flat = []
    for factor in factors:
        parts = factor.factors if isinstance(factor, Product) else (factor,)
        for p in parts:
            if isinstance(p, _NUMERIC):
                coeff *= p.value
            else:
                flat.append(p)
    if coeff == 0:
        return Const(0)
    if not flat:
        return Const(coeff)
    if coeff == 1:
        return flat[0] if len(flat) == 1 else Product(tuple(flat))
    return Product((Scale(coeff),) + tuple(flat))


def to_string(e) -> str:
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Scale):
        return _fmt_number(e.value)
    if isinstance(e, ReT):
        return "re(t)"
    if isinstance(e, ImT):
        return "im(t)"
    if isinstance(e, Abs2T):
        return "abs2(t)"
    if isinstance(e, T):
        return "t"
    if isinstance(e, TBar):
        return "conj(t)"
    if isinstance(e, CosMode):
        return f"cosm({e.m},{e.n})"
    if isinstance(e, SinMode):
        return f"sinm({e.m},{e.n})"
    if isinstance(e, Sum):
        return " + ".join(to_string(s) for s in e.terms)
    if isinstance(e, Product):
        return "*".join(
            f"({to_string(f)})" if isinstance(f, Sum) else to_string(f) for f in e.factors
        )
    raise TypeError(f"not an expression node: {e!r}")


def _fmt_number(v) -> str:
    if isinstance(v, complex):
        if v.imag == 0:
            v = v.real
        else:
            return f"({v.real!r}{v.imag:+}j)"
    return repr(v) if not isinstance(v, int) else str(v)


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*(),]))"
)

_FIBER_VARS = {"x", "y", "z", "zbar"}


def _tokenize(text):
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        mt = _TOKEN_RE.match(text, pos)
        if mt is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ParseError(f"unexpected character {text[start]!r}", start)
        kind = mt.lastgroup
        start = mt.start(kind)
        tokens.append((kind, mt.group(kind), start))
        pos = mt.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, base_var, allow_modes):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.base_var = base_var
        self.allow_modes = allow_modes
        self.fiber_vars = (_FIBER_VARS | {"t"}) - {base_var}

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", pos)

    def parse(self):
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return e

    def expr(self):
        e = self.term()
        while self.peek()[1] in ("+", "-"):
            _, op, _ = self.take()
            rhs = self.term()
            e = add(e, rhs if op == "+" else mul(Scale(-1), rhs))
        return e

    def term(self):
        factors = [self.factor()]
        fiber_count = int(depends_on_fiber(factors[0]))
        while self.peek()[1] == "*":
            _, _, pos = self.take()
            f = self.factor()
            if depends_on_fiber(f):
                fiber_count += 1
                if fiber_count > 1:
                    raise ParseError(
                        "product of two fiber-dependent factors is not allowed", pos
                    )
            factors.append(f)
        return mul(*factors)

    def factor(self):
        kind, val, pos = self.peek()
        if val == "-":
            self.take()
            return mul(Scale(-1), self.factor())
        if val == "+":
            self.take()
            return self.factor()
        if kind == "num":
            self.take()
            v = float(val)
            return Const(int(v) if v.is_integer() and re.fullmatch(r"\d+", val) else v)
        if val == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if kind == "name":
            return self.call()
        if kind == "end":
            raise ParseError("unexpected end of input", pos)
        raise ParseError(f"unexpected token {val!r}", pos)

    def call(self):
        kind, name, pos = self.take()
        if name in self.fiber_vars:
            raise ParseError(f"bare fiber variable {name!r} is not allowed", pos)
        if name == self.base_var:
            raise ParseError(
                f"bare variable {name!r}; use re({name}), im({name}) or abs2({name})", pos
            )
        if name in ("re", "im", "abs2"):
            self.expect("(")
            k, arg, apos = self.take()
            if arg != self.base_var:
                raise ParseError(f"{name}() takes the variable {self.base_var!r}", apos)
            self.expect(")")
            return {"re": ReT(), "im": ImT(), "abs2": Abs2T()}[name]
        if name in ("cosm", "sinm"):
            if not self.allow_modes:
                raise ParseError(f"{name}() is not available in this context", pos)
            self.expect("(")
            m = self.integer()
            self.expect(",")
            n = self.integer()
            self.expect(")")
            return CosMode(m, n) if name == "cosm" else SinMode(m, n)
        raise ParseError(f"unknown name {name!r}", pos)

    def integer(self):
        sign = 1
        if self.peek()[1] in ("-", "+"):
            sign = -1 if self.take()[1] == "-" else 1
        kind, val, pos = self.take()
        if kind != "num" or not re.fullmatch(r"\d+", val):
            raise ParseError(f"mode index must be an integer, found {val!r}", pos)
        return sign * int(val)


def parse_potential(text: str, base_var: str = "t", allow_modes: bool = True):
    """Parse a potential string into an expression tree.

    ``base_var`` names the variable accepted by ``re``, ``im`` and ``abs2``.  Chart
    weights for the Bergman module use ``base_var="z", allow_modes=False``.
    """
    return _Parser(text, base_var, allow_modes).parse()


# --------------------------------------------------------------------------
# Differentiation
# --------------------------------------------------------------------------


def fiber_chain_factors(tau: complex):
    """Return ``(dx/dz, dy/dz)`` for ``z = x + tau*y``."""
    tau = complex(tau)
    if not tau.imag > 0:
        raise ValueError("Im tau must be positive")
    tb = tau.conjugate()
    return tb / (tb - tau), 1 / (tau - tb)


def differentiate(e, which: str, tau: complex = 1j):
    """Exact Wirtinger derivative of ``e`` in one of ``t, tbar, z, zbar``."""
    if which not in DERIVATIVES:
        raise ValueError(f"unknown derivative {which!r}; expected one of {DERIVATIVES}")
    dxdz, dydz = fiber_chain_factors(tau)
    if which == "zbar":
        dxdz, dydz = dxdz.conjugate(), dydz.conjugate()
    return _diff(e, which, dxdz, dydz)


def _diff(e, which, dxdz, dydz):
    if isinstance(e, _NUMERIC):
        return Const(0)
    if isinstance(e, _BASE_LEAVES):
        if which in ("z", "zbar"):
            return Const(0)
        holo = which == "t"
        if isinstance(e, ReT):
            return Const(0.5)
        if isinstance(e, ImT):
            return Const(-0.5j if holo else 0.5j)
        if isinstance(e, Abs2T):
            return TBar() if holo else T()
        if isinstance(e, T):
            return Const(1 if holo else 0)
        return Const(0 if holo else 1)
    if isinstance(e, _MODES):
        if which in ("t", "tbar"):
            return Const(0)
        k = 2 * math.pi * (e.m * dxdz + e.n * dydz)
        if k == 0:
            return Const(0)
        if isinstance(e, CosMode):
            return mul(Scale(-k), SinMode(e.m, e.n))
        return mul(Scale(k), CosMode(e.m, e.n))
    if isinstance(e, Sum):
        return add(*(_diff(s, which, dxdz, dydz) for s in e.terms))
    if isinstance(e, Product):
        terms = []
        for i, f in enumerate(e.factors):
            df = _diff(f, which, dxdz, dydz)
            if not is_zero(df):
                terms.append(mul(*e.factors[:i], df, *e.factors[i + 1 :]))
        return add(*terms)
    raise TypeError(f"not an expression node: {e!r}")


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------


def evaluate(e, t=0.0, x=0.0, y=0.0, angle: Callable[[int, int], np.ndarray] | None = None):
    """Evaluate ``e`` with numpy broadcasting over ``t``, ``x``, ``y``.

    ``angle(m, n)`` may be supplied to override ``2*pi*(m*x + n*y)``; grids use it
    to make mode evaluation exactly periodic.
    """
    t = np.asarray(t, dtype=complex)
    if angle is None:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)

        def angle(m, n):
            return 2 * np.pi * (m * x + n * y)

    cache = {}

    def mode_angle(m, n):
        if (m, n) not in cache:
            cache[(m, n)] = angle(m, n)
        return cache[(m, n)]

    def ev(node):
        if isinstance(node, _NUMERIC):
            return complex(node.value)
        if isinstance(node, ReT):
            return t.real + 0j
        if isinstance(node, ImT):
            return t.imag + 0j
        if isinstance(node, Abs2T):
            return (t * t.conj()).real + 0j
        if isinstance(node, T):
            return t
        if isinstance(node, TBar):
            return t.conj()
        if isinstance(node, CosMode):
            return np.cos(mode_angle(node.m, node.n)) + 0j
        if isinstance(node, SinMode):
            return np.sin(mode_angle(node.m, node.n)) + 0j
        if isinstance(node, Sum):
            out = 0j
            for s in node.terms:
                out = out + ev(s)
            return out
        if isinstance(node, Product):
            out = 1 + 0j
            for f in node.factors:
                out = out * ev(f)
            return out
        raise TypeError(f"not an expression node: {node!r}")

    return np.asarray(ev(e), dtype=complex)


# --------------------------------------------------------------------------
# Twist form beta = H + i ddbar Phi
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BackgroundForm:
    """Constant Hermitian matrix ``[[H_tt, H_tz], [conj(H_tz), H_zz]]``."""

    tt: float = 1.0
    zz: float = 1.0
    tz: complex = 0j
    psd_tol: float = 1e-10

    def __post_init__(self):
        vals = (self.tt, self.zz, complex(self.tz).real, complex(self.tz).imag)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("background form entries must be finite")
        object.__setattr__(self, "tt", float(self.tt))
        object.__setattr__(self, "zz", float(self.zz))
        object.__setattr__(self, "tz", complex(self.tz))
        if self.min_eigenvalue() < -self.psd_tol:
            raise SemiPositivityViolation(
                f"background form is not positive semidefinite "
                f"(min eigenvalue {self.min_eigenvalue():.3e})"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.tt, self.tz], [self.tz.conjugate(), self.zz]], dtype=complex)

    def min_eigenvalue(self) -> float:
        return float(hermitian_eigmin(self.tt, self.tz, self.zz))

    def scaled(self, eps: float) -> "BackgroundForm":
        return BackgroundForm(eps * self.tt, eps * self.zz, eps * self.tz, self.psd_tol)


def hermitian_eigmin(a, b, d):
    """Smaller eigenvalue of ``[[a, b], [conj(b), d]]`` for real ``a, d``, elementwise."""
    a = np.real(a)
    d = np.real(d)
    half_gap = 0.5 * (a - d)
    return 0.5 * (a + d) - np.sqrt(half_gap * half_gap + np.abs(b) ** 2)


@dataclass(frozen=True)
class BetaEval:
    """Coefficients of the twist form on one fiber ``{t} x T``."""

    t: complex
    tt: np.ndarray
    tz: np.ndarray
    zz: np.ndarray
    dt_zz: np.ndarray
    dtdtbar_zz: np.ndarray

    @property
    def zt(self) -> np.ndarray:
        return np.conj(self.tz)

    def min_eigenvalue(self) -> float:
        return float(np.min(hermitian_eigmin(self.tt, self.tz, self.zz)))


@dataclass(frozen=True)
class TwistForm:
    """``beta = H + i ddbar Phi`` with the needed derivative trees precomputed."""

    potential: object
    H: BackgroundForm
    tau: complex = 1j
    _derived: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        phi = self.potential
        tau = complex(self.tau)
        phi_t = differentiate(phi, "t", tau)
        phi_z = differentiate(phi, "z", tau)
        zz = differentiate(phi_z, "zbar", tau)
        dt_zz = differentiate(zz, "t", tau)
        derived = {
            "tt": differentiate(phi_t, "tbar", tau),
            "tz": differentiate(phi_t, "zbar", tau),
            "zz": zz,
            "dt_zz": dt_zz,
            "dtdtbar_zz": differentiate(dt_zz, "tbar", tau),
        }
        object.__setattr__(self, "_derived", derived)

    @classmethod
    def from_text(cls, text: str, H: BackgroundForm | None = None, tau: complex = 1j):
        return cls(parse_potential(text), H if H is not None else BackgroundForm(), tau)

    def scaled(self, eps: float) -> "TwistForm":
        return TwistForm(mul(Scale(eps), self.potential), self.H.scaled(eps), self.tau)

    def evaluate(self, t: complex, grid) -> BetaEval:
        if complex(grid.tau) != complex(self.tau):
            raise ValueError("grid modulus differs from the twist form modulus")
        d = self._derived
        t = complex(t)

        def ev(name):
            return grid.evaluate(d[name], t)

        return BetaEval(
            t=t,
            tt=self.H.tt + ev("tt").real,
            tz=self.H.tz + ev("tz"),
            zz=self.H.zz + ev("zz").real,
            dt_zz=ev("dt_zz"),
            dtdtbar_zz=ev("dtdtbar_zz").real,
        )


def eval_beta(phi, H: BackgroundForm, t: complex, grid) -> BetaEval:
    """Sample ``beta`` and the ``t``-derivatives of ``beta_zzbar`` on ``grid``."""
    return TwistForm(phi, H, grid.tau).evaluate(t, grid)


@dataclass(frozen=True)
class SemipositivityReport:
    min_eigenvalue: float
    argmin_t: complex
    psd_tol: float

    @property
    def ok(self) -> bool:
        return self.min_eigenvalue >= -self.psd_tol


def check_semipositive(
    phi, H: BackgroundForm, base_samples: Iterable[complex], grid, psd_tol: float = 1e-10
) -> SemipositivityReport:
    """Sampled minimum of the smaller eigenvalue of ``beta`` over base points and grid."""
    form = phi if isinstance(phi, TwistForm) else TwistForm(phi, H, grid.tau)
    best = math.inf
    best_t = 0j
    for t in base_samples:
        lam = form.evaluate(t, grid).min_eigenvalue()
        if lam < best:
            best, best_t = lam, complex(t)
    return SemipositivityReport(best, best_t, psd_tol)


def polar_base_samples(radius: float, n_radial: int = 4, n_angular: int = 4):
    """Centre plus ``n_radial`` rings of ``n_angular`` points, out to ``radius``."""
    pts = [0j]
    for i in range(1, n_radial + 1):
        r = radius * i / n_radial
        for k in range(n_angular):
            pts.append(cmath.rect(r, 2 * math.pi * k / n_angular))
    return pts
