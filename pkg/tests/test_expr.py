import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CORPUS, RE_FAMILY
from oracles import re_family_beta_eigmin_scan
from kaefam import BackgroundForm, ParseError, SemiPositivityViolation, TorusGrid
from kaefam.expr import (
    Abs2T,
    CosMode,
    Const,
    ImT,
    Product,
    ReT,
    Scale,
    SinMode,
    Sum,
    TwistForm,
    check_semipositive,
    differentiate,
    eval_beta,
    evaluate,
    parse_potential,
    polar_base_samples,
    to_string,
)

PI = math.pi


# ---------------------------------------------------------------- parsing


def test_parse_literal():
    assert parse_potential("1") == Const(1)


def test_parse_abs2_evaluates_modulus_squared():
    e = parse_potential("abs2(t)")
    assert evaluate(e, t=2 + 1j) == pytest.approx(5)


def test_parse_product_structure():
    e = parse_potential("0.1*re(t)*cosm(1,0)")
    assert e == Product(Scale(0.1), ReT(), CosMode(1, 0))


@pytest.mark.parametrize("text", ["x + 1", "2*y", "z", "cosm(1,0) + zbar"])
def test_bare_fiber_variable_rejected(text):
    with pytest.raises(ParseError, match="bare fiber variable"):
        parse_potential(text)


@pytest.mark.parametrize("text", ["cosm(1.5,0)", "sinm(1,0.5)", "cosm(a,1)"])
def test_non_integer_mode_rejected(text):
    with pytest.raises(ParseError, match="integer"):
        parse_potential(text)


def test_syntax_error_reports_position():
    with pytest.raises(ParseError) as info:
        parse_potential("1 + * re(t)")
    assert info.value.position == 4


def test_unclosed_parenthesis():
    with pytest.raises(ParseError) as info:
        parse_potential("(1 + re(t)")
    assert info.value.position == len("(1 + re(t)")


def test_product_of_two_fiber_factors_rejected():
    with pytest.raises(ParseError, match="fiber-dependent"):
        parse_potential("cosm(1,0)*sinm(0,1)")


def test_bare_base_variable_rejected():
    with pytest.raises(ParseError, match="bare variable"):
        parse_potential("t + 1")


def test_subtraction_left_associates():
    e = parse_potential("1 - 2 - 3")
    assert evaluate(e) == pytest.approx(-4)


def test_round_trip_through_to_string():
    for entry in CORPUS:
        e = parse_potential(entry.potential)
        assert parse_potential(to_string(e)) == e


def test_parse_is_deterministic():
    text = "0.3*abs2(t)*sinm(2,-1) - (im(t) + 1)*cosm(0,3)"
    assert parse_potential(text) == parse_potential(text)


# ---------------------------------------------------------- differentiation


def test_ddbar_of_cos_mode():
    e = differentiate(differentiate(CosMode(1, 0), "z"), "zbar")
    x = np.linspace(0, 1, 17)
    assert np.allclose(evaluate(e, x=x), -PI**2 * np.cos(2 * PI * x), atol=1e-14)


def test_ttbar_of_abs2():
    assert differentiate(differentiate(Abs2T(), "t"), "tbar") == Const(1)


def test_dz_of_sin_mode():
    e = differentiate(SinMode(0, 1), "z")
    y = np.linspace(0, 1, 17)
    assert np.allclose(evaluate(e, y=y), -1j * PI * np.cos(2 * PI * y), atol=1e-14)


def test_wirtinger_base_rules():
    assert differentiate(ReT(), "t") == Const(0.5)
    assert evaluate(differentiate(ImT(), "t")) == pytest.approx(1 / 2j)
    t = 0.3 - 0.7j
    assert evaluate(differentiate(Abs2T(), "t"), t=t) == pytest.approx(t.conjugate())


def test_invalid_modulus():
    with pytest.raises(ValueError):
        differentiate(CosMode(1, 0), "z", tau=1 - 1j)


def _fiber_point(x, y, tau):
    return x + tau * y


def _xy_from_z(z, tau):
    y = z.imag / tau.imag
    return z.real - tau.real * y, y


def _fd_z(e, t, x, y, tau, h=1e-5):
    """Central differences of ``e`` in Re z and Im z, combined into d/dz and d/dzbar."""
    z = _fiber_point(x, y, tau)

    def f(zz):
        xx, yy = _xy_from_z(zz, tau)
        return evaluate(e, t=t, x=xx, y=yy)

    return _wirtinger(f, z, h)


def _fd_t(e, t, x, y, h=1e-5):
    return _wirtinger(lambda s: evaluate(e, t=s, x=x, y=y), t, h)


def _central(f, a, step):
    # fourth-order central stencil; the second-order one loses ~h^2 k^2 / 6
    # on the higher corpus modes
    h = abs(step)
    return (8 * (f(a + step) - f(a - step)) - (f(a + 2 * step) - f(a - 2 * step))) / (12 * h)


def _wirtinger(f, a, h):
    d_re = _central(f, a, h)
    d_im = _central(f, a, 1j * h)
    return 0.5 * (d_re - 1j * d_im), 0.5 * (d_re + 1j * d_im)


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300)


def _corpus_trees():
    trees = []
    for entry in CORPUS:
        phi = parse_potential(entry.potential)
        trees.append((phi, entry.tau))
        derived = TwistForm(phi, BackgroundForm(), entry.tau)._derived
        trees.extend((derived[k], entry.tau) for k in ("tz", "zz", "dt_zz"))
    return [(e, tau) for e, tau in trees if not isinstance(e, (Const, Scale))]


@pytest.mark.parametrize("tree,tau", _corpus_trees())
def test_symbolic_matches_central_differences(tree, tau):
    rng = np.random.default_rng(7)
    x, y = rng.random(100), rng.random(100)
    t = 0.5 * (rng.random(100) - 0.5) + 0.5j * (rng.random(100) - 0.5)
    fd_dz, fd_dzbar = _fd_z(tree, t, x, y, tau)
    fd_dt, fd_dtbar = _fd_t(tree, t, x, y)
    for which, fd in (("z", fd_dz), ("zbar", fd_dzbar), ("t", fd_dt), ("tbar", fd_dtbar)):
        sym = evaluate(differentiate(tree, which, tau), t=t, x=x, y=y)
        if np.max(np.abs(sym)) == 0:
            assert np.max(np.abs(fd)) < 1e-9
        else:
            assert _rel(fd, sym) <= 1e-8, which


def test_conjugation_symmetry_on_corpus():
    rng = np.random.default_rng(3)
    x, y = rng.random(50), rng.random(50)
    t = 0.3 * rng.standard_normal(50) + 0.3j * rng.standard_normal(50)
    for entry in CORPUS:
        e = parse_potential(entry.potential)
        for a, b in (("z", "zbar"), ("t", "tbar")):
            da = evaluate(differentiate(e, a, entry.tau), t=t, x=x, y=y)
            db = evaluate(differentiate(e, b, entry.tau), t=t, x=x, y=y)
            assert np.allclose(db, np.conj(da), atol=1e-14)


mode_ints = st.integers(min_value=-6, max_value=6)


@settings(max_examples=60, deadline=None)
@given(m=mode_ints, n=mode_ints, tre=st.floats(-1, 1), tim=st.floats(-1, 1))
def test_grid_fields_are_exactly_periodic(m, n, tre, tim):
    grid = TorusGrid(16, 0.2 + 1.1j)
    e = Sum(Product(ReT(), CosMode(m, n)), Product(Scale(0.5), ImT(), SinMode(n, m)))
    f = grid.evaluate(e, complex(tre, tim))
    # grid angles are reduced mod 2 pi in integer arithmetic: a shift by one
    # period in the mode numbers lands on identical samples
    g = grid.evaluate(
        Sum(Product(ReT(), CosMode(m + 16, n)), Product(Scale(0.5), ImT(), SinMode(n, m - 16))),
        complex(tre, tim),
    )
    assert np.array_equal(f, g)
    x, y = grid.xy
    shifted = evaluate(e, t=complex(tre, tim), x=x + 1, y=y + 1)
    assert np.max(np.abs(shifted - f)) < 1e-12


# --------------------------------------------------------------- beta fields


def test_eval_beta_flat():
    grid = TorusGrid(16)
    b = eval_beta(parse_potential("0"), BackgroundForm(), 0.3 + 0.1j, grid)
    assert np.all(b.tt == 1) and np.all(b.zz == 1)
    assert np.all(b.tz == 0) and np.all(b.dt_zz == 0)


def test_eval_beta_abs2():
    grid = TorusGrid(16)
    b = eval_beta(parse_potential("abs2(t)"), BackgroundForm(), -0.4j, grid)
    assert np.allclose(b.tt, 2) and np.allclose(b.zz, 1) and np.allclose(b.tz, 0)


def test_eval_beta_re_family():
    grid = TorusGrid(32)
    x, _ = grid.xy
    b = eval_beta(parse_potential(RE_FAMILY), BackgroundForm(), 0j, grid)
    assert np.max(np.abs(b.zz - 1)) < 1e-15
    assert np.max(np.abs(b.tz + 0.05 * PI * np.sin(2 * PI * x))) < 1e-15
    assert np.max(np.abs(b.dt_zz + 0.05 * PI**2 * np.cos(2 * PI * x))) < 1e-15


def test_beta_is_hermitian_on_corpus():
    for entry in CORPUS:
        fam = entry.family(N=16)
        for t in entry.base_points:
            b = fam.beta(t)
            assert np.isrealobj(b.tt) and np.isrealobj(b.zz)
            assert np.array_equal(b.zt, np.conj(b.tz))
            m = np.stack([[b.tt, b.tz], [b.zt, b.zz]])
            assert np.allclose(m, np.conj(np.swapaxes(m, 0, 1)), atol=0)


def test_background_form_rejects_indefinite():
    with pytest.raises(SemiPositivityViolation):
        BackgroundForm(1.0, 1.0, 2.0)


def test_semipositive_flat():
    grid = TorusGrid(16)
    rep = check_semipositive(parse_potential("0"), BackgroundForm(), [0j, 0.5], grid)
    assert rep.min_eigenvalue == pytest.approx(1) and rep.ok


def test_semipositive_degenerate_is_admissible():
    grid = TorusGrid(16)
    rep = check_semipositive(parse_potential("0"), BackgroundForm(0, 1), [0j], grid)
    assert rep.min_eigenvalue == pytest.approx(0, abs=1e-15) and rep.ok


# Dense scan of the hand-derived eigenvalue formula, 4001 x 2001 samples
RE_FAMILY_EIGMIN = 0.5065197799455321


def test_semipositive_re_family_matches_dense_scan():
    assert re_family_beta_eigmin_scan() == pytest.approx(RE_FAMILY_EIGMIN, abs=1e-12)
    grid = TorusGrid(64)
    samples = polar_base_samples(0.5, n_radial=3, n_angular=5)
    assert len(samples) == 16
    rep = check_semipositive(parse_potential(RE_FAMILY), BackgroundForm(), samples, grid)
    assert rep.min_eigenvalue == pytest.approx(RE_FAMILY_EIGMIN, abs=1e-12)
    assert rep.argmin_t == pytest.approx(0.5)


def test_semipositive_flags_violation():
    grid = TorusGrid(16)
    rep = check_semipositive(parse_potential("0.5*re(t)*cosm(1,0)"), BackgroundForm(), [0.9], grid)
    assert not rep.ok and rep.min_eigenvalue < 0
