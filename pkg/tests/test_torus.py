import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bessel_i0
from kaefam import TorusGrid, integrate, spectral_derivative
from kaefam.expr import fiber_chain_factors
from kaefam.torus import dealias

PI = math.pi
MODULI = (1j, 0.5 + 0.866j, -0.3 + 1.7j)


@pytest.mark.parametrize("N", [4, 12, 48, 0])
def test_resolution_must_be_power_of_two(N):
    with pytest.raises(ValueError, match="power of two"):
        TorusGrid(N)


def test_modulus_must_be_in_upper_half_plane():
    with pytest.raises(ValueError):
        TorusGrid(16, 1 - 0.5j)


def test_samples_and_area():
    grid = TorusGrid(8, 0.25 + 2j)
    x, y = grid.xy
    assert x[3, 5] == 3 / 8 and y[3, 5] == 5 / 8
    assert grid.area == 2.0
    assert grid.z[3, 5] == pytest.approx(3 / 8 + (0.25 + 2j) * 5 / 8)


def test_dz_of_plane_wave():
    grid = TorusGrid(32)
    x, _ = grid.xy
    f = np.exp(2j * PI * x)
    assert np.max(np.abs(grid.dz(f) - 1j * PI * f)) < 1e-13


def test_derivatives_of_constant_vanish():
    grid = TorusGrid(16, 0.2 + 0.9j)
    f = np.full(grid.shape, 3.7)
    for which in ("z", "zbar", "zzbar"):
        assert np.max(np.abs(spectral_derivative(f, which, grid))) < 1e-14


def test_laplace_of_cos_y():
    grid = TorusGrid(32)
    _, y = grid.xy
    f = np.cos(2 * PI * y)
    assert np.max(np.abs(grid.laplace(f) + PI**2 * f)) < 1e-12


def test_non_finite_rejected():
    grid = TorusGrid(8)
    f = np.zeros(grid.shape)
    f[1, 2] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        spectral_derivative(f, "z", grid)


@pytest.mark.parametrize("tau", MODULI)
@pytest.mark.parametrize("N", [16, 32])
def test_exact_on_modes(tau, N):
    grid = TorusGrid(N, tau)
    x, y = grid.xy
    dxdz, dydz = fiber_chain_factors(tau)
    for m in range(-N // 4, N // 4 + 1):
        for n in range(-N // 4, N // 4 + 1):
            f = np.exp(2j * PI * (m * x + n * y))
            s_z = 2j * PI * (m * dxdz + n * dydz)
            s_zbar = 2j * PI * (m * np.conj(dxdz) + n * np.conj(dydz))
            scale = max(abs(s_z), abs(s_zbar), 1.0)
            for which, s in (("z", s_z), ("zbar", s_zbar), ("zzbar", s_z * s_zbar)):
                err = np.max(np.abs(spectral_derivative(f, which, grid) - s * f))
                assert err <= 1e-13 * max(abs(s), 1.0) * scale, (m, n, which)


def test_integrate_examples():
    grid = TorusGrid(32)
    x, _ = grid.xy
    assert integrate(np.ones(grid.shape), grid) == pytest.approx(1, abs=1e-15)
    assert abs(integrate(np.cos(2 * PI * x), grid)) < 1e-15


# Bessel series oracle, evaluated independently of the quadrature
I0_ONE = 1.2660658777520082


def test_integrate_exp_cos_is_bessel_i0():
    assert bessel_i0(1.0) == pytest.approx(I0_ONE, abs=1e-15)
    grid = TorusGrid(32)
    x, _ = grid.xy
    assert integrate(np.exp(np.cos(2 * PI * x)), grid) == pytest.approx(I0_ONE, abs=1e-14)


def test_integrate_scales_with_area():
    grid = TorusGrid(16, 0.4 + 2.5j)
    assert integrate(np.ones(grid.shape), grid) == pytest.approx(2.5)


def _band_limited(seed, grid, band=5):
    rng = np.random.default_rng(seed)
    x, y = grid.xy
    f = np.zeros(grid.shape)
    for m in range(-band, band + 1):
        for n in range(-band, band + 1):
            a, b = rng.standard_normal(2) / (1 + m * m + n * n)
            f += a * np.cos(2 * PI * (m * x + n * y)) + b * np.sin(2 * PI * (m * x + n * y))
    return f


@settings(max_examples=25, deadline=None)
@given(seed_f=st.integers(0, 10**6), seed_g=st.integers(0, 10**6), k=st.sampled_from(range(3)))
def test_integration_by_parts(seed_f, seed_g, k):
    grid = TorusGrid(32, MODULI[k])
    f, g = _band_limited(seed_f, grid), _band_limited(seed_g, grid)
    lhs = integrate(f * grid.laplace(g), grid)
    rhs = integrate(g * grid.laplace(f), grid)
    assert abs(lhs - rhs) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.sampled_from(range(3)))
def test_mean_of_laplacian_vanishes(seed, k):
    grid = TorusGrid(32, MODULI[k])
    f = _band_limited(seed, grid)
    assert abs(integrate(grid.laplace(f), grid)) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), k=st.sampled_from(range(3)))
def test_laplacian_preserves_realness(seed, k):
    grid = TorusGrid(32, MODULI[k])
    f = _band_limited(seed, grid).astype(complex)
    out = spectral_derivative(f, "zzbar", grid)
    assert np.max(np.abs(out.imag)) <= 1e-12
    assert np.isrealobj(grid.laplace(f.real))


def test_dz_dzbar_compose_to_laplacian():
    grid = TorusGrid(32, 0.3 + 1.2j)
    f = _band_limited(1, grid)
    assert np.max(np.abs(grid.dz(grid.dzbar(f)) - grid.laplace(f))) < 1e-11


def test_dzbar_is_conjugate_of_dz_on_real_fields():
    grid = TorusGrid(32, -0.3 + 1.7j)
    f = _band_limited(2, grid)
    assert np.max(np.abs(grid.dzbar(f) - np.conj(grid.dz(f)))) < 1e-12


def test_dealias_keeps_low_band():
    grid = TorusGrid(32)
    x, y = grid.xy
    low = np.cos(2 * PI * (3 * x - 2 * y))
    high = np.cos(2 * PI * 14 * x)
    assert np.max(np.abs(dealias(low, grid) - low)) < 1e-14
    assert np.max(np.abs(dealias(high, grid))) < 1e-14
