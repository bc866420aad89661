import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import dawsn

from oscbath.errors import ContourPole, GridMismatch, PoleOutOfRange
from oscbath.radial import (RadialFn, inner, make_grid, oscillatory_integral, pv_excision,
                            pv_integral, shifted_l1)

GRID = make_grid(2000)


def test_grid_size_and_refine():
    assert GRID.n == 2000
    fine = GRID.refine()
    assert fine.n == 2 * GRID.n
    assert np.all(np.diff(fine.nodes) > 0)
    assert fine.nodes[0] > 0 and fine.nodes[-1] < GRID.r_max


def test_gaussian_moment():
    f = RadialFn.from_callable(GRID, lambda r: np.exp(-r * r / 2))
    assert inner(f, f).real == pytest.approx(math.pi**1.5, rel=1e-8)


def test_bump_inner_positive():
    f = RadialFn.from_callable(GRID, lambda r: np.exp(-((r - 3) ** 2) * 4))
    val = inner(f, f)
    assert val.real > 0 and val.imag == 0


coef = st.lists(st.floats(-3, 3, allow_nan=False), min_size=6, max_size=6)


@given(coef, coef)
@settings(max_examples=50, deadline=None)
def test_inner_hermitian(a, b):
    r = GRID.nodes
    f = RadialFn(GRID, (a[0] + 1j * a[1]) * np.exp(-r) + (a[2] + 1j * a[3]) * r * np.exp(-r * r)
                 + a[4] * np.exp(-a[5] ** 2 * r))
    g = RadialFn(GRID, (b[0] + 1j * b[1]) * np.exp(-r) + (b[2] + 1j * b[3]) * r * np.exp(-r * r)
                 + b[4] * np.exp(-b[5] ** 2 * r))
    assert inner(f, g) == pytest.approx(np.conj(inner(g, f)), rel=1e-12, abs=1e-12)


def test_grid_mismatch():
    f = RadialFn(GRID, np.ones(GRID.n))
    g = RadialFn(GRID.refine(), np.ones(2 * GRID.n))
    with pytest.raises(GridMismatch):
        inner(f, g)
    with pytest.raises(GridMismatch):
        RadialFn(GRID, np.ones(3))


def test_csv_roundtrip(tmp_path):
    f = RadialFn.from_callable(GRID, lambda r: np.exp(-r) * (1 + 2j))
    path = tmp_path / "f.csv"
    f.to_csv(path)
    g = RadialFn.from_csv(path, GRID)
    assert np.array_equal(f.values, g.values)
    with pytest.raises(GridMismatch):
        RadialFn.from_csv(path, GRID.refine())


def test_pv_constant_is_odd_about_pole():
    assert pv_integral(lambda r: np.ones_like(r), 1.3, 0.0, 2.6) == pytest.approx(0.0, abs=1e-13)


def test_pv_linear_closed_form():
    # r/(1-r) = -1 + 1/(1-r); the second part has zero PV on (0, 2)
    assert pv_integral(lambda r: r, 1.0, 0.0, 2.0) == pytest.approx(-2.0, abs=1e-13)


@pytest.mark.parametrize("s", [0.3, 1.0, 2.5])
def test_pv_gaussian_against_dawson(s):
    h = lambda r: np.exp(-r * r) * r
    # PV int_R exp(-r^2)/(s-r) dr = 2 sqrt(pi) dawsn(s)
    exact = -math.sqrt(math.pi) + s * 2 * math.sqrt(math.pi) * dawsn(s)
    assert pv_integral(h, s, -30, 30, n_panels=240) == pytest.approx(exact, abs=1e-12)


def test_pv_gaussian_against_excision():
    h = lambda r: np.exp(-r * r) * r
    ests = [pv_excision(h, 1.0, -30, 30, eps) for eps in (1e-2, 5e-3)]
    # the excised piece is -2 eps h'(s) + O(eps^3): one Richardson step
    extrap = 2 * ests[1] - ests[0]
    assert pv_integral(h, 1.0, -30, 30, n_panels=240) == pytest.approx(extrap, abs=1e-6)


def test_pv_vectorised_and_out_of_range():
    h = lambda r: np.exp(-r * r) * r
    poles = np.array([0.5, 1.0, 1.5])
    vec = pv_integral(h, poles, -30, 30)
    assert np.allclose(vec, [pv_integral(h, p, -30, 30) for p in poles], atol=1e-14)
    with pytest.raises(PoleOutOfRange):
        pv_integral(h, 40.0, -30, 30)


def gauss(z):
    return np.exp(-z * z / 2)


def test_oscillatory_fourier_transform():
    ts = np.array([0.0, 1.0, 3.0, 5.0])
    vals = oscillatory_integral(gauss, ts, 1.0)
    assert np.allclose(vals, math.sqrt(2 * math.pi) * np.exp(-ts**2 / 2), atol=1e-12)


def test_oscillatory_contour_independence():
    h = lambda z: gauss(z) * (1 + z * z)
    ts = np.array([1.0, 5.0, 10.0])
    a = oscillatory_integral(h, ts, 0.3)
    b = oscillatory_integral(h, ts, 0.6)
    assert np.max(np.abs(a - b)) < 1e-8


@pytest.mark.parametrize("t", [1.0, 5.0, 10.0])
def test_oscillatory_modulus_bound(t):
    h = lambda z: gauss(z) * (1 + z * z)
    kappa = 0.5
    assert abs(oscillatory_integral(h, t, kappa)) <= math.exp(-t * kappa) * shifted_l1(h, kappa) * (1 + 1e-12)


def test_pole_between_contours_detected():
    h = lambda z: gauss(z) / (z - (1 + 0.2j))
    with pytest.raises(ContourPole):
        oscillatory_integral(h, 2.0, 0.5, poles=(1 + 0.2j,))
    # a shift below the pole is fine
    oscillatory_integral(h, 2.0, 0.1, poles=(1 + 0.2j,))
