import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import eval_laguerre

from oscbath.equilibrium import (CorrelationSeries, ThermalState, contour_constant,
                                 decay_cross_section, default_kappa_shift, fit_decay_rate,
                                 gibbs_particle_char, omega_f, omega_interacting, three_point,
                                 three_point_series, weyl_product)
from oscbath.errors import DivergentThermalNorm, NoiseFloor
from oscbath.formfactor import FormFactor, ModelParams
from oscbath.radial import RadialFn, make_grid
from oscbath.spectral import d_plus
from oscbath.symplectic import TestFunction, make_analytic, particle_analytic, v_map

GRID = make_grid(2000)
STATE = ThermalState(1.0)


def gaussian_fn(grid=GRID, amp=1.0):
    return RadialFn(grid, amp * np.exp(-grid.nodes**2 / 2))


def test_omega_of_zero():
    assert omega_f(RadialFn(GRID, np.zeros(GRID.n)), STATE) == 1


@given(st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_omega_scaling(s):
    f = gaussian_fn()
    assert omega_f(f * s, STATE) == pytest.approx(omega_f(f, STATE).real ** (s * s), rel=1e-12)


def test_omega_against_quadrature():
    q = integrate.quad(lambda r: r * r * math.exp(-r * r) / math.tanh(r / 2), 0, 30, epsrel=1e-13)[0]
    assert omega_f(gaussian_fn(), STATE).real == pytest.approx(math.exp(-math.pi * q), rel=1e-8)


def test_divergent_thermal_norm():
    with pytest.raises(DivergentThermalNorm):
        omega_f(RadialFn(GRID, 1.0 / GRID.nodes), STATE)


def test_interacting_reductions(ops01, ops_free):
    assert omega_interacting(TestFunction.zero(ops01.grid), STATE, ops01) == 1
    f = gaussian_fn(ops_free.grid)
    assert omega_interacting(TestFunction(0j, f), STATE, ops_free) == pytest.approx(omega_f(f, STATE))


def test_interacting_particle_against_quadrature(params01, ops01):
    def integrand(r):
        return math.exp(-r * r) * 0.01 * r / (math.tanh(r / 2) * abs(d_plus(params01, r * r)) ** 2)

    q = integrate.quad(integrand, 0, 30, points=[1.0, 1.06], limit=400, epsrel=1e-11)[0]
    val = omega_interacting(TestFunction.particle(1.0, ops01.grid), STATE, ops01)
    assert val.real == pytest.approx(math.exp(-0.25 * 4 * math.pi * q), rel=1e-8)


def oscillator_eigen_sum(c, beta, levels=400):
    # thermal average of a displacement by |alpha|^2 = |c|^2 / 2 over E_n = n + 1/2
    x = abs(c) ** 2 / 2
    n = np.arange(levels)
    p = (1 - math.exp(-beta)) * np.exp(-beta * n)
    return float(np.sum(p * math.exp(-x / 2) * eval_laguerre(n, x)))


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_gibbs_free_oscillator(beta):
    p = ModelParams(FormFactor.gaussian(), beta, 0.0)
    assert gibbs_particle_char(0, p) == 1
    assert gibbs_particle_char(1.0, p).real == pytest.approx(oscillator_eigen_sum(1.0, beta), rel=1e-12)
    assert gibbs_particle_char(1.0, p).real == pytest.approx(math.exp(-0.25 / math.tanh(beta / 2)))


def test_gibbs_ground_state_limit():
    p = ModelParams(FormFactor.gaussian(), 200.0, 0.2)
    alpha = math.sqrt(1 + 0.04 * p.norm_sq)
    c = 0.5 + 0.3j
    cp2 = c.real**2 / alpha + c.imag**2 * alpha
    assert gibbs_particle_char(c, p).real == pytest.approx(math.exp(-cp2 / 4), rel=1e-12)


def test_three_point_kms_invariance(ops01):
    zero = TestFunction.zero(ops01.grid)
    f2 = TestFunction(0.5 + 0.2j, gaussian_fn(ops01.grid, 0.3))
    ts = np.linspace(0, 20, 41)
    vals = three_point(zero, f2, zero, ts, STATE, ops01)
    assert np.max(np.abs(vals - omega_interacting(f2, STATE, ops01))) < 1e-12


def test_three_point_at_zero_is_weyl_product(ops01, rng):
    from oscbath.symplectic import random_test_functions

    f1, f2, f3 = random_test_functions(ops01.grid, 3, rng)
    f1, f2, f3 = f1.scale(0.3), f2.scale(0.3), f3.scale(0.3)
    direct = weyl_product([v_map(x, ops01) for x in (f1, f2, f3)], STATE)
    assert abs(three_point(f1, f2, f3, 0.0, STATE, ops01) - direct) < 1e-14


def test_three_point_clusters(ops01):
    f1 = TestFunction.particle(0.3, ops01.grid)
    f2 = TestFunction.particle(1.0, ops01.grid)
    f3 = TestFunction.particle(0.1j, ops01.grid)
    # t = 300 is about ten decay times; much later the grid no longer resolves e^{itr}
    series = three_point_series(f1, f2, f3, [0.0, 300.0], STATE, ops01)
    assert series.deviation[1] < 1e-4 * series.deviation[0]


def test_generic_field_input_mixes(ops01):
    # a kinked profile has no analytic continuation; decay is not exponential but still occurs
    f2 = TestFunction(0j, RadialFn(ops01.grid, np.clip(1 - ops01.grid.nodes, 0, None)))
    zero = TestFunction.particle(0.5, ops01.grid)
    series = three_point_series(zero, f2, zero, np.array([0.0, 20.0, 80.0]), STATE, ops01)
    d = series.deviation
    assert d[2] < 0.05 * d[0] and d[1] < d[0]


def test_decay_cross_section_routes_agree(ops01):
    f = particle_analytic(1.0, ops01)
    g = particle_analytic(1j, ops01)
    out = decay_cross_section(f, g, np.array([0.0, 1.0, 5.0]), STATE, ops01)
    assert np.max(out["discrepancy"]) < 1e-6


@pytest.mark.parametrize("t", [2.0, 5.0, 10.0])
def test_decay_bound(ops01, t):
    f = particle_analytic(1.0, ops01)
    g = particle_analytic(1.0 + 0.5j, ops01)
    kappa = default_kappa_shift(ops01.spectral.kappa_hat, STATE.beta)
    c = contour_constant(f, g, STATE, kappa)
    out = decay_cross_section(f, g, t, STATE, ops01, kappa)
    assert abs(out["re_grid"][0]) <= c * math.exp(-kappa * t)


def test_decay_bound_imaginary_branch(ops01):
    f = particle_analytic(1.0, ops01)
    g = make_analytic(1.0, 0.0, lambda z: 1j * z * np.exp(-z * z / 2), ops01)
    kappa = default_kappa_shift(ops01.spectral.kappa_hat, STATE.beta)
    ts = np.array([0.0, 2.0, 5.0, 10.0])
    out = decay_cross_section(f, g, ts, STATE, ops01, kappa)
    assert np.max(out["discrepancy"]) < 1e-6
    r = np.linspace(-30, 30, 24001)
    z = r + 1j * kappa
    P = f.a * g.a * z**3 + f.b * g.b * z + 1j * (g.a * f.b - f.a * g.b) * z**2
    c_im = 0.5 * np.trapezoid(np.abs(P * 4 * np.pi * f.profile(-z) * g.profile(z)), r)
    assert np.all(np.abs(out["im_grid"]) <= c_im * np.exp(-kappa * ts))


def test_fit_synthetic():
    t = np.linspace(0, 20, 81)
    fit = fit_decay_rate((t, 2.0 * np.exp(-0.3 * t)))
    assert fit.rate == pytest.approx(0.3, abs=1e-6)
    assert fit.prefactor == pytest.approx(2.0)
    with pytest.raises(NoiseFloor):
        fit_decay_rate((t, np.exp(-3 * t)))


def test_series_helpers():
    s = CorrelationSeries(np.arange(5.0), np.array([3, 2, 1.5, 1.2, 1.1]) + 0j, 1.0)
    assert s.tail_decreasing(0)
    assert list(s.to_rows())[0] == (0.0, 3.0, 0.0, 2.0)
