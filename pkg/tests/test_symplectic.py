import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oscbath.errors import GridMismatch, ReflectionViolation
from oscbath.radial import RadialFn, make_grid
from oscbath.symplectic import (TestFunction, gaussian_profile, make_analytic, particle_analytic,
                                random_test_functions, symplectic_form, v_inverse, v_map,
                                verify_flow_laws, verify_symplecticity, w_t)


def dist(x: TestFunction, y: TestFunction):
    return (x - y).plus_norm() / max(y.plus_norm(), 1e-300)


def test_particle_image(ops01, spectral01):
    r = ops01.grid.nodes
    qb = np.conj(spectral01.q.values)
    for c in (1.0 + 0j, 1j, 0.3 - 0.7j):
        got = v_map(TestFunction.particle(c, ops01.grid), ops01).values
        expect = (c.real / np.sqrt(r) + 1j * c.imag * np.sqrt(r)) * qb
        assert np.max(np.abs(got - expect)) <= 1e-12 * np.max(np.abs(expect))


def test_free_map_is_identity(ops_free, rng):
    tf = random_test_functions(ops_free.grid, 1, rng)[0]
    field = TestFunction(0j, tf.f)
    assert np.allclose(v_map(field, ops_free).values, tf.f.values, rtol=1e-15, atol=1e-15)
    back = v_inverse(tf.f, ops_free)
    assert back.c == 0
    assert np.allclose(back.f.values, tf.f.values, rtol=1e-15, atol=1e-15)


def test_real_but_not_complex_linear(ops01, rng):
    tf = random_test_functions(ops01.grid, 1, rng)[0]
    v = v_map(tf, ops01).values
    assert np.allclose(v_map(tf.scale(2.0), ops01).values, 2 * v, rtol=1e-13, atol=1e-15)
    vi = v_map(tf.times(1j), ops01).values
    assert np.max(np.abs(vi - 1j * v)) > 1e-3 * np.max(np.abs(v))


def test_round_trip(ops01, rng):
    for tf in random_test_functions(ops01.grid, 100, rng):
        assert dist(v_inverse(v_map(tf, ops01), ops01), tf) < 1e-4


def test_flow_at_zero_and_laws(ops01, rng):
    tf = random_test_functions(ops01.grid, 1, rng)[0]
    assert dist(w_t(tf, 0.0, ops01), tf) == 0
    two_step = w_t(w_t(tf, 1.3, ops01), 0.5, ops01)
    assert dist(w_t(tf, 1.8, ops01), two_step) < 1e-4
    moved = v_map(w_t(tf, 1.3, ops01), ops01).values
    expect = np.exp(1.3j * ops01.grid.nodes) * v_map(tf, ops01).values
    assert np.max(np.abs(moved - expect)) < 1e-4 * np.max(np.abs(expect))


def test_flow_preserves_form(ops01, rng):
    x, y = random_test_functions(ops01.grid, 2, rng)
    before = symplectic_form(x, y)
    after = symplectic_form(w_t(x, 0.9, ops01), w_t(y, 0.9, ops01))
    assert after == pytest.approx(before, abs=1e-8 * x.plus_norm() * y.plus_norm())


def test_verification_suites(ops01):
    assert verify_symplecticity(ops01, pairs=30).passed
    assert verify_flow_laws(ops01, trials=4).passed


GRID = make_grid(256)
cpx = st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False)


@given(cpx, cpx, st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=50, deadline=None)
def test_form_antisymmetric(c1, c2, a, b):
    r = GRID.nodes
    x = TestFunction(c1, RadialFn(GRID, (a + 1j) * np.exp(-r)))
    y = TestFunction(c2, RadialFn(GRID, (1 - 1j * b) * np.exp(-r * r)))
    assert symplectic_form(x, x) == pytest.approx(0.0, abs=1e-12)
    assert symplectic_form(x, y) == pytest.approx(-symplectic_form(y, x), abs=1e-12)


def test_form_rejects_mixed_pairs():
    with pytest.raises(GridMismatch):
        symplectic_form(TestFunction.zero(GRID), RadialFn(GRID, np.zeros(GRID.n)))


def test_analytic_gaussian_element(ops01):
    x = make_analytic(0.0, 1.0, gaussian_profile(), ops01)
    r = ops01.grid.nodes
    assert np.allclose(x.image.values, np.exp(-r * r / 2) / np.sqrt(r))
    img = v_map(x.cached, ops01).values
    assert np.max(np.abs(img - x.image.values)) < 1e-4 * np.max(np.abs(x.image.values))


def test_analytic_imaginary_odd_profile(ops01):
    prof = lambda z: 1j * z * np.exp(-z * z / 2)
    x = make_analytic(1.0, 0.0, prof, ops01)
    assert np.all(np.isfinite(x.cached.f.values))
    with pytest.raises(ReflectionViolation):
        make_analytic(1.0, 0.0, lambda z: z * np.exp(-z * z / 2), ops01)


def test_particle_analytic_consistent(ops01):
    x = particle_analytic(0.4 + 0.2j, ops01)
    r = ops01.grid.nodes
    direct = (1j * x.a * np.sqrt(r) + x.b / np.sqrt(r)) * x.profile(r + 0j)
    assert np.max(np.abs(direct - x.image.values)) < 1e-12 * np.max(np.abs(direct))
