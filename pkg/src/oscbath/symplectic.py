"""The real-linear map v from oscillator-plus-field test functions to free-field ones.

``v(c + h) = bar(W+)^* h + c bar(Q+) - bar(W-)^* bar(h) - bar(c) bar(Q-)``
intertwines the coupled dynamics with multiplication by ``exp(i t r)`` and
preserves the symplectic form ``Im <x|y>``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GridMismatch, ReflectionViolation
from .radial import RadialFn, inner
from .scattering import ScatteringOps


@dataclass(frozen=True, eq=False)
class TestFunction:
    """Element ``c + f`` of C (oscillator) plus the one-boson space."""

    c: complex
    f: RadialFn

    __test__ = False  # not a pytest class

    @classmethod
    def zero(cls, grid):
        return cls(0j, RadialFn(grid, np.zeros(grid.n)))

    @classmethod
    def particle(cls, c, grid):
        return cls(complex(c), RadialFn(grid, np.zeros(grid.n)))

    def __add__(self, other):
        return TestFunction(self.c + other.c, self.f + other.f)

    def __sub__(self, other):
        return TestFunction(self.c - other.c, self.f - other.f)

    def scale(self, s: float):
        return TestFunction(s * self.c, self.f * s)

    def times(self, s: complex):
        return TestFunction(s * self.c, self.f * s)

    def plus_norm(self):
        """``|c| + ||f|| + || |k|^{-1/2} f ||``."""
        return abs(self.c) + self.f.norm() + self.f.norm_alpha(-0.5)

    def to_dict(self):
        return {"c": [self.c.real, self.c.imag], "f_values": "grid-dependent"}


def symplectic_form(x, y) -> float:
    """``Im <x|y>``; for pairs ``Im(conj(c) c') + Im <f|f'>``."""
    if isinstance(x, TestFunction) != isinstance(y, TestFunction):
        raise GridMismatch("cannot pair a test function with a field function")
    if isinstance(x, TestFunction):
        return (np.conj(x.c) * y.c).imag + inner(x.f, y.f).imag
    return inner(x, y).imag


def v_values(c, h, ops: ScatteringOps):
    """``v(c + h)`` on node values."""
    qbp = np.conj(ops.spectral.q_plus.values)
    qbm = np.conj(ops.spectral.q_minus.values)
    out = ops.bar["Wplus_star"](h) - ops.bar["Wminus_star"](np.conj(h))
    return out + c * qbp - np.conj(c) * qbm


def v_map(tf: TestFunction, ops: ScatteringOps) -> RadialFn:
    if not tf.f.grid.same_as(ops.grid):
        raise GridMismatch("test function and operators use different grids")
    return RadialFn(ops.grid, v_values(tf.c, tf.f.values, ops))


def v_inverse_values(g, ops: ScatteringOps):
    grid = ops.grid
    sd = ops.spectral
    mu = grid.measure
    qp, qm = sd.q_plus.values, sd.q_minus.values
    # <bar(Q+)|g> + <Q-|bar(g)>
    c = np.sum(mu * qp * g) + np.sum(mu * np.conj(qm) * np.conj(g))
    f = ops.bar["Wplus"](g) + ops.Wminus(np.conj(g))
    return complex(c), f


def v_inverse(g: RadialFn, ops: ScatteringOps) -> TestFunction:
    if not g.grid.same_as(ops.grid):
        raise GridMismatch("function and operators use different grids")
    c, f = v_inverse_values(g.values, ops)
    return TestFunction(c, RadialFn(ops.grid, f))


def w_t(tf: TestFunction, t: float, ops: ScatteringOps) -> TestFunction:
    """Coupled flow ``v^{-1} exp(i t r) v``."""
    if t == 0:
        return tf
    u = v_values(tf.c, tf.f.values, ops)
    phase = np.exp(1j * t * ops.grid.nodes)
    c, f = v_inverse_values(phase * u, ops)
    return TestFunction(c, RadialFn(ops.grid, f))


def free_flow(g: RadialFn, t: float) -> RadialFn:
    return RadialFn(g.grid, np.exp(1j * t * g.grid.nodes) * g.values)


@dataclass(frozen=True, eq=False)
class AnalyticTestFunction:
    """``(a i |k|^{1/2} + b |k|^{-1/2}) profile`` and its preimage under v.

    ``profile`` must be analytic on the strip used by the contour shifts and
    obey ``profile(-r) = conj(profile(r))`` for real r.  ``poles`` lists its
    known singularities (upper half plane for the particle elements).
    """

    a: float
    b: float
    profile: Callable
    cached: TestFunction
    image: RadialFn
    poles: tuple = ()


def check_reflection(profile, samples=None, tol=1e-12):
    r = np.linspace(0.05, 8.0, 64) if samples is None else samples
    left = np.asarray(profile(-r + 0j))
    right = np.conj(np.asarray(profile(r + 0j)))
    err = float(np.max(np.abs(left - right)) / max(1.0, float(np.max(np.abs(right)))))
    if not err <= tol:
        raise ReflectionViolation(f"profile(-r) differs from conj(profile(r)) by {err:.3g}")
    return err


def make_analytic(a, b, profile, ops: ScatteringOps, poles=()) -> AnalyticTestFunction:
    check_reflection(profile)
    r = ops.grid.nodes
    vals = (1j * a * np.sqrt(r) + b / np.sqrt(r)) * np.asarray(profile(r + 0j), dtype=complex)
    image = RadialFn(ops.grid, vals)
    return AnalyticTestFunction(float(a), float(b), profile, v_inverse(image, ops), image, tuple(poles))


def particle_analytic(c, ops: ScatteringOps) -> AnalyticTestFunction:
    """The oscillator-only element ``c + 0`` in analytic form.

    ``v(c + 0) = Re(c) |k|^{-1/2} bar(Q) + i Im(c) |k|^{1/2} bar(Q)``, and the
    continuation of ``bar(Q)`` is ``-lam rho(z) / G_minus(z)``.
    """
    c = complex(c)
    sd = ops.spectral
    kh = sd.kappa_hat
    tf = TestFunction.particle(c, ops.grid)
    return AnalyticTestFunction(c.imag, c.real, sd.q_bar_analytic, tf, v_map(tf, ops),
                                (kh, -np.conj(kh)))


def scaled_analytic(x: AnalyticTestFunction, s: float) -> AnalyticTestFunction:
    """Real multiple of an analytic element."""
    return AnalyticTestFunction(s * x.a, s * x.b, x.profile, x.cached.scale(s), x.image * s, x.poles)


def gaussian_profile(sigma=1.0, amplitude=1.0):
    return lambda z: amplitude * np.exp(-(np.asarray(z) ** 2) / (2.0 * sigma**2))


def h2_strip_integrals(profile, kappa, heights=5, half_length=30.0):
    """Sampled ``int |profile(r + i s)|^2 (1 + |r|^3) dr`` at ``heights`` levels in ``[-kappa, kappa]``."""
    r = np.linspace(-half_length, half_length, 6001)
    out = {}
    for s in np.linspace(-kappa, kappa, heights):
        vals = np.abs(profile(r + 1j * s)) ** 2 * (1 + np.abs(r) ** 3)
        out[float(s)] = float(np.trapezoid(vals, r))
    return out


# verification suites -------------------------------------------------------------

def random_test_functions(grid, count, rng):
    from .scattering import random_smooth_vectors

    cs = rng.standard_normal(count) + 1j * rng.standard_normal(count)
    fs = random_smooth_vectors(grid, count, rng)
    return [TestFunction(complex(c), RadialFn(grid, fs[:, k])) for k, c in enumerate(cs)]


def verify_symplecticity(ops: ScatteringOps, pairs=100, rng=None, tol=1e-5):
    """``|Im<v x|v y> - Im<x|y>| / (||x||_+ ||y||_+)`` over random pairs."""
    from .formfactor import Report

    rng = np.random.default_rng(42) if rng is None else rng
    xs = random_test_functions(ops.grid, pairs, rng)
    ys = random_test_functions(ops.grid, pairs, rng)
    worst = 0.0
    for x, y in zip(xs, ys):
        lhs = symplectic_form(v_map(x, ops), v_map(y, ops))
        worst = max(worst, abs(lhs - symplectic_form(x, y)) / (x.plus_norm() * y.plus_norm()))
    rep = Report("symplecticity")
    rep.values.update(worst_relative=worst, pairs=pairs)
    rep.clauses["form_preserved"] = bool(worst < tol)
    return rep


def _pair_distance(x: TestFunction, y: TestFunction):
    return (x - y).plus_norm()


def verify_flow_laws(ops: ScatteringOps, trials=10, rng=None, t_max=2.0, tol=1e-4):
    """Group law ``w_{t+s} = w_t w_s`` and ``v w_t = e^{itr} v``, relative residuals."""
    from .formfactor import Report

    rng = np.random.default_rng(42) if rng is None else rng
    group = inter = 0.0
    for x in random_test_functions(ops.grid, trials, rng):
        t, s = rng.uniform(0.0, t_max, 2)
        lhs = w_t(x, t + s, ops)
        group = max(group, _pair_distance(lhs, w_t(w_t(x, s, ops), t, ops)) / x.plus_norm())
        vx = v_map(x, ops)
        moved = v_map(w_t(x, t, ops), ops)
        inter = max(inter, (moved - free_flow(vx, t)).norm() / vx.norm())
    rep = Report("flow_laws")
    rep.values.update(group_law=group, intertwining=inter, trials=trials, t_max=t_max)
    rep.clauses["group_law"] = bool(group < tol)
    rep.clauses["intertwining"] = bool(inter < tol)
    return rep
