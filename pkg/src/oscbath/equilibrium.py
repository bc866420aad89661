"""Gaussian KMS characteristic functions, time correlations and decay rates.

The thermal weight is ``eta(r) = coth(beta r / 2) = 1 + 2 / (exp(beta r) - 1)``
and the quasi-free state is ``omega(W(f)) = exp(-<f | eta f> / 4)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergentThermalNorm, NoiseFloor
from .formfactor import ModelParams
from .radial import RadialFn, oscillatory_integral
from .scattering import ScatteringOps
from .symplectic import AnalyticTestFunction, TestFunction, v_map


@dataclass(frozen=True)
class ThermalState:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    def eta(self, r):
        """``coth(beta r / 2)``; complex arguments allowed."""
        return 1.0 / np.tanh(0.5 * self.beta * np.asarray(r))

    def occupation(self, r):
        return 1.0 / np.expm1(self.beta * np.asarray(r))

    def eta_times_poly(self, r, small=1e-3):
        """``r coth(beta r / 2)`` on real r, by series below ``small`` (regular at 0)."""
        r = np.asarray(r, dtype=float)
        x = 0.5 * self.beta * r
        out = np.empty_like(r)
        tiny = np.abs(r) < small
        out[~tiny] = r[~tiny] / np.tanh(x[~tiny])
        xs = x[tiny]
        out[tiny] = (2.0 / self.beta) * (1 + xs**2 / 3 - xs**4 / 45)
        return out


def _check_thermal_norm(f: RadialFn):
    """Local power-law exponent of |f| at the two innermost nodes; r^-1 or worse diverges."""
    r = f.grid.nodes[:2]
    a = np.abs(f.values[:2])
    if np.all(a > 0):
        p = math.log(a[1] / a[0]) / math.log(r[1] / r[0])
        if p <= -0.95:
            raise DivergentThermalNorm(f"|f| ~ r^{p:.2f} near 0; <f|eta f> diverges")


def thermal_norm_sq(f: RadialFn, state: ThermalState) -> float:
    _check_thermal_norm(f)
    val = float(np.sum(f.grid.measure * state.eta(f.grid.nodes) * np.abs(f.values) ** 2))
    if not math.isfinite(val):
        raise DivergentThermalNorm("thermal norm is not finite")
    return val


def omega_f(f: RadialFn, state: ThermalState) -> complex:
    return complex(math.exp(-0.25 * thermal_norm_sq(f, state)))


def omega_interacting(tf: TestFunction, state: ThermalState, ops: ScatteringOps) -> complex:
    return omega_f(v_map(tf, ops), state)


def weyl_product(vs, state: ThermalState) -> complex:
    """``omega(W(v_1) ... W(v_n))`` via ``W(a) W(b) = exp(-i Im<a|b>/2) W(a + b)``."""
    total = vs[0]
    phase = 0.0
    for v in vs[1:]:
        phase += -0.5 * _inner(total, v).imag
        total = total + v
    return omega_f(total, state) * complex(math.cos(phase), math.sin(phase))


def _inner(f: RadialFn, g: RadialFn):
    return complex(np.sum(f.grid.measure * np.conj(f.values) * g.values))


def gibbs_particle_char(c: complex, params: ModelParams) -> complex:
    """Characteristic function of the uncoupled oscillator at frequency ``alpha``.

    ``alpha = sqrt(1 + lam^2 N)``, ``c' = Re(c) alpha^{-1/2} + i Im(c) alpha^{1/2}``
    and the value is ``exp(-|c'|^2 coth(beta alpha / 2) / 4)``.
    """
    c = complex(c)
    alpha = math.sqrt(1.0 + params.lam**2 * params.norm_sq)
    cp = complex(c.real / math.sqrt(alpha), c.imag * math.sqrt(alpha))
    return complex(math.exp(-0.25 * abs(cp) ** 2 / math.tanh(0.5 * params.beta * alpha)))


@dataclass
class CorrelationSeries:
    times: np.ndarray
    values: np.ndarray
    baseline: complex
    meta: dict = field(default_factory=dict)

    @property
    def deviation(self):
        return np.abs(self.values - self.baseline)

    def tail_decreasing(self, burn_in):
        """True when the running maximum of |values - baseline| after ``burn_in`` never grows."""
        d = self.deviation[self.times >= burn_in]
        if d.size < 2:
            return True
        envelope = np.maximum.accumulate(d[::-1])[::-1]
        return bool(np.all(np.diff(envelope) <= 1e-15))

    def to_rows(self):
        for t, v, d in zip(self.times, self.values, self.deviation):
            yield float(t), float(v.real), float(v.imag), float(d)


def _images(tfs, ops):
    return [v_map(tf, ops) for tf in tfs]


def three_point(f1, f2, f3, t, state: ThermalState, ops: ScatteringOps):
    """``omega(W(f1) tau_t(W(f2)) W(f3))`` for scalar or array ``t``.

    With ``v_i = v(f_i)`` the value is ``omega(W f1 W f3) omega(W f2)
    exp(-Re<v1+v3|eta e^{itr} v2>/2) exp(-i Im<v1-v3|e^{itr} v2>/2)``.
    """
    v1, v2, v3 = _images((f1, f2, f3), ops)
    return _three_point_images(v1, v2, v3, t, state)


def _three_point_images(v1, v2, v3, t, state):
    grid = v1.grid
    r = grid.nodes
    eta = state.eta(r)
    mu = grid.measure
    s13 = v1 + v3
    d13 = v1 - v3
    base13 = math.exp(-0.25 * thermal_norm_sq(s13, state)) * np.exp(-0.5j * _inner(v1, v3).imag)
    base2 = math.exp(-0.25 * thermal_norm_sq(v2, state))
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    phase = np.exp(1j * np.outer(ts, r))
    a = phase @ (mu * eta * np.conj(s13.values) * v2.values)
    b = phase @ (mu * np.conj(d13.values) * v2.values)
    out = base13 * base2 * np.exp(-0.5 * a.real) * np.exp(-0.5j * b.imag)
    return out[0] if np.ndim(t) == 0 else out


def three_point_series(f1, f2, f3, times, state, ops) -> CorrelationSeries:
    v1, v2, v3 = _images((f1, f2, f3), ops)
    vals = _three_point_images(v1, v2, v3, np.asarray(times, dtype=float), state)
    s13 = v1 + v3
    baseline = (math.exp(-0.25 * thermal_norm_sq(s13, state)) * np.exp(-0.5j * _inner(v1, v3).imag)
                * math.exp(-0.25 * thermal_norm_sq(v2, state)))
    return CorrelationSeries(np.asarray(times, dtype=float), vals, complex(baseline))


def default_kappa_shift(kappa_hat: complex, beta: float) -> float:
    width = 2 * math.pi / beta
    return 0.8 * min(kappa_hat.imag, width - 0.05 * width)


def _decay_integrand(f: AnalyticTestFunction, g: AnalyticTestFunction):
    """``P(z) h~(z)`` with ``P = aa' z^3 + bb' z + i(a'b - ab') z^2`` and
    ``h~(z) = 4 pi f'(-z) g'(z)`` (the continuation of ``4 pi conj(f') g'``)."""
    a, b, ap, bp = f.a, f.b, g.a, g.b

    def fn(z):
        P = a * ap * z**3 + b * bp * z + 1j * (ap * b - a * bp) * z**2
        return P * 4.0 * np.pi * f.profile(-z) * g.profile(z)

    return fn


def decay_cross_section(f: AnalyticTestFunction, g: AnalyticTestFunction, t, state: ThermalState,
                        ops: ScatteringOps, kappa_shift=None, half_length=30.0):
    """``Re<v(f)|eta e^{itr} v(g)>`` and ``Im<v(f)|e^{itr} v(g)>`` by two routes.

    Route (i) sums over the radial grid.  Route (ii) writes both as line
    integrals over R of ``P(r) coth(beta r/2) e^{itr} h~(r) / 2`` and
    ``P(r) e^{itr} h~(r) / 2i`` and moves the line to ``Im r = kappa_shift``.
    """
    if kappa_shift is None:
        kappa_shift = default_kappa_shift(ops.spectral.kappa_hat, state.beta)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(ts < 0):
        raise ValueError("decay cross sections are defined for t >= 0")
    vf, vg = v_map(f.cached, ops), v_map(g.cached, ops)
    grid = ops.grid
    r, mu = grid.nodes, grid.measure
    phase = np.exp(1j * np.outer(ts, r))
    re_i = (phase @ (mu * state.eta(r) * np.conj(vf.values) * vg.values)).real
    im_i = (phase @ (mu * np.conj(vf.values) * vg.values)).imag
    core = _decay_integrand(f, g)
    poles = tuple(-p for p in f.poles) + tuple(g.poles)
    # coth(beta z / 2) has poles at 2 pi i n / beta, n != 0
    poles = poles + (2j * math.pi / state.beta,)
    feats = [(abs(p.real), max(abs(p.imag), 1e-3)) for p in poles if abs(p.real) > 0]
    shifted = np.maximum(ts, 1e-300)  # route (ii) always uses the upper contour
    re_ii = 0.5 * oscillatory_integral(lambda z: core(z) * state.eta(z), shifted, kappa_shift,
                                       half_length=half_length, poles=poles, features=feats)
    im_ii = oscillatory_integral(core, shifted, kappa_shift, half_length=half_length,
                                 poles=poles, features=feats) / 2j
    out = {
        "t": ts,
        "re_grid": re_i,
        "re_contour": np.real(re_ii),
        "im_grid": im_i,
        "im_contour": np.real(im_ii),
        "kappa_shift": kappa_shift,
    }
    out["discrepancy"] = np.maximum(np.abs(out["re_grid"] - out["re_contour"]),
                                    np.abs(out["im_grid"] - out["im_contour"]))
    return out


def contour_constant(f: AnalyticTestFunction, g: AnalyticTestFunction, state, kappa_shift,
                     half_length=30.0, n=24001):
    """``(1/2) int |P coth h~|(r + i kappa) dr``: bounds |Re<v(f)|eta e^{itr} v(g)>| e^{kappa t}."""
    core = _decay_integrand(f, g)
    r = np.linspace(-half_length, half_length, n)
    z = r + 1j * kappa_shift
    return float(0.5 * np.trapezoid(np.abs(core(z) * state.eta(z)), r))


@dataclass
class DecayFit:
    rate: float
    prefactor: float
    r_squared: float
    n_points: int


def fit_decay_rate(series: CorrelationSeries | tuple, window=None, floor=1e-13,
                   envelope=False) -> DecayFit:
    """Least squares of ``log |values - baseline|`` against t (positive rate = decay).

    With ``envelope=True`` the deviation is first replaced by its running
    maximum over later times, which removes the near-zeros of an oscillating
    decay before the log is taken.
    """
    if isinstance(series, CorrelationSeries):
        t, dev = series.times, series.deviation
    else:
        t, dev = (np.asarray(x) for x in series)
    if envelope:
        dev = np.maximum.accumulate(dev[::-1])[::-1]
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, dev = t[sel], dev[sel]
    if t.size < 5:
        raise ValueError("need at least five points in the fit window")
    if np.any(dev <= floor):
        raise NoiseFloor(f"deviation reaches {dev.min():.3g} inside the fit window")
    y = np.log(dev)
    A = np.vstack([np.ones_like(t), t]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-coef[1]), float(math.exp(coef[0])), r2, int(t.size))
