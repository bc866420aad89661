"""Anharmonic perturbation ``V = sum_j w_j W(mu_j + 0)`` treated by a Dyson series.

The order-n contribution to ``omega(W(f) alpha_t(W(g)) W(h))`` is

    i^n int_{0 <= t_n <= ... <= t_1 <= t} sum_atoms prod(w) c_n
        omega(W(v_f) W(e^{itr} u_n) W(v_h))

with ``c_n = (-2i)^n prod_k sin(Im<e^{-i t_k r} v_k | u_{k,n}>/2)`` and
``u_{k,n} = sum_{m>k} e^{-i t_m r} v_m + v_g``.  Every inner product that
appears is a function of one time difference, so they are tabulated once on a
uniform grid and interpolated at the simplex quadrature nodes.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import PlateauNotReached, ResonanceOnContour, TruncationDominates
from .equilibrium import CorrelationSeries, ThermalState, fit_decay_rate, thermal_norm_sq
from .formfactor import ModelParams, Report
from .radial import gauss_legendre, line_nodes
from .scattering import ScatteringOps
from .spectral import g_minus, g_plus
from .symplectic import TestFunction, v_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite complex measure ``sum_j w_j delta(mu - mu_j)`` with ``nu(-A) = conj(nu(A))``."""

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(m), complex(w)) for m, w in self.atoms)
        object.__setattr__(self, "atoms", atoms)
        for m, w in atoms:
            partner = [w2 for m2, w2 in atoms if m2 == -m]
            if not any(abs(w2 - np.conj(w)) <= 1e-14 * max(1.0, abs(w)) for w2 in partner):
                raise ValueError(f"atom ({m}, {w}) has no mirror atom ({-m}, {np.conj(w)})")

    def moment(self, i):
        return float(sum(abs(w) * abs(m) ** i for m, w in self.atoms))

    @property
    def moments(self):
        return self.moment(0), self.moment(1), self.moment(2)

    def scaled(self, s):
        return AtomicMeasure(tuple((m, s * w) for m, w in self.atoms))

    def mirrored(self):
        return AtomicMeasure(tuple((-m, np.conj(w)) for m, w in self.atoms))

    def to_dict(self):
        return {"atoms": [{"mu": m, "w": [w.real, w.imag]} for m, w in self.atoms]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple((a["mu"], complex(*a["w"])) for a in d.get("atoms", [])))


@dataclass(frozen=True)
class DysonConfig:
    order: int = 3
    kappa: float | None = None
    nodes_per_panel: int | None = None
    panel_width: float = 3.0
    table_step: float = 0.01

    def __post_init__(self):
        if self.order < 0:
            raise ValueError("order must be non-negative")
        if self.order > 4:
            raise ValueError("orders above 4 are not supported")
        if self.nodes_per_panel is not None and self.nodes_per_panel < 1:
            raise ValueError("nodes_per_panel must be positive")

    @property
    def nodes(self):
        if self.nodes_per_panel is not None:
            return self.nodes_per_panel
        return 12 if self.order <= 2 else 8


# kappa tilde and admissibility --------------------------------------------------

def kappa_tilde(params: ModelParams, kappa: float, kappa_hat: complex | None = None,
                half_length=None, n_panels=400, threshold=1e-6):
    """``2 pi int_R lam^2 |rho(z)^2 z^2| / |G_plus(z) G_minus(z)| dr`` on ``z = r + i kappa``."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if params.lam == 0:
        return 0.0
    if kappa_hat is not None:
        if abs(kappa - kappa_hat.imag) <= 1e-9 * max(1.0, kappa):
            raise ResonanceOnContour(f"Im z = {kappa} passes through the resonance {kappa_hat}")
        if kappa > kappa_hat.imag:
            log.warning("kappa %.4g is not below Im kappa_hat %.4g", kappa, kappa_hat.imag)
    L = 30.0 * params.ff.scale if half_length is None else half_length
    feats = []
    if kappa_hat is not None:
        feats = [(kappa_hat.real, max(abs(kappa_hat.imag - kappa), 1e-6))]
    x, w = line_nodes(L, n_panels, 16, feats, params.ff.scale)
    z = x + 1j * kappa
    gp = g_plus(params, z)
    gm = g_minus(params, z)
    den = np.abs(gp * gm)
    if np.min(np.minimum(np.abs(gp), np.abs(gm))) < threshold:
        raise ResonanceOnContour(f"|G| drops below {threshold:g} on Im z = {kappa}")
    num = params.lam**2 * np.abs(params.ff.eval_complex(z) ** 2 * z * z)
    return float(2 * math.pi * np.sum(w * num / den))


def admissibility(measure: AtomicMeasure, kappa: float, kappa_tilde_val: float) -> Report:
    a0, a1, a2 = measure.moments
    margin = kappa - 2.0 * (a0 + kappa_tilde_val * a2)
    rep = Report("admissibility")
    rep.values.update(margin=margin, a0=a0, a1=a1, a2=a2, kappa=kappa, kappa_tilde=kappa_tilde_val)
    rep.clauses["admissible"] = margin > 0
    if margin <= 0:
        log.warning("measure not admissible: margin %.4g", margin)
    return rep


# simplex quadrature -------------------------------------------------------------

def _panel_rule(upper, width, order):
    """Composite GL nodes/weights on ``[0, upper]`` for an array of uppers.

    Every upper gets the same number of panels (enough for the largest), so the
    result is rectangular: shape ``(len(upper), panels * order)``.
    """
    upper = np.asarray(upper, dtype=float)
    x, w = gauss_legendre(order)
    n_pan = max(1, int(math.ceil(float(np.max(upper, initial=0.0)) / width)))
    k = np.arange(n_pan)
    h = upper[:, None] / n_pan
    left = k[None, :] * h
    nodes = left[:, :, None] + 0.5 * h[:, :, None] * (x + 1.0)[None, None, :]
    weights = np.broadcast_to(0.5 * h[:, :, None] * w[None, None, :], nodes.shape)
    return nodes.reshape(upper.size, -1), weights.reshape(upper.size, -1)


def simplex_rule(t, n, width=2.0, order=12):
    """Nodes (P x n, columns t_1 >= ... >= t_n) and weights on the ordered simplex below t."""
    if n == 0:
        return np.zeros((1, 0)), np.ones(1)
    pts = np.zeros((1, 0))
    wts = np.ones(1)
    upper = np.array([float(t)])
    for _ in range(n):
        nodes, weights = _panel_rule(upper, width, order)
        m = nodes.shape[1]
        pts = np.concatenate([np.repeat(pts, m, axis=0), nodes.reshape(-1, 1)], axis=1)
        wts = (wts[:, None] * weights).ravel()
        upper = pts[:, -1]
    return pts, wts


# tabulated inner products ---------------------------------------------------------

class _Tables:
    """Splines of the time-difference functions needed by the series."""

    def __init__(self, vhat, vg, vf, vh, state, t_max, step):
        grid = vhat.grid
        r, mu = grid.nodes, grid.measure
        eta = state.eta(r)
        vs = vf.values + vh.values
        vd = vf.values - vh.values
        a = np.conj(vhat.values)
        cols = np.stack([
            mu * a * vhat.values,              # S(tau)  = <vhat| e^{i tau r} vhat>
            mu * a * vg.values,                # Sg      = <vhat| e^{i tau r} v_g>
            mu * eta * a * vhat.values,        # H       = <vhat| eta e^{i tau r} vhat>
            mu * eta * a * vg.values,          # Hg      = <vhat| eta e^{i tau r} v_g>
            mu * eta * np.conj(vs) * vhat.values,  # Es  = <v_f+v_h| eta e^{i tau r} vhat>
            mu * np.conj(vd) * vhat.values,        # Ed  = <v_f-v_h| e^{i tau r} vhat>
            mu * eta * np.conj(vs) * vg.values,    # Esg
            mu * np.conj(vd) * vg.values,          # Edg
        ], axis=1)
        n = max(8, int(math.ceil(t_max / step)) + 1)
        self.tau = np.linspace(0.0, max(t_max, step * 7), n)
        vals = np.empty((n, cols.shape[1]), dtype=complex)
        for lo in range(0, n, 256):
            ph = np.exp(1j * np.outer(self.tau[lo:lo + 256], r))
            vals[lo:lo + 256] = ph @ cols
        self.splines = [CubicSpline(self.tau, vals[:, k]) for k in range(vals.shape[1])]
        self.g_norm = thermal_norm_sq(vg, state)
        self.has_fh = bool(np.any(vs) or np.any(vd))

    def __call__(self, tau, cols=None):
        tau = np.asarray(tau, dtype=float)
        cols = range(len(self.splines)) if cols is None else cols
        return np.stack([self.splines[k](tau) for k in cols], axis=-1)


@dataclass
class DysonResult:
    times: np.ndarray
    terms: np.ndarray          # (order + 1, len(times))
    truncation_dominates: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def partial_sums(self):
        return np.cumsum(self.terms, axis=0)

    @property
    def total(self):
        return self.terms.sum(axis=0)


def _order_term(n, t, tables: _Tables, atoms, base_fh, config):
    """Order-n term at a single time t (n >= 1)."""
    if t == 0:
        return 0j
    pts, wts = simplex_rule(t, n, config.panel_width, config.nodes)
    P = pts.shape[0]
    at_t = tables(np.array([t]), (6, 7))[0]
    esg, edg = at_t
    own = tables(pts, (1, 3))                  # functions of t_k
    sg, hg = own[..., 0], own[..., 1]
    if tables.has_fh:
        back = tables(t - pts, (4, 5))         # functions of t - t_k
        es, ed = back[..., 0], back[..., 1]
    else:
        es = ed = np.zeros((P, n))
    pair_s = {}
    pair_h = {}
    for k in range(n):
        for m in range(k + 1, n):
            vals = tables(pts[:, k] - pts[:, m], (0, 2))
            pair_s[k, m] = vals[:, 0].imag
            pair_h[k, m] = vals[:, 1].real
    h0 = tables(np.array([0.0]), (2,))[0, 0].real
    total = 0j
    for assign in itertools.product(range(len(atoms)), repeat=n):
        mus = np.array([atoms[a][0] for a in assign])
        wprod = np.prod([atoms[a][1] for a in assign])
        if wprod == 0:
            continue
        sines = np.ones(P, dtype=complex)
        for k in range(n):
            arg = mus[k] * sg[:, k].imag
            for m in range(k + 1, n):
                arg = arg + mus[k] * mus[m] * pair_s[k, m]
            sines *= np.sin(0.5 * arg)
        # |eta^{1/2} e^{itr} u_n|^2
        x2 = tables.g_norm + h0 * np.sum(mus**2) + 2 * (hg.real @ mus)
        for k in range(n):
            for m in range(k + 1, n):
                x2 = x2 + 2 * mus[k] * mus[m] * pair_h[k, m]
        re_part = (es * mus[None, :]).sum(axis=1) + esg
        im_part = (ed * mus[None, :]).sum(axis=1) + edg
        delta = -0.5 * re_part.real - 0.5j * im_part.imag
        integrand = sines * np.exp(-0.25 * x2 + delta)
        total += wprod * np.sum(wts * integrand)
    return (1j) ** n * (-2j) ** n * base_fh * total


def dyson_three_point(f: TestFunction, g: TestFunction, h: TestFunction, measure: AtomicMeasure,
                      times, config: DysonConfig, state: ThermalState, ops: ScatteringOps,
                      strict=False) -> DysonResult:
    """Truncated series for ``omega(W(f) alpha_t(W(g)) W(h))`` at every time in ``times``."""
    ts = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(ts < 0):
        raise ValueError("times must be non-negative")
    grid = ops.grid
    vf, vg, vh = (v_map(x, ops) for x in (f, g, h))
    vhat = v_map(TestFunction.particle(1.0, grid), ops)
    t_max = float(ts.max(initial=0.0))
    tables = _Tables(vhat, vg, vf, vh, state, t_max, config.table_step)
    fh = vf + vh
    base_fh = (math.exp(-0.25 * thermal_norm_sq(fh, state))
               * np.exp(-0.5j * np.sum(grid.measure * np.conj(vf.values) * vh.values).imag))
    order = config.order if measure.atoms else 0
    terms = np.zeros((config.order + 1, ts.size), dtype=complex)
    for i, t in enumerate(ts):
        esg, edg = tables(np.array([t]), (6, 7))[0]
        terms[0, i] = base_fh * np.exp(-0.25 * tables.g_norm - 0.5 * esg.real - 0.5j * edg.imag)
        for n in range(1, order + 1):
            terms[n, i] = _order_term(n, t, tables, measure.atoms, base_fh, config)
    dominated = np.zeros(ts.size, dtype=bool)
    if order >= 1:
        dominated = np.abs(terms[order]) > np.abs(terms[order - 1])
        dominated &= np.abs(terms[order]) > 0
    if np.any(dominated):
        msg = f"last retained order dominates at {int(dominated.sum())} of {ts.size} times"
        if strict:
            raise TruncationDominates(msg)
        log.warning(msg)
    meta = {"order": config.order, "atoms": len(measure.atoms), "table_step": config.table_step,
            "nodes_per_panel": config.nodes, "panel_width": config.panel_width}
    return DysonResult(ts, terms, dominated, meta)


def simplex_volume(t, n, config: DysonConfig | None = None):
    config = DysonConfig() if config is None else config
    _, w = simplex_rule(t, n, config.panel_width, config.nodes)
    return float(w.sum())


# sine-product inequality ------------------------------------------------------------

def sine_product_bound_instance(f, fs, times, lams, gamma):
    """Check the sine-product inequality on one instance; returns ``(violations, worst ratio)``.

    With ``x_k = Im<f_k|f> + sum_{m>k} Im<f_k|f_m>`` the claim is
    ``|prod_{k>=j} sin x_k| <= alpha |lam_j| e^{-gamma t_j} prod_{k>j} (1 + beta lam_k^2)``
    for the smallest alpha, beta with ``|Im<f_k|f>| <= alpha |lam_k| e^{-gamma t_k}``
    and ``|Im<f_k|f_j>| <= beta |lam_k lam_j| e^{-gamma (t_k - t_j)}``.
    """
    n = len(fs)
    im_f = np.array([np.vdot(fk, f).imag for fk in fs])
    im_kk = np.array([[np.vdot(fs[k], fs[j]).imag for j in range(n)] for k in range(n)])
    lams = np.asarray(lams, dtype=float)
    times = np.asarray(times, dtype=float)
    alpha = float(np.max(np.abs(im_f) * np.exp(gamma * times) / np.abs(lams)))
    beta = 0.0
    for k in range(n):
        for j in range(k):
            beta = max(beta, abs(im_kk[k, j]) * math.exp((times[k] - times[j]) * gamma)
                       / abs(lams[k] * lams[j]))
    args = np.array([im_kk[k, k + 1:].sum() + im_f[k] for k in range(n)])
    worst = 0.0
    violations = 0
    for j in range(n):
        A = abs(np.prod(np.sin(args[j:])))
        bound = math.exp(-gamma * times[j]) * abs(lams[j]) * alpha * np.prod(1 + beta * lams[j + 1:] ** 2)
        if A > bound * (1 + 1e-12) + 1e-300:
            violations += 1
        if bound > 0:
            worst = max(worst, A / bound)
    return violations, worst


def verify_sine_product_bound(trials=10_000, max_n=8, max_dim=16, seed=42) -> Report:
    rng = np.random.default_rng(seed)
    violations = 0
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, max_n + 1))
        dim = int(rng.integers(1, max_dim + 1))
        scale = rng.uniform(0.1, 3.0)
        draw = lambda: scale * (rng.standard_normal(dim) + 1j * rng.standard_normal(dim))
        f = draw()
        fs = [draw() for _ in range(n)]
        times = np.sort(rng.uniform(0.0, 5.0, n))
        lams = rng.uniform(0.1, 2.0, n) * rng.choice([-1.0, 1.0], n)
        gamma = rng.uniform(0.01, 2.0)
        v, w = sine_product_bound_instance(f, fs, times, lams, gamma)
        violations += v
        worst = max(worst, w)
    rep = Report("sine_product_bound")
    rep.values.update(trials=trials, violations=violations, worst_ratio=worst, seed=seed,
                      max_n=max_n, max_dim=max_dim)
    rep.clauses["no_violations"] = violations == 0
    return rep


# decay probe ------------------------------------------------------------------

@dataclass
class AnharmonicProbe:
    series: CorrelationSeries
    fit: object
    margin: float
    plateau: complex
    plateau_spread: float
    result: DysonResult


def anharmonic_decay_probe(f, g, h, measure, times, config: DysonConfig, state, ops,
                           kappa=None, window=None, plateau_tol=1e-8) -> AnharmonicProbe:
    """Fit the decay of the truncated series towards its large-time plateau.

    The plateau is the ``f = h = 0`` series over the last quarter of ``times``;
    the rate is fitted to the upper envelope of the deviation.
    """
    ts = np.asarray(times, dtype=float)
    sd = ops.spectral
    kappa = config.kappa if kappa is None else kappa
    if kappa is None:
        kappa = 0.8 * sd.kappa_hat.imag
    kt = kappa_tilde(sd.params, kappa, sd.kappa_hat)
    margin = admissibility(measure, kappa, kt).values["margin"]
    zero = TestFunction.zero(ops.grid)
    free = dyson_three_point(zero, g, zero, measure, ts, config, state, ops)
    tail = ts >= ts[0] + 0.75 * (ts[-1] - ts[0])
    plateau_vals = free.total[tail]
    spread = float(np.max(np.abs(plateau_vals - plateau_vals[-1])))
    if spread > plateau_tol:
        raise PlateauNotReached(f"plateau spread {spread:.3g} exceeds {plateau_tol:g}")
    plateau = complex(plateau_vals[-1])
    if f is zero or (f.c == 0 and not np.any(f.f.values) and h.c == 0 and not np.any(h.f.values)):
        res = free
        base = plateau
    else:
        res = dyson_three_point(f, g, h, measure, ts, config, state, ops)
        vf, vh = v_map(f, ops), v_map(h, ops)
        base = (math.exp(-0.25 * thermal_norm_sq(vf + vh, state))
                * np.exp(-0.5j * np.sum(ops.grid.measure * np.conj(vf.values) * vh.values).imag)
                * plateau)
    series = CorrelationSeries(ts, res.total, complex(base), {"margin": margin, "kappa": kappa})
    if window is None:
        window = (ts[0] + 0.1 * (ts[-1] - ts[0]), ts[0] + 0.6 * (ts[-1] - ts[0]))
    fit = fit_decay_rate(series, window, envelope=True)
    return AnharmonicProbe(series, fit, margin, plateau, spread, res)
