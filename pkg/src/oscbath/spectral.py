"""Dispersion function, its boundary values and continuation, the resonance and Q.

Conventions used throughout the package:

* ``D(z) = -z + 1 + lam^2 N + lam^2 4 pi int rho(r)^2 r^2 / (z - r^2) dr`` with
  ``N = || |k|^-1 rho ||^2``; ``D_plus(s)`` is the limit from the upper half plane.
* ``G_plus(z)`` is the continuation of ``z -> D_plus(z^2)`` off the positive axis,
  ``G_minus(z) = conj(G_plus(conj z)) = G_plus(-z)`` that of ``D_minus``.
* The resonance ``kappa_hat`` is the zero of ``G_minus`` near 1.  It lies in the
  upper half plane; its mirror ``conj(kappa_hat)`` is the zero of ``G_plus``.
  ``Im kappa_hat`` is the decay rate.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import ContourViolation, CutViolation, NoConvergence
from .formfactor import ModelParams
from .radial import RadialFn, RadialGrid, make_grid, pv_integral

log = logging.getLogger(__name__)

CUT_TOL = 1e-12


def _cutoff(params: ModelParams):
    return 30.0 * params.ff.scale


def _line_density(params):
    """``F(r) = rho(r)^2 r``, the odd density behind every full-line integral."""
    ff = params.ff

    def F(z):
        if np.iscomplexobj(z):
            return ff.eval_complex(z) ** 2 * z
        return ff(z) ** 2 * z

    return F


def d_of_z(params: ModelParams, z):
    """``D(z)`` for ``z`` off the cut ``[0, inf)``, by adaptive quadrature."""
    z = complex(z)
    lam2 = params.lam**2
    if lam2 == 0:
        return 1.0 - z
    if z.real >= 0 and abs(z.imag) <= CUT_TOL * max(1.0, abs(z)):
        raise CutViolation(f"z = {z} lies on the cut [0, inf)")
    ff = params.ff
    upper = _cutoff(params)
    # near the cut the integrand is a narrow Lorentzian around sqrt(Re z):
    # split geometrically around it so the adaptive rule sees every scale
    edges = [0.0, upper]
    if 0 < z.real < upper**2:
        r0 = math.sqrt(z.real)
        width = max(abs(z.imag) / (2 * r0), 1e-300)
        offs = width * 10.0 ** np.arange(0, 12)
        offs = offs[offs < min(r0, upper - r0)]
        edges = sorted({0.0, upper, r0, *(r0 - offs), *(r0 + offs)})

    def part(fn):
        return sum(
            integrate.quad(fn, lo, hi, limit=500, epsabs=1e-15, epsrel=1e-12)[0]
            for lo, hi in zip(edges[:-1], edges[1:])
        )

    re = part(lambda r: (ff(r) ** 2 * r * r / (z - r * r)).real)
    im = part(lambda r: (ff(r) ** 2 * r * r / (z - r * r)).imag)
    return -z + 1.0 + lam2 * params.norm_sq + lam2 * 4.0 * math.pi * complex(re, im)


def d_plus(params: ModelParams, s):
    """``D_plus(s)`` for ``s >= 0`` (scalar or array) via the Plemelj split.

    Real part: ``1 - s + lam^2 N + 2 pi lam^2 PV int_R F(r)/(sqrt(s) - r) dr``;
    imaginary part: ``-2 pi^2 lam^2 sqrt(s) rho(sqrt(s))^2``.
    """
    s_arr = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s_arr < 0):
        raise ValueError("d_plus needs s >= 0")
    lam2 = params.lam**2
    x = np.sqrt(s_arr)
    base = 1.0 - s_arr + lam2 * params.norm_sq
    if lam2 == 0:
        out = base.astype(complex)
    else:
        F = _line_density(params)
        L = _cutoff(params)
        inside = x < L
        pv = np.zeros_like(x)
        if np.any(inside):
            pv[inside] = pv_integral(F, x[inside], -L, L, n_panels=240, order=24)
        out = base + 2 * math.pi * lam2 * pv - 2j * math.pi**2 * lam2 * F(x)
    return out[0] if np.ndim(s) == 0 else out


def d_minus(params, s):
    return np.conj(d_plus(params, s))


def _line_integral(params, z, eta, step=None):
    """``int_R F(r + i eta) / (z - r - i eta) dr`` by the trapezoid rule.

    The integrand is analytic in a strip around the line, so the trapezoid rule
    converges geometrically; the step is tied to the distance of ``z`` from
    the line.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    L = _cutoff(params) + abs(eta)
    gap = float(np.min(np.abs(eta - z.imag)))
    if step is None:
        step = min(0.04 * params.ff.scale, gap / 7.0)
    n = int(math.ceil(2 * L / step))
    if n > 2_000_000:
        raise ContourViolation(f"point too close to the integration line (gap {gap:.3g})")
    r = np.linspace(-L, L, n + 1)
    w = np.full(r.size, 2 * L / n)
    w[[0, -1]] *= 0.5
    line = r + 1j * eta
    Fw = _line_density(params)(line) * w
    out = np.empty(z.shape, dtype=complex)
    chunk = max(1, 4_000_000 // line.size)
    for lo in range(0, z.size, chunk):
        out[lo:lo + chunk] = (1.0 / (z[lo:lo + chunk, None] - line[None, :])) @ Fw
    return out


def default_eta(params, z):
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    eta = float(np.max(np.abs(z.imag))) + 0.5 * params.ff.scale
    return min(eta, 0.95 * params.ff.strip_half_width)


def g_plus(params: ModelParams, z, eta=None):
    """Continuation of ``D_plus(r^2)`` to ``|Im z| < eta``.

    ``G_plus(z) = 1 - z^2 + lam^2 N - 4 pi^2 i lam^2 F(z)
    + 2 pi lam^2 int_R F(r + i eta)/(z - r - i eta) dr``; independent of eta.
    """
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    lam2 = params.lam**2
    base = 1.0 - z * z + lam2 * params.norm_sq
    if lam2 == 0:
        return base[0] if scalar else base
    if eta is None:
        eta = default_eta(params, z)
    if np.any(np.abs(z.imag) >= eta):
        raise ContourViolation(f"|Im z| must stay below eta = {eta}")
    F = _line_density(params)
    out = base - 4j * math.pi**2 * lam2 * F(z) + 2 * math.pi * lam2 * _line_integral(params, z, eta)
    return out[0] if scalar else out


def g_minus(params: ModelParams, z, eta=None):
    """Continuation of ``D_minus(r^2)``; equals ``conj(G_plus(conj z))`` and ``G_plus(-z)``."""
    return np.conj(g_plus(params, np.conj(z), eta))


def g_continuation(params, z, eta=None, branch="+"):
    if branch == "+":
        return g_plus(params, z, eta)
    if branch == "-":
        return g_minus(params, z, eta)
    raise ValueError("branch must be '+' or '-'")


def kappa2(params: ModelParams) -> complex:
    """Second-order resonance coefficient: ``kappa_hat = 1 + kappa2 lam^2 + O(lam^4)``.

    ``kappa2 = (N + 2 pi PV int_R rho^2 r/(1-r) dr)/2 + i pi^2 rho(1)^2``.
    """
    F = _line_density(params)
    L = _cutoff(params)
    pv = pv_integral(F, 1.0, -L, L, n_panels=240, order=24)
    rho1 = float(params.ff(1.0))
    return complex(0.5 * (params.norm_sq + 2 * math.pi * pv), math.pi**2 * rho1**2)


def find_resonance(params: ModelParams, *, tol=1e-10, max_iter=60, seed=None):
    """Zero of ``G_minus`` near 1; returns ``(kappa_hat, residual)``."""
    if params.lam == 0:
        return 1.0 + 0.0j, 0.0
    G = lambda z: complex(g_minus(params, z))
    z = complex(seed) if seed is not None else 1.0 + params.lam**2 * kappa2(params)
    h = 1e-6
    res = abs(G(z))
    for _ in range(max_iter):
        dG = (G(z + h) - G(z - h)) / (2 * h)
        step = G(z) / dG
        damp = 1.0
        while damp > 1e-4:
            cand = z - damp * step
            cres = abs(G(cand))
            if cres < res or damp < 2e-4:
                break
            damp *= 0.5
        z, res = cand, cres
        if res < tol or abs(damp * step) < 1e-15:
            break
    if res >= tol:
        log.info("damped Newton stalled at residual %.3g; trying secant", res)
        try:
            z2 = optimize.newton(G, z, x1=z * (1 + 1e-4), tol=1e-15, maxiter=100)
            if abs(G(z2)) < res:
                z, res = complex(z2), abs(G(z2))
        except (RuntimeError, ZeroDivisionError) as exc:
            log.info("secant fallback failed: %s", exc)
    if not res < tol:
        raise NoConvergence(f"resonance search stopped at residual {res:.3g}", residual=res, last=z)
    return z, res


def count_zeros(params, re_range=(0.2, 2.0), im_range=(-0.5, 0.5), branch="-", n_side=800):
    """Winding number of ``G`` along a rectangle boundary (argument principle)."""
    (a, b), (c, d) = re_range, im_range
    t = np.linspace(0.0, 1.0, n_side, endpoint=False)
    path = np.concatenate([
        a + (b - a) * t + 1j * c,
        b + 1j * (c + (d - c) * t),
        b - (b - a) * t + 1j * d,
        a + 1j * (d - (d - c) * t),
    ])
    eta = max(abs(c), abs(d)) + 0.5 * params.ff.scale
    vals = g_continuation(params, path, eta, branch)
    if np.min(np.abs(vals)) < 1e-14:
        raise ContourViolation("zero on the counting rectangle")
    dphase = np.angle(np.roll(vals, -1) / vals)
    return int(round(dphase.sum() / (2 * math.pi)))


def default_grid(params, kappa_hat, n=2000, r_max=None):
    r_max = _cutoff(params) if r_max is None else r_max
    width = max(abs(kappa_hat.imag), 1e-6)
    return make_grid(n, r_max, scale=params.ff.scale, features=[(kappa_hat.real, width)])


@dataclass(frozen=True, eq=False)
class SpectralData:
    params: ModelParams
    grid: RadialGrid
    d_plus: np.ndarray
    q: RadialFn
    q_plus: RadialFn
    q_minus: RadialFn
    kappa_hat: complex
    resonance_residual: float
    q_norm: float
    inf_abs_d_plus: float

    @property
    def rho(self) -> RadialFn:
        return RadialFn(self.grid, self.params.ff(self.grid.nodes))

    def q_bar_analytic(self, z, eta=None):
        """Continuation of ``conj(Q)`` off the positive axis: ``-lam rho(z)/G_minus(z)``."""
        z = np.asarray(z, dtype=complex)
        return -self.params.lam * self.params.ff.eval_complex(z) / g_minus(self.params, z, eta)

    def q_analytic(self, z, eta=None):
        """Continuation of ``Q``: ``-lam rho(z)/G_plus(z)``."""
        z = np.asarray(z, dtype=complex)
        return -self.params.lam * self.params.ff.eval_complex(z) / g_plus(self.params, z, eta)

    def describe(self):
        return {
            "kappa_hat": [self.kappa_hat.real, self.kappa_hat.imag],
            "resonance_residual": self.resonance_residual,
            "q_norm": self.q_norm,
            "inf_abs_d_plus": self.inf_abs_d_plus,
            "grid": self.grid.describe(),
        }


def _inf_abs_d_plus(params, grid, dp):
    j = int(np.argmin(np.abs(dp)))
    lo = grid.nodes[max(j - 1, 0)]
    hi = grid.nodes[min(j + 1, grid.n - 1)]
    fine = np.linspace(lo, hi, 31)
    return float(min(np.min(np.abs(dp)), np.min(np.abs(d_plus(params, fine**2)))))


def build_spectral_data(params: ModelParams, grid: RadialGrid | None = None, *, n=2000,
                        r_max=None) -> SpectralData:
    kappa_hat, res = find_resonance(params)
    if grid is None:
        grid = default_grid(params, kappa_hat, n, r_max)
    r = grid.nodes
    dp = np.asarray(d_plus(params, r * r), dtype=complex)
    rho = params.ff(r)
    qv = -params.lam * rho / dp
    q = RadialFn(grid, qv)
    q_plus = RadialFn(grid, 0.5 * (np.sqrt(r) + 1 / np.sqrt(r)) * qv)
    q_minus = RadialFn(grid, 0.5 * (np.sqrt(r) - 1 / np.sqrt(r)) * qv)
    return SpectralData(params, grid, dp, q, q_plus, q_minus, complex(kappa_hat), float(res),
                        q.norm(), _inf_abs_d_plus(params, grid, dp))
