"""Radial momentum-space quadrature.

Rotation-invariant one-boson functions are represented by their values on the
nodes of a composite Gauss-Legendre grid on (0, r_max).  The 3-D volume factor
``4 pi r**2`` lives in the inner product, not in the stored values.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ContourPole, GridMismatch, PoleOutOfRange

DEFAULT_ORDER = 16


@lru_cache(maxsize=32)
def gauss_legendre(order):
    """Nodes and weights on [-1, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_nodes(breaks, order):
    """Map GL nodes onto every panel ``[breaks[i], breaks[i+1]]``."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(breaks)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def equidistributed_breaks(lower, upper, n_panels, size_fn, r_floor=None):
    """Panel breakpoints whose local width follows ``size_fn`` up to a common factor.

    The cumulative density ``int 1/size_fn`` is tabulated on a fine mesh and
    inverted at equally spaced levels.  ``r_floor`` replaces ``lower`` in the
    tabulation when the density is not integrable at ``lower`` (the first
    panel still starts at ``lower``).
    """
    start = lower if r_floor is None else r_floor
    if r_floor is not None and r_floor > 0:
        mesh = np.unique(np.concatenate([
            np.geomspace(r_floor, max(upper, 2 * r_floor), 4000),
            np.linspace(start, upper, 40000),
        ]))
    else:
        mesh = np.linspace(start, upper, 40000)
    mesh = mesh[(mesh >= start) & (mesh <= upper)]
    dens = 1.0 / size_fn(mesh)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(mesh))])
    levels = np.linspace(0.0, cdf[-1], n_panels + 1)
    breaks = np.interp(levels, cdf, mesh)
    breaks[0], breaks[-1] = lower, upper
    if np.any(np.diff(breaks) <= 0):
        raise ValueError("degenerate panel layout; increase the panel count")
    return breaks


def radial_size_profile(scale=1.0, features=(), log_zone=0.1, log_ratio=1.5):
    """Target panel width as a function of r.

    Widths are about ``0.3 scale`` in the bulk, shrink proportionally to r on
    ``(0, log_zone]``, grow linearly beyond six scales, and shrink to half a
    feature width around every ``(centre, width)`` in ``features``.
    """
    features = [(float(c), float(w)) for c, w in features]

    def size(r):
        r = np.asarray(r, dtype=float)
        bulk = 0.3 * scale * (1.0 + np.maximum(0.0, r - 6 * scale) / (2 * scale))
        s = np.where(r < log_zone, np.minimum(bulk, log_ratio * np.abs(r)), bulk)
        for c, w in features:
            s = np.minimum(s, np.maximum(0.5 * w, 0.5 * np.abs(r - c)))
        return s

    return size


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray
    r_max: float
    breaks: np.ndarray
    order: int = DEFAULT_ORDER
    scheme: str = "composite-gauss-legendre+log-near-zero"

    def __post_init__(self):
        for arr in (self.nodes, self.weights, self.breaks):
            arr.setflags(write=False)
        if not (np.all(np.diff(self.nodes) > 0) and self.nodes[0] > 0):
            raise ValueError("grid nodes must be positive and strictly increasing")
        if not np.all(self.weights > 0):
            raise ValueError("grid weights must be positive")

    @property
    def n(self):
        return self.nodes.size

    @property
    def n_panels(self):
        return self.breaks.size - 1

    @property
    def measure(self):
        """Weights of the 3-D radial measure ``4 pi r^2 dr``."""
        return 4.0 * np.pi * self.nodes**2 * self.weights

    def refine(self):
        """Bisect every panel (doubles the node count, nested breakpoints)."""
        mids = 0.5 * (self.breaks[1:] + self.breaks[:-1])
        breaks = np.sort(np.concatenate([self.breaks, mids]))
        return RadialGrid.from_breaks(breaks, self.order, self.scheme)

    @classmethod
    def from_breaks(cls, breaks, order=DEFAULT_ORDER, scheme="composite-gauss-legendre"):
        breaks = np.asarray(breaks, dtype=float).copy()
        nodes, weights = panel_nodes(breaks, order)
        return cls(nodes, weights, float(breaks[-1]), breaks, order, scheme)

    def same_as(self, other):
        return self is other or (
            self.n == other.n and np.array_equal(self.nodes, other.nodes)
        )

    def describe(self):
        return {
            "n": int(self.n),
            "r_max": self.r_max,
            "order": self.order,
            "panels": int(self.n_panels),
            "smallest_panel": float(np.diff(self.breaks).min()),
            "scheme": self.scheme,
        }


def make_grid(n=2000, r_max=30.0, *, scale=1.0, features=(), order=DEFAULT_ORDER, r_min=1e-8):
    """Composite GL grid with about ``n`` nodes (rounded up to whole panels)."""
    if n < 2 * order:
        raise ValueError(f"need at least {2 * order} nodes")
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    n_panels = math.ceil(n / order)
    size = radial_size_profile(scale, [f for f in features if 0 < f[0] < r_max])
    breaks = equidistributed_breaks(0.0, r_max, n_panels, size, r_floor=r_min)
    return RadialGrid.from_breaks(breaks, order, "composite-gauss-legendre+log-near-zero")


def gaussian_tail_bound(r_max, scale):
    """Upper bound on ``int_{r_max}^inf r^2 exp(-r^2/scale^2) dr`` (squared Gaussian tail)."""
    x = r_max / scale
    return scale**3 * (x / 2 + 1 / (2 * x)) * math.exp(-(x**2))


@dataclass(eq=False)
class RadialFn:
    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.n,):
            raise GridMismatch(f"expected {self.grid.n} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("RadialFn values must be finite")

    @classmethod
    def from_callable(cls, grid, fn):
        return cls(grid, fn(grid.nodes))

    def _check(self, other):
        if not self.grid.same_as(other.grid):
            raise GridMismatch("functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return RadialFn(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return RadialFn(self.grid, self.values - other.values)

    def __neg__(self):
        return RadialFn(self.grid, -self.values)

    def __mul__(self, c):
        if isinstance(c, RadialFn):
            self._check(c)
            return RadialFn(self.grid, self.values * c.values)
        return RadialFn(self.grid, self.values * c)

    __rmul__ = __mul__

    def conj(self):
        return RadialFn(self.grid, self.values.conj())

    def multiply(self, m):
        """Pointwise product with a radial multiplier (callable or node array)."""
        return RadialFn(self.grid, self.values * _weight_values(self.grid, m))

    def norm(self):
        return math.sqrt(max(inner(self, self).real, 0.0))

    def norm_alpha(self, alpha):
        """``|| |k|^alpha f ||``."""
        w = self.grid.measure * self.grid.nodes ** (2.0 * alpha)
        return math.sqrt(float(np.sum(w * np.abs(self.values) ** 2)))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["r", "re", "im"])
            for r, v in zip(self.grid.nodes, self.values):
                out.writerow([repr(float(r)), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path, grid):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != grid.n or not np.allclose(data[:, 0], grid.nodes, rtol=1e-14, atol=0):
            raise GridMismatch(f"{path} was not written on this grid")
        return cls(grid, data[:, 1] + 1j * data[:, 2])


def _weight_values(grid, weight):
    if weight is None:
        return 1.0
    if callable(weight):
        weight = weight(grid.nodes)
    weight = np.asarray(weight)
    if weight.ndim and weight.shape != (grid.n,):
        raise GridMismatch("multiplier does not match grid")
    if not np.all(np.isfinite(weight)):
        raise ValueError("multiplier not finite on the grid")
    return weight


def inner(f: RadialFn, g: RadialFn, weight=None) -> complex:
    """``<f | m g> = 4 pi int conj(f) m g r^2 dr`` (antilinear in ``f``)."""
    f._check(g)
    m = _weight_values(f.grid, weight)
    return complex(np.sum(f.grid.measure * m * f.values.conj() * g.values))


# Principal values -----------------------------------------------------------

def _default_pv_breaks(lower, upper, n_panels):
    return np.linspace(lower, upper, n_panels + 1)


def pv_integral(h, pole, lower=0.0, upper=30.0, *, n_panels=200, order=24, breaks=None,
                chunk=512):
    """``PV int_lower^upper h(r) / (pole - r) dr`` by singularity subtraction.

    ``h`` must accept numpy arrays; ``pole`` may be a scalar or an array.
    The subtracted integrand ``(h(r) - h(s)) / (s - r)`` is smooth and is
    integrated by composite GL; the remainder ``h(s) log((s-lower)/(upper-s))``
    is exact.
    """
    poles = np.atleast_1d(np.asarray(pole, dtype=float))
    if np.any(poles <= lower) or np.any(poles >= upper):
        raise PoleOutOfRange(f"pole outside ({lower}, {upper})")
    if breaks is None:
        breaks = _default_pv_breaks(lower, upper, n_panels)
    x, w = panel_nodes(breaks, order)
    hx = np.asarray(h(x))
    hs = np.asarray(h(poles))
    # derivative fallback for quadrature nodes numerically on top of a pole
    span = upper - lower
    step = 1e-5 * span
    dh = (np.asarray(h(poles + step)) - np.asarray(h(poles - step))) / (2 * step)
    out = np.empty(poles.shape, dtype=np.result_type(hx, hs, float))
    for lo in range(0, poles.size, chunk):
        s = poles[lo:lo + chunk, None]
        diff = s - x[None, :]
        close = np.abs(diff) < 1e-7 * span
        safe = np.where(close, 1.0, diff)
        g = np.where(close, -dh[lo:lo + chunk, None], (hx[None, :] - hs[lo:lo + chunk, None]) / safe)
        out[lo:lo + chunk] = g @ w
    out = out + hs * np.log((poles - lower) / (upper - poles))
    return out[0] if np.ndim(pole) == 0 else out


def pv_excision(h, pole, lower, upper, eps, rtol=1e-12):
    """Brute-force ``int_{|r-s|>eps} h(r)/(s-r) dr`` with adaptive quadrature (oracle use)."""
    from scipy import integrate

    f = lambda r: h(r) / (pole - r)
    a, _ = integrate.quad(f, lower, pole - eps, epsabs=0, epsrel=rtol, limit=500)
    b, _ = integrate.quad(f, pole + eps, upper, epsabs=0, epsrel=rtol, limit=500)
    return a + b


# Oscillatory line integrals --------------------------------------------------

def line_nodes(half_length, n_panels, order=DEFAULT_ORDER, features=(), scale=1.0):
    """GL nodes on [-L, L] graded around ``features`` (list of (centre, width))."""
    size = radial_size_profile(scale, features, log_zone=0.0)
    sym = lambda r: size(np.abs(r))
    breaks = equidistributed_breaks(-half_length, half_length, n_panels, sym)
    return panel_nodes(breaks, order)


def oscillatory_integral(h, t, kappa_shift, *, half_length=30.0, n_panels=None, order=DEFAULT_ORDER,
                         poles=(), features=()):
    """``int_R h(r) exp(i t r) dr``, evaluated on ``Im r = sign(t) kappa_shift``.

    ``t`` may be an array; ``t == 0`` uses the real line.  ``h`` must be
    analytic on the strip swept by the shift and is evaluated at complex
    arguments.  ``poles`` lists known singularities of ``h``; if one lies
    between the real line and the shifted contour ContourPole is raised, as
    it is when ``h`` returns non-finite values on the contour.
    """
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    tmax = float(np.max(np.abs(ts))) if ts.size else 0.0
    if n_panels is None:
        n_panels = max(120, int(math.ceil(2 * half_length * tmax / math.pi)))
    x, w = line_nodes(half_length, n_panels, order, features)
    out = np.empty(ts.shape, dtype=complex)
    for sign in (-1.0, 0.0, 1.0):
        sel = np.sign(ts) == sign
        if not np.any(sel):
            continue
        shift = sign * kappa_shift
        for p in poles:
            if shift != 0 and 0 <= p.imag * sign <= kappa_shift and abs(p.real) <= half_length:
                raise ContourPole(f"pole {p} lies between the real line and Im = {shift}")
        z = x + 1j * shift
        hz = np.asarray(h(z), dtype=complex)
        if not np.all(np.isfinite(hz)):
            raise ContourPole(f"integrand not finite on the contour Im = {shift}")
        phase = np.exp(1j * np.outer(ts[sel], z))
        out[sel] = phase @ (w * hz)
    return out[0] if np.ndim(t) == 0 else out


def shifted_l1(h, kappa_shift, *, half_length=30.0, n_panels=120, order=DEFAULT_ORDER):
    """``int_R |h(r + i kappa_shift)| dr`` on the same panels as the oscillatory integral."""
    x, w = line_nodes(half_length, n_panels, order)
    return float(np.sum(w * np.abs(h(x + 1j * kappa_shift))))
