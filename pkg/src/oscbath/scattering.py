"""Discretized scattering operators G, T, T*, W+ and W- on a radial grid.

Every operator here has the form ``diag(d) + sum_k diag(u_k) A diag(v_k)``
where ``A`` is the real Nystrom matrix of the principal-value part of G.
Keeping that structure means only one dense N x N matrix is ever stored,
complex conjugation is exact (``A`` is real) and diagonal sandwiches such as
``|k|^{-1/2} T* |k|^{1/2}`` cost nothing to form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formfactor import Report
from .radial import RadialFn, RadialGrid, gauss_legendre
from .spectral import SpectralData

TWO_PI_SQ = 2.0 * math.pi**2


def lagrange_diff_matrix(x):
    """Differentiation matrix of the interpolant through nodes ``x``."""
    n = x.size
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    D = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def pv_nystrom_matrix(grid: RadialGrid) -> np.ndarray:
    """Real matrix ``A`` with ``(A h)_i ~ 4 pi PV int h(r') r'^2 / ((r_i r')^{1/2} (r_i^2 - r'^2)) dr'``.

    Row i integrates ``phi(r') / (r_i - r')`` with the smooth factor
    ``phi(r') = 4 pi h(r') r'^{3/2} / (r_i^{1/2} (r_i + r'))`` by singularity
    subtraction.  The subtracted integrand at its own node is the derivative
    ``-phi'(r_i)``, taken by differentiating the panel interpolant; the
    remaining ``phi(r_i) log(r_i / (r_max - r_i))`` is exact.
    """
    r, w = grid.nodes, grid.weights
    n, p = grid.n, grid.order
    A = r[:, None] - r[None, :]
    np.fill_diagonal(A, 1.0)
    np.divide(w[None, :], A, out=A)
    np.fill_diagonal(A, 0.0)
    diag = np.log(r / (grid.r_max - r)) - A.sum(axis=1)
    np.fill_diagonal(A, diag)
    x_ref, _ = gauss_legendre(p)
    D_ref = lagrange_diff_matrix(x_ref)
    widths = np.diff(grid.breaks)
    for k in range(grid.n_panels):
        sl = slice(k * p, (k + 1) * p)
        A[sl, sl] -= w[sl, None] * D_ref * (2.0 / widths[k])
    # multiply in the smooth factor m_ij = 4 pi r_j^{3/2} / (r_i^{1/2} (r_i + r_j))
    sr = np.sqrt(r)
    for lo in range(0, n, 512):
        rows = slice(lo, min(lo + 512, n))
        A[rows] *= 4.0 * np.pi * (r * sr)[None, :] / (sr[rows, None] * (r[rows, None] + r[None, :]))
    return A


def _real_matmul(A, x):
    # avoids numpy promoting the real matrix to a complex copy
    if np.iscomplexobj(x):
        return A @ x.real + 1j * (A @ x.imag)
    return A @ x


@dataclass(frozen=True, eq=False)
class GridOperator:
    """``diag(d) + sum_k diag(u_k) A diag(v_k)`` for a shared real matrix ``A``."""

    label: str
    grid: RadialGrid
    pv: np.ndarray = field(repr=False)
    d: np.ndarray = field(repr=False)
    terms: tuple = field(default=(), repr=False)

    def apply(self, h):
        if isinstance(h, RadialFn):
            return RadialFn(self.grid, self.apply(h.values))
        h = np.asarray(h)
        out = self.d * h
        for u, v in self.terms:
            out = out + u * _real_matmul(self.pv, v * h)
        return out

    __call__ = apply

    def conj_op(self):
        """``A_bar h = conj(A conj(h))``."""
        return GridOperator(
            "bar(" + self.label + ")", self.grid, self.pv, np.conj(self.d),
            tuple((np.conj(u), np.conj(v)) for u, v in self.terms),
        )

    def sandwich(self, left, right, label=None):
        """``diag(left) self diag(right)``."""
        return GridOperator(
            label or self.label, self.grid, self.pv, left * self.d * right,
            tuple((left * u, v * right) for u, v in self.terms),
        )

    def scaled(self, c, label=None):
        return GridOperator(label or self.label, self.grid, self.pv, c * self.d,
                            tuple((c * u, v) for u, v in self.terms))

    def __add__(self, other):
        return GridOperator(f"{self.label}+{other.label}", self.grid, self.pv,
                            self.d + other.d, self.terms + other.terms)

    def matrix(self):
        """Dense matrix on node values (N x N complex)."""
        M = np.diag(np.broadcast_to(self.d, (self.grid.n,)).astype(complex))
        for u, v in self.terms:
            M += u[:, None] * self.pv * v[None, :]
        return M


def _ones(grid):
    return np.ones(grid.n)


def build_G(grid: RadialGrid, spectral: SpectralData | None = None, pv=None) -> GridOperator:
    """``G = G_PV - 2 pi^2 i`` (the delta part of the boundary value is a multiple of 1)."""
    pv = pv_nystrom_matrix(grid) if pv is None else pv
    one = _ones(grid)
    return GridOperator("G", grid, pv, np.full(grid.n, -1j * TWO_PI_SQ), ((one, one),))


def build_T_and_Tstar(grid, spectral: SpectralData, G: GridOperator | None = None):
    G = build_G(grid) if G is None else G
    lam = spectral.params.lam
    sr = np.sqrt(grid.nodes)
    q = spectral.q.values
    rho = spectral.params.ff(grid.nodes)
    one = _ones(grid)
    T = (GridOperator("I", grid, G.pv, one.astype(complex))
         + G.sandwich(lam * sr * q, sr * rho)).scaled(1.0, "T")
    Tstar = (GridOperator("I", grid, G.pv, one.astype(complex))
             + G.sandwich(-lam * sr * rho, sr * np.conj(q))).scaled(1.0, "Tstar")
    return T, Tstar


def w_minus_kernel(grid, spectral):
    """Dense matrix of ``W-`` from its closed-form smooth kernel (weights folded in)."""
    r, w = grid.nodes, grid.weights
    lam = spectral.params.lam
    rho = spectral.params.ff(r)
    qb = np.conj(spectral.q.values)
    sr = np.sqrt(r)
    return (0.5 * lam * rho[:, None] * 4.0 * np.pi * (qb * r * r * w)[None, :]
            / (sr[:, None] * sr[None, :] * (r[:, None] + r[None, :])))


@dataclass(frozen=True, eq=False)
class ScatteringOps:
    spectral: SpectralData
    G: GridOperator
    T: GridOperator
    Tstar: GridOperator
    Wplus: GridOperator
    Wminus: GridOperator
    Wplus_star: GridOperator
    Wminus_star: GridOperator
    bar: dict

    @property
    def grid(self):
        return self.spectral.grid

    def op(self, name):
        """Look up an operator by name; a ``bar_`` prefix gives the conjugate operator."""
        if name.startswith("bar_"):
            return self.bar[name[4:]]
        return getattr(self, name)


def build_W(grid, T_ops):
    T, Tstar = T_ops
    sr = np.sqrt(grid.nodes)
    isr = 1.0 / sr
    a = Tstar.sandwich(isr, sr)
    b = Tstar.sandwich(sr, isr)
    wp = (a + b).scaled(0.5, "Wplus")
    wm = (a + b.scaled(-1.0)).scaled(0.5, "Wminus")
    a = T.sandwich(sr, isr)
    b = T.sandwich(isr, sr)
    wps = (a + b).scaled(0.5, "Wplus*")
    wms = (a + b.scaled(-1.0)).scaled(0.5, "Wminus*")
    return wp, wm, wps, wms


def build_ops(spectral: SpectralData) -> ScatteringOps:
    grid = spectral.grid
    G = build_G(grid)
    T, Tstar = build_T_and_Tstar(grid, spectral, G)
    wp, wm, wps, wms = build_W(grid, (T, Tstar))
    named = {"G": G, "T": T, "Tstar": Tstar, "Wplus": wp, "Wminus": wm,
             "Wplus_star": wps, "Wminus_star": wms}
    bar = {k: v.conj_op() for k, v in named.items()}
    return ScatteringOps(spectral, G, T, Tstar, wp, wm, wps, wms, bar)


# Test vectors -----------------------------------------------------------------

def smooth_basis(grid, size=8, decay=1.0):
    """Columns ``exp(-decay r) L_k(2 decay r)`` (Laguerre), k < size."""
    from scipy.special import eval_laguerre

    r = grid.nodes
    return np.stack([np.exp(-decay * r) * eval_laguerre(k, 2 * decay * r) for k in range(size)], axis=1)


def random_smooth_vectors(grid, count, rng, size=8):
    """Random complex combinations of the damped smooth basis (grid independent)."""
    coef = rng.standard_normal((size, count)) + 1j * rng.standard_normal((size, count))
    return smooth_basis(grid, size) @ coef


def orthonormal_smooth_basis(grid, size=24, decay=0.7):
    """Columns orthonormal for the discrete ``4 pi r^2 dr`` inner product."""
    B = smooth_basis(grid, size, decay)
    sq = np.sqrt(grid.measure)
    Qm, _ = np.linalg.qr(sq[:, None] * B)
    return Qm / sq[:, None]


def _inner(grid, f, g):
    return np.sum(grid.measure * np.conj(f) * g)


def _norm(grid, f):
    return math.sqrt(max(_inner(grid, f, f).real, 0.0))


def skewness_residual(ops: ScatteringOps, vectors):
    """max |<f|G g> + <G f|g>| / (||f|| ||G g|| + ||G f|| ||g||) over vector pairs."""
    grid = ops.grid
    Gv = np.stack([ops.G(v) for v in vectors.T], axis=1)
    worst = 0.0
    k = vectors.shape[1]
    for i in range(k):
        for j in range(k):
            f, g, Gf, Gg = vectors[:, i], vectors[:, j], Gv[:, i], Gv[:, j]
            num = abs(_inner(grid, f, Gg) + _inner(grid, Gf, g))
            den = _norm(grid, f) * _norm(grid, Gg) + _norm(grid, Gf) * _norm(grid, g)
            worst = max(worst, num / den)
    return worst


def w_minus_hs_distance(ops: ScatteringOps, basis=None):
    """Hilbert-Schmidt distance between composed and closed-form W-, on a smooth subspace.

    Returns ``(distance, hs_norm_on_subspace)``; both use the discrete ``4 pi r^2 dr`` norm.
    """
    grid = ops.grid
    B = orthonormal_smooth_basis(grid) if basis is None else basis
    K = w_minus_kernel(grid, ops.spectral)
    comp = np.stack([ops.Wminus(b) for b in B.T], axis=1)
    ker = K @ B
    mu = grid.measure[:, None]
    dist = math.sqrt(float(np.sum(mu * np.abs(comp - ker) ** 2)))
    ref = math.sqrt(float(np.sum(mu * np.abs(ker) ** 2)))
    return dist, ref


def w_minus_hs_norm(grid, spectral):
    """Full Hilbert-Schmidt norm of the closed-form W- kernel on the grid."""
    mu = grid.measure
    kernel = w_minus_kernel(grid, spectral) / mu[None, :]
    return math.sqrt(float(np.einsum("i,j,ij->", mu, mu, np.abs(kernel) ** 2)))


IDENTITY_NAMES = (
    "Wp*Wp - Wm*Wm + P+ - P- = 1",
    "Wp Wp* - barWm barWm* = 1",
    "barWp* Wm - barWm* Wp + P+- - P-+ = 0",
    "Wm Wp* - barWp barWm* = 0",
)


def identity_residuals(ops: ScatteringOps, f):
    """Residual vectors of the four CCR identities applied to ``f``."""
    grid = ops.grid
    qp, qm = ops.spectral.q_plus.values, ops.spectral.q_minus.values
    ip = lambda a, b: _inner(grid, a, b)
    o = ops.op
    r1 = (o("Wplus_star")(o("Wplus")(f)) - o("Wminus_star")(o("Wminus")(f))
          + ip(qp, f) * qp - ip(qm, f) * qm - f)
    r2 = o("Wplus")(o("Wplus_star")(f)) - o("bar_Wminus")(o("bar_Wminus_star")(f)) - f
    r3 = (o("bar_Wplus_star")(o("Wminus")(f)) - o("bar_Wminus_star")(o("Wplus")(f))
          + ip(qm, f) * np.conj(qp) - ip(qp, f) * np.conj(qm))
    r4 = o("Wminus")(o("Wplus_star")(f)) - o("bar_Wplus")(o("bar_Wminus_star")(f))
    return r1, r2, r3, r4


def verify_ccr_identities(ops: ScatteringOps, trials=100, rng=None, vectors=None) -> Report:
    """Max relative residual ``||lhs f - rhs f|| / ||f||`` per identity."""
    rng = np.random.default_rng(42) if rng is None else rng
    grid = ops.grid
    if vectors is None:
        vectors = random_smooth_vectors(grid, trials, rng)
    worst = [0.0] * 4
    for f in vectors.T:
        nf = _norm(grid, f)
        for k, res in enumerate(identity_residuals(ops, f)):
            worst[k] = max(worst[k], _norm(grid, res) / nf)
    rep = Report("ccr_identities")
    for name, val in zip(IDENTITY_NAMES, worst):
        rep.values[name] = val
        rep.clauses[name] = val < 1e-4
    rep.values["trials"] = int(vectors.shape[1])
    rep.values["grid"] = grid.describe()
    return rep
