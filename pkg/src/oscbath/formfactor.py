"""Coupling form factors and model parameters.

A form factor is an even, positive radial function with an analytic
continuation to a horizontal strip around the real axis.  The default family
is the Gaussian ``A * exp(-r**2 / (2 sigma**2))``, which is entire.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import QuadratureDivergence, StripViolation

ALPHAS = (-1.0, -0.5, 0.0, 0.5)
QUAD_RTOL = 1e-10


@dataclass(frozen=True)
class FormFactor:
    """Radial coupling function, complex-evaluable on ``|Im z| <= strip_half_width``.

    ``family`` is ``"gaussian"`` (uses ``sigma`` and ``amplitude``) or
    ``"custom"`` (uses ``func``, which must accept complex numpy arrays).
    """

    family: str = "gaussian"
    sigma: float = 1.0
    amplitude: float = 1.0
    strip_half_width: float = math.inf
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family == "gaussian":
            if self.sigma <= 0 or self.amplitude < 0:
                raise ValueError("gaussian form factor needs sigma > 0 and amplitude >= 0")
        elif self.family == "custom":
            if self.func is None:
                raise ValueError("custom form factor needs a callable")
        else:
            raise ValueError(f"unknown form-factor family {self.family!r}")
        if self.strip_half_width <= 0:
            raise ValueError("strip_half_width must be positive")

    @classmethod
    def gaussian(cls, sigma=1.0, amplitude=1.0, strip_half_width=math.inf):
        return cls("gaussian", float(sigma), float(amplitude), float(strip_half_width))

    @classmethod
    def custom(cls, func, strip_half_width, scale=1.0):
        return cls("custom", float(scale), 1.0, float(strip_half_width), func)

    @property
    def scale(self) -> float:
        """Characteristic radial width (sets default cutoffs)."""
        return self.sigma

    def _raw(self, z):
        if self.family == "gaussian":
            return self.amplitude * np.exp(-(z * z) / (2.0 * self.sigma**2))
        return self.func(z)

    def __call__(self, r):
        """Real evaluation; accepts scalars or arrays."""
        r = np.asarray(r, dtype=float)
        out = self._raw(r)
        return np.real(out) if np.iscomplexobj(out) else out

    def eval_complex(self, z):
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z.imag) > self.strip_half_width):
            raise StripViolation(
                f"|Im z| = {np.max(np.abs(z.imag)):.4g} exceeds strip half-width "
                f"{self.strip_half_width:.4g}"
            )
        out = np.asarray(self._raw(z), dtype=complex)
        return out[()] if out.ndim == 0 else out

    def to_dict(self):
        if self.family != "gaussian":
            raise ValueError("only the gaussian family is serialisable")
        d = {"family": "gaussian", "sigma": self.sigma, "amplitude": self.amplitude}
        if math.isfinite(self.strip_half_width):
            d["strip_half_width"] = self.strip_half_width
        return d

    @classmethod
    def from_dict(cls, d):
        family = d.get("family", "gaussian")
        if family != "gaussian":
            raise ValueError(f"form factor family {family!r} cannot be built from JSON")
        return cls.gaussian(
            d.get("sigma", 1.0), d.get("amplitude", 1.0), d.get("strip_half_width", math.inf)
        )


def _radial_integral(g, what):
    val, err = integrate.quad(g, 0.0, np.inf, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)
    if not np.isfinite(val) or err > 1e3 * QUAD_RTOL * max(abs(val), 1e-300):
        raise QuadratureDivergence(f"{what}: value {val}, error estimate {err}")
    return val, err


def coupling_norms(ff: FormFactor, alphas=ALPHAS):
    """Return ``(norm_sq, {alpha: || |k|^alpha rho ||^2})``.

    Every norm is the radial reduction ``4 pi int_0^inf r^(2+2 alpha) rho(r)^2 dr``.
    """
    norms = {}
    for a in alphas:
        val, _ = _radial_integral(
            lambda r, a=a: r ** (2.0 + 2.0 * a) * ff(r) ** 2, f"weighted norm alpha={a}"
        )
        norms[a] = 4.0 * math.pi * val
    if -1.0 in norms:
        norm_sq = norms[-1.0]
    else:
        norm_sq = 4.0 * math.pi * _radial_integral(lambda r: ff(r) ** 2, "norm")[0]
    return norm_sq, norms


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature, coupling constant and the derived quantities."""

    ff: FormFactor
    beta: float
    lam: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @cached_property
    def norm_sq(self) -> float:
        """|| |k|^-1 rho ||^2, always recomputed from the form factor."""
        return coupling_norms(self.ff, (-1.0,))[0]

    @property
    def R(self) -> float:
        return 0.5 * self.lam**2 * self.norm_sq

    def with_lambda(self, lam):
        return ModelParams(self.ff, self.beta, lam)

    def to_dict(self):
        return {"form_factor": self.ff.to_dict(), "beta": self.beta, "lambda": self.lam}


@dataclass
class Report:
    """Pass/fail per named clause plus the numbers behind each verdict."""

    name: str
    clauses: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    def to_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "clauses": {k: bool(v) for k, v in self.clauses.items()},
            "values": _jsonable(self.values),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return _jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def strip_integral(ff: FormFactor, s: float) -> float:
    """``int_R |rho(r + i s)|^2 (1 + |r|^3) dr``."""

    def g(r):
        return abs(ff.eval_complex(complex(r, s))) ** 2 * (1.0 + abs(r) ** 3)

    val, _ = _radial_integral(g, f"strip integral at s={s}")
    return 2.0 * val if ff.family == "gaussian" else val + integrate.quad(
        lambda r: g(-r), 0.0, np.inf, epsrel=QUAD_RTOL, limit=400
    )[0]


def verify_form_factor(ff: FormFactor, beta: float, n_samples: int = 2001) -> Report:
    """Check positivity, evenness, strip coverage and the weighted strip integrals.

    The strip integral is sampled on the centre line, the mid lines and the
    boundary lines only; this is a heuristic, not a proof of the supremum bound.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    rep = Report("form_factor_conditions")
    r = np.linspace(0.0, 30.0 * ff.scale, n_samples)[1:]
    vals = ff(r)
    rep.clauses["positivity"] = bool(np.all(vals > 0))
    rep.values["min_sampled"] = float(vals.min())
    rep.clauses["evenness"] = bool(np.all(ff(-r) == vals))
    width = 2.0 * math.pi / beta
    rep.clauses["strip_coverage"] = ff.strip_half_width >= width
    rep.values["required_half_width"] = width
    rep.values["strip_half_width"] = ff.strip_half_width
    finite = True
    for s in (0.0, 0.5 * width, -0.5 * width, width, -width):
        try:
            val = strip_integral(ff, s)
        except (StripViolation, QuadratureDivergence) as exc:
            rep.values[f"strip_integral[{s:+.6g}]"] = f"failed: {exc}"
            finite = False
            continue
        rep.values[f"strip_integral[{s:+.6g}]"] = val
        finite = finite and math.isfinite(val)
    rep.clauses["strip_integral_finite"] = finite
    return rep
