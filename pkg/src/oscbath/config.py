"""JSON run configuration, measure and test-function literals."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .formfactor import FormFactor, ModelParams

MIN_GRID = 64


def _read_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def config_hash(data) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class RunConfig:
    form_factor: FormFactor
    beta: float
    lam: float
    grid_n: int = 2000
    r_max: float | None = None
    seed: int = 42

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.form_factor, self.beta, self.lam)

    @property
    def grid_r_max(self):
        return 30.0 * self.form_factor.scale if self.r_max is None else self.r_max

    def to_dict(self):
        return {
            "form_factor": self.form_factor.to_dict(),
            "beta": self.beta,
            "lambda": self.lam,
            "grid": {"n": self.grid_n, "r_max": self.grid_r_max},
        }

    @property
    def hash(self):
        return config_hash(self.to_dict())

    @classmethod
    def from_dict(cls, d, seed=42):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        try:
            ff = FormFactor.from_dict(d.get("form_factor", {}))
            beta = float(d.get("beta", 1.0))
            lam = float(d.get("lambda", 0.1))
            grid = d.get("grid", {})
            n = int(grid.get("n", 2000))
            r_max = grid.get("r_max")
            r_max = None if r_max is None else float(r_max)
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"bad configuration value: {exc}") from exc
        if not beta > 0 or not math.isfinite(beta):
            raise ConfigError("beta must be a positive number")
        if not math.isfinite(lam):
            raise ConfigError("lambda must be finite")
        if n < MIN_GRID:
            raise ConfigError(f"grid.n must be at least {MIN_GRID}")
        if r_max is not None and not r_max > 0:
            raise ConfigError("grid.r_max must be positive")
        return cls(ff, beta, lam, n, r_max, seed)

    @classmethod
    def load(cls, path=None, seed=42):
        return cls.from_dict({} if path is None else _read_json(path), seed)


def load_measure(path):
    from .dyson import AtomicMeasure

    d = _read_json(path)
    try:
        return AtomicMeasure.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad measure: {exc}") from exc


def _profile_values(profile, r):
    kind = profile.get("kind", "gaussian")
    if kind == "gaussian":
        sigma = float(profile.get("sigma", 1.0))
        amp = float(profile.get("amplitude", 1.0))
        return amp * np.exp(-(r**2) / (2 * sigma**2))
    if kind == "damped":
        return float(profile.get("amplitude", 1.0)) * np.exp(-float(profile.get("rate", 1.0)) * r)
    if kind == "zero":
        return np.zeros_like(r)
    raise ConfigError(f"unknown function kind {kind!r}")


def test_function_from_dict(d, grid):
    """``{"c": [re, im], "f": {"kind": "gaussian", "sigma": 1.0}}``."""
    from .radial import RadialFn
    from .symplectic import TestFunction

    try:
        c = complex(*d.get("c", [0.0, 0.0]))
        f = _profile_values(d.get("f", {"kind": "zero"}), grid.nodes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad test function: {exc}") from exc
    return TestFunction(c, RadialFn(grid, f))


test_function_from_dict.__test__ = False


def load_test_function(path, grid):
    return test_function_from_dict(_read_json(path), grid)


def parse_range(text):
    """``start:stop:step`` with the stop included (up to rounding)."""
    try:
        parts = [float(x) for x in text.split(":")]
    except ValueError as exc:
        raise ConfigError(f"bad range {text!r}") from exc
    if len(parts) == 1:
        return np.array(parts)
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise ConfigError(f"range must be start:stop:step with step > 0, got {text!r}")
    start, stop, step = parts
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    # rounding keeps 0.05:0.2:0.05 from printing 0.15000000000000002
    return np.round(start + step * np.arange(count), 12)
