"""Command-line entry point: ``oscbath <command> [options]``.

Exit codes: 0 success, 1 configuration error, 2 verification failure.
Series go to CSV, scalar reports to JSON.  Every run also writes a metadata
JSON next to ``--out`` (``<out>.meta.json``) or, without ``--out``, to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time

log = logging.getLogger("oscbath")

COMMANDS = ("resonance", "identities", "correlate", "equilibrium", "dyson", "verify")
SUITES = ("identities", "symplectic", "flow", "sum-rule", "sine-bound", "form-factor")
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class VerificationFailed(Exception):
    pass


def _common_flags(top):
    """Shared flags; the subcommand copy suppresses defaults so flags given
    before the subcommand are not overwritten."""
    def default(value):
        return value if top else argparse.SUPPRESS

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default(None), help="JSON run configuration")
    common.add_argument("--out", default=default(None),
                        help="output file (CSV for series, JSON for reports)")
    common.add_argument("--seed", type=int, default=default(42))
    common.add_argument("--threads", type=int, default=default(None),
                        help="BLAS threads and sweep workers")
    common.add_argument("--refine", type=int, default=default(0),
                        help="number of grid doublings for a convergence study")
    return common


def build_parser():
    common = _common_flags(top=False)
    p = argparse.ArgumentParser(prog="oscbath", description=__doc__.splitlines()[0],
                                parents=[_common_flags(top=True)])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("resonance", parents=[common], help="resonance location vs coupling")
    s.add_argument("--lambda-sweep", help="start:stop:step (default: the configured lambda)")

    s = sub.add_parser("identities", parents=[common], help="CCR identity residuals")
    s.add_argument("--trials", type=int, default=100)

    s = sub.add_parser("correlate", parents=[common], help="three-point correlation series")
    for name in ("--f1", "--f2", "--f3"):
        s.add_argument(name, help="test function JSON")
    s.add_argument("--t", default="0:20:0.25")

    s = sub.add_parser("equilibrium", parents=[common], help="equilibrium characteristic function")
    s.add_argument("--weyl", help="test function JSON (default: oscillator element 1)")
    s.add_argument("--t", default="0:10:1", help="times for the invariance check")

    s = sub.add_parser("dyson", parents=[common], help="anharmonic Dyson series")
    s.add_argument("--measure", required=True, help="atomic measure JSON")
    s.add_argument("--order", type=int, default=2)
    s.add_argument("--t", default="0:10:0.5")
    for name in ("--f", "--g", "--h"):
        s.add_argument(name, help="test function JSON")

    s = sub.add_parser("verify", parents=[common], help="bundled verification suites")
    s.add_argument("--suite", choices=SUITES + ("all",), default="all")
    s.add_argument("--trials", type=int, default=None)
    return p


# setup ------------------------------------------------------------------------

class _Context:
    def __init__(self, args):
        from .config import RunConfig

        self.args = args
        self.config = RunConfig.load(args.config, args.seed)
        self._spectral = {}
        self._ops = {}
        self.tolerances = {}

    def spectral(self, lam=None, level=0):
        from .spectral import build_spectral_data

        cfg = self.config
        lam = cfg.lam if lam is None else lam
        key = (lam, level)
        if key not in self._spectral:
            params = cfg.params.with_lambda(lam)
            if level == 0:
                sd = build_spectral_data(params, n=cfg.grid_n, r_max=cfg.grid_r_max)
            else:
                base = self.spectral(lam, level - 1)
                sd = build_spectral_data(params, base.grid.refine())
            self._spectral[key] = sd
        return self._spectral[key]

    def ops(self, level=0):
        from .scattering import build_ops

        if level not in self._ops:
            self._ops[level] = build_ops(self.spectral(level=level))
        return self._ops[level]

    def state(self):
        from .equilibrium import ThermalState

        return ThermalState(self.config.beta)

    def test_function(self, path, default, level=0):
        from .config import load_test_function

        grid = self.ops(level).grid
        return default(grid) if path is None else load_test_function(path, grid)


# output -----------------------------------------------------------------------

def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, float) else x for x in row])
    return buf.getvalue()


def _emit(ctx, text):
    out = ctx.args.out
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(ctx, obj):
    from .formfactor import _jsonable

    obj = dict(obj, config_hash=ctx.config.hash)
    _emit(ctx, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_meta(args, ctx, wall, status):
    from . import __version__
    from .formfactor import _jsonable

    meta = {
        "command": args.command,
        "status": status,
        "version": __version__,
        "config_hash": ctx.config.hash if ctx else None,
        "config": ctx.config.to_dict() if ctx else None,
        "seed": args.seed,
        "grid": None,
        "tolerances": ctx.tolerances if ctx else {},
        "wall_time_s": round(wall, 3),
    }
    if ctx and ctx._spectral:
        meta["grid"] = next(iter(ctx._spectral.values())).grid.describe()
    text = json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out + ".meta.json", "w") as fh:
            fh.write(text)
    else:
        sys.stderr.write(text)


# commands ---------------------------------------------------------------------

def cmd_resonance(ctx):
    from concurrent.futures import ThreadPoolExecutor

    from .config import parse_range

    args = ctx.args
    lams = parse_range(args.lambda_sweep) if args.lambda_sweep else [ctx.config.lam]

    def row(lam):
        sd = ctx.spectral(float(lam))
        return (float(lam), sd.kappa_hat.real, sd.kappa_hat.imag, sd.resonance_residual, sd.q_norm)

    workers = max(1, args.threads or 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, lams))  # map keeps the sweep order
    else:
        rows = [row(lam) for lam in lams]
    ctx.tolerances["max_resonance_residual"] = max(r[3] for r in rows)
    ctx.tolerances["max_sum_rule_error"] = max(abs(r[4] - 1) for r in rows)
    _emit(ctx, _csv_text(("lambda", "re_kappa_hat", "im_kappa_hat", "residual", "q_norm"), rows))


def _identity_study(ctx, trials):
    import numpy as np

    from .scattering import IDENTITY_NAMES, random_smooth_vectors, verify_ccr_identities

    levels = []
    for level in range(ctx.args.refine + 1):
        ops = ctx.ops(level)
        # same coefficients at every level so the vectors are the same functions
        vecs = random_smooth_vectors(ops.grid, trials, np.random.default_rng(ctx.args.seed))
        rep = verify_ccr_identities(ops, vectors=vecs)
        levels.append(rep)
    out = {"levels": [r.to_dict() for r in levels], "identities": list(IDENTITY_NAMES)}
    passed = all(r.passed for r in levels)
    if len(levels) > 1:
        conv = {}
        for name in IDENTITY_NAMES:
            errs = [r.values[name] for r in levels]
            # converged or already at the roundoff floor
            conv[name] = all(b <= max(2 * a, 1e-9) for a, b in zip(errs, errs[1:]))
        out["refinement_convergent"] = conv
        passed = passed and all(conv.values())
    out["passed"] = passed
    ctx.tolerances["ccr_residual"] = max(levels[-1].values[n] for n in IDENTITY_NAMES)
    return out


def cmd_identities(ctx):
    out = _identity_study(ctx, ctx.args.trials)
    _emit_json(ctx, out)
    if not out["passed"]:
        raise VerificationFailed("CCR identity residuals above threshold")


def cmd_correlate(ctx):
    from .config import parse_range
    from .equilibrium import three_point_series
    from .symplectic import TestFunction

    args = ctx.args
    zero = TestFunction.zero
    f1 = ctx.test_function(args.f1, zero)
    f2 = ctx.test_function(args.f2, lambda g: TestFunction.particle(1.0, g))
    f3 = ctx.test_function(args.f3, zero)
    ts = parse_range(args.t)
    series = three_point_series(f1, f2, f3, ts, ctx.state(), ctx.ops())
    _emit(ctx, _csv_text(("t", "re", "im", "abs_deviation"), series.to_rows()))


def cmd_equilibrium(ctx):
    import numpy as np

    from .config import parse_range
    from .equilibrium import gibbs_particle_char, omega_interacting
    from .symplectic import TestFunction, w_t

    args = ctx.args
    tf = ctx.test_function(args.weyl, lambda g: TestFunction.particle(1.0, g))
    ops, state = ctx.ops(), ctx.state()
    value = omega_interacting(tf, state, ops)
    drift = 0.0
    for t in parse_range(args.t):
        drift = max(drift, abs(omega_interacting(w_t(tf, float(t), ops), state, ops) - value))
    out = {"omega": value, "time_drift": drift}
    if not np.any(tf.f.values):
        out["uncoupled_oscillator_reference"] = gibbs_particle_char(tf.c, ctx.config.params)
    ctx.tolerances["kms_time_drift"] = drift
    _emit_json(ctx, out)


def cmd_dyson(ctx):
    from .config import load_measure, parse_range
    from .dyson import DysonConfig, dyson_three_point
    from .symplectic import TestFunction

    args = ctx.args
    measure = load_measure(args.measure)
    zero = TestFunction.zero
    f = ctx.test_function(args.f, zero)
    g = ctx.test_function(args.g, lambda gr: TestFunction.particle(1.0, gr))
    h = ctx.test_function(args.h, zero)
    try:
        cfg = DysonConfig(order=args.order)
    except ValueError as exc:
        from .errors import ConfigError

        raise ConfigError(str(exc)) from exc
    res = dyson_three_point(f, g, h, measure, parse_range(args.t), cfg, ctx.state(), ctx.ops())
    header = ["t", "re", "im"] + [f"abs_order_{n}" for n in range(cfg.order + 1)]
    header.append("truncation_dominates")
    rows = []
    for i, t in enumerate(res.times):
        tot = res.total[i]
        rows.append([float(t), float(tot.real), float(tot.imag)]
                    + [float(abs(x)) for x in res.terms[:, i]]
                    + [int(res.truncation_dominates[i])])
    ctx.tolerances["truncation_dominated_points"] = int(res.truncation_dominates.sum())
    _emit(ctx, _csv_text(header, rows))


def _run_suite(ctx, name, trials):
    import numpy as np

    from .dyson import verify_sine_product_bound
    from .formfactor import Report, verify_form_factor
    from .symplectic import verify_flow_laws, verify_symplecticity

    rng = np.random.default_rng(ctx.args.seed)
    if name == "identities":
        return _identity_study(ctx, trials or 100)
    if name == "symplectic":
        return verify_symplecticity(ctx.ops(), trials or 100, rng).to_dict()
    if name == "flow":
        return verify_flow_laws(ctx.ops(), trials or 10, rng).to_dict()
    if name == "sine-bound":
        return verify_sine_product_bound(trials or 10_000, seed=ctx.args.seed).to_dict()
    if name == "form-factor":
        return verify_form_factor(ctx.config.form_factor, ctx.config.beta).to_dict()
    if name == "sum-rule":
        sd = ctx.spectral()
        rep = Report("sum_rule")
        rep.values.update(q_norm=sd.q_norm, error=abs(sd.q_norm - 1.0))
        rep.clauses["norm_one"] = abs(sd.q_norm - 1.0) < 1e-5
        return rep.to_dict()
    raise ValueError(name)


def cmd_verify(ctx):
    args = ctx.args
    names = SUITES if args.suite == "all" else (args.suite,)
    results = {}
    for name in names:
        log.info("running suite %s", name)
        results[name] = _run_suite(ctx, name, args.trials)
    passed = all(r["passed"] for r in results.values())
    ctx.tolerances.update({k: v.get("values", {}) for k, v in results.items() if "values" in v})
    _emit_json(ctx, {"passed": passed, "suites": results})
    if not passed:
        failed = [k for k, r in results.items() if not r["passed"]]
        raise VerificationFailed("failed suites: " + ", ".join(failed))


HANDLERS = {
    "resonance": cmd_resonance,
    "identities": cmd_identities,
    "correlate": cmd_correlate,
    "equilibrium": cmd_equilibrium,
    "dyson": cmd_dyson,
    "verify": cmd_verify,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = os.environ.get("OSCBATH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads:
        # only effective before the BLAS library is loaded
        for var in THREAD_VARS:
            os.environ.setdefault(var, str(args.threads))

    from .errors import ConfigError, OscBathError

    start = time.perf_counter()
    ctx = None
    status, code = "ok", 0
    try:
        ctx = _Context(args)
        HANDLERS[args.command](ctx)
    except ConfigError as exc:
        print(f"oscbath: configuration error: {exc}", file=sys.stderr)
        status, code = "config-error", 1
    except VerificationFailed as exc:
        print(f"oscbath: verification failed: {exc}", file=sys.stderr)
        status, code = "verification-failed", 2
    except OscBathError as exc:
        print(f"oscbath: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, code = "error", 2
    _write_meta(args, ctx, time.perf_counter() - start, status)
    return code


if __name__ == "__main__":
    sys.exit(main())
