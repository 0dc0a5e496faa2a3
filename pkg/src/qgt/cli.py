"""Command-line interface.

Examples
--------
    qgt dist --theta 0 --nparam 1 --kmax 3
    qgt test build chi2 -n 1 --n0 1 --alpha 0.1 --format json
    qgt curve --figure 1 --grid 0:3:0.05
    qgt verify --suite concentrator -n 3
    qgt estimate -n 5 --nparam 1 --theta 2+1j --draws 100000
    qgt nchisq -n 1 --nparam 1 --alpha 0.125
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .distributions import (
    GaussianParams,
    NChiSqParams,
    NumberPmf,
    nchisq_cdf,
    nchisq_upper_point,
)
from .estimation import sld_fisher, umvue_mse, umvue_simulate
from .fock import MemoryEnvelopeError, TruncationError
from .heterodyne import DominanceError, comparison_curve
from .optimal_tests import (
    ConditionalTest,
    ThresholdTest,
    build_chi2_test,
    build_mean_test,
    chi2_power,
    compose_test,
    f_test_type2,
    f_thresholds,
    mean_test_power,
    t_test_type2,
    t_thresholds,
)
from .verify import run_suite

SCHEMA = 1
DEFAULT_SEED = 20240607
DEFAULT_ALPHA = 0.05


class CliError(Exception):
    """Domain error reported to the user with a nonzero exit status."""


@dataclass
class RunConfig:
    """Validated parameters of one invocation."""

    command: str
    params: dict
    fmt: str = "csv"
    seed: int = DEFAULT_SEED
    dim: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        alpha = self.params.get("alpha")
        if alpha is not None and not (0 < alpha < 1):
            raise CliError(f"alpha must lie in (0, 1), got {alpha}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise CliError("seed must be an unsigned 64-bit integer")
        if self.dim is not None and self.dim < 2:
            raise CliError("--dim must be at least 2")


# ---------------------------------------------------------------------------
# parsing helpers
# ---------------------------------------------------------------------------


def parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}")


def parse_grid(text: str) -> list[float]:
    """``a:b:step`` (inclusive), a comma list, or a single value."""
    text = text.strip()
    if not text:
        raise CliError("grid must be nonempty")
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise CliError(f"grid {text!r} must look like start:stop:step")
        a, b, h = (float(p) for p in parts)
        if h <= 0 or b < a:
            raise CliError(f"grid {text!r} needs step > 0 and stop >= start")
        count = int(math.floor((b - a) / h + 1e-9)) + 1
        return [round(a + i * h, 12) for i in range(count)]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise CliError(f"cannot parse grid {text!r}")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, complex):
        return repr(x)
    return str(x)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def emit(out, fmt: str, columns: list[str], rows: list, meta: dict | None = None):
    """Write a table as CSV or as a JSON document."""
    if fmt == "json":
        doc = {"schema": SCHEMA}
        doc.update(meta or {})
        doc["rows"] = [dict(zip(columns, r)) for r in rows]
        out.write(json.dumps(_jsonable(doc), sort_keys=False) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def emit_record(out, fmt: str, record: dict):
    if fmt == "json":
        doc = {"schema": SCHEMA}
        doc.update(record)
        out.write(json.dumps(_jsonable(doc)) + "\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in record.items():
        w.writerow([k, json.dumps(_jsonable(v)) if isinstance(v, (dict, list, tuple)) else _fmt(v)])


def _alpha(args) -> float:
    return DEFAULT_ALPHA if args.alpha is None else args.alpha


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + m.replace("_", "-") for m in missing)
        raise CliError(f"missing required option(s): {flags}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_dist(args, out):
    _need(args, "theta", "nparam")
    p = GaussianParams(args.theta, args.nparam)
    law = NumberPmf(p)
    if args.kmax is not None:
        if args.kmax < 0:
            raise CliError("--kmax must be >= 0")
        kmax = args.kmax
    else:
        kmax = law.cutoff(1e-9)
    pmf = law.pmf_array(kmax)
    cdf = np.cumsum(pmf)
    if args.kmax is None:
        # stop at the first row where the cumulative mass reaches 1 - 1e-9
        stop = int(np.searchsorted(cdf, 1 - 1e-9)) + 1
        pmf, cdf = pmf[:stop], cdf[:stop]
    rows = [(k, float(pmf[k]), float(min(cdf[k], 1.0))) for k in range(len(pmf))]
    emit(out, args.format, ["k", "pmf", "cdf"], rows,
         {"theta": complex(p.theta), "nparam": p.n_param})


def _threshold_record(t: ThresholdTest) -> dict:
    if t.kind == "chi2":
        return {"kind": "chi2", "n": t.dof, "N0": t.n_param, "alpha": t.level,
                "K0": t.cutoff, "gamma": t.gamma}
    return {"kind": "mean", "R": t.radius, "N": t.n_param, "alpha": t.level,
            "k_R": t.cutoff, "gamma": t.gamma}


def _core_record(core) -> dict:
    if isinstance(core, ThresholdTest):
        return _threshold_record(core)
    if core.mode == "t":
        return {"kind": "t", "n": core.dims[1], "alpha": core.level}
    return {"kind": "F", "m": core.dims[0], "n": core.dims[1], "alpha": core.level}


def cmd_test_build(args, out):
    kind = args.kind.lower()
    a = args.alpha = _alpha(args)
    if kind == "chi2":
        _need(args, "n", "n0")
        emit_record(out, args.format, _threshold_record(build_chi2_test(args.n, args.n0, a)))
    elif kind == "mean":
        _need(args, "nparam")
        R = args.r if args.r is not None else 0.0
        emit_record(out, args.format, _threshold_record(build_mean_test(R, args.nparam, a)))
    elif kind == "t":
        _need(args, "n")
        smax = args.smax if args.smax is not None else 10
        rows = [(s,) + tuple(t_thresholds(s, args.n, a)) for s in range(smax + 1)]
        emit(out, args.format, ["s", "c", "gamma"], rows, {"kind": "t", "n": args.n, "alpha": a})
    elif kind == "f":
        _need(args, "m", "n")
        smax = args.smax if args.smax is not None else 10
        rows = [(s,) + tuple(f_thresholds(s, args.m, args.n, a)) for s in range(smax + 1)]
        emit(out, args.format, ["s", "c1", "c2", "g1", "g2"], rows,
             {"kind": "F", "m": args.m, "n": args.n, "alpha": a})
    elif kind in {f"h{i}" for i in range(1, 9)}:
        params = {"alpha": a}
        for key, attr in (("n", "n"), ("m", "m"), ("R0", "r0"), ("N", "nparam"),
                          ("N0", "n0"), ("theta", "theta"), ("eta", "eta")):
            val = getattr(args, attr, None)
            if val is not None:
                params[key] = val
        ct = compose_test(kind.upper(), **params)
        pre = ct.pre_unitary
        record = {
            "problem": ct.problem,
            "pre_unitary": {"name": pre.name, "m": pre.m, "n": pre.n,
                            "shifts": [complex(s) for s in pre.shifts]},
            "core": _core_record(ct.core),
            "core_modes": list(ct.core_modes),
            "passthrough_modes": list(ct.passthrough_modes),
            "n_modes": ct.n_modes,
        }
        emit_record(out, args.format, record)
    else:
        raise CliError(f"unknown test kind {args.kind!r}")


def cmd_curve(args, out):
    _need(args, "grid")
    grid = parse_grid(args.grid)
    if args.figure is not None:
        problem = {1: "fig1", 2: "fig2"}.get(args.figure)
        if problem is None:
            raise CliError("--figure must be 1 or 2")
        curve = comparison_curve(problem, grid, n_param=args.nparam if problem == "fig1" else args.n0,
                                 alpha=args.alpha)
        label = "r" if problem == "fig1" else "N"
        emit(out, args.format, [label, "beta_number", "beta_heterodyne"], curve.rows(),
             {"figure": args.figure})
        return
    kind = (args.kind or "").lower()
    a = _alpha(args)
    if kind == "chi2":
        _need(args, "n", "n0")
        t = build_chi2_test(args.n, args.n0, a)
        rows = [(x, 1.0 - chi2_power(t, args.n, x)) for x in grid]
        label = "N"
    elif kind == "mean":
        _need(args, "nparam")
        t = build_mean_test(args.r or 0.0, args.nparam, a)
        rows = [(x, 1.0 - mean_test_power(t, x, args.nparam)) for x in grid]
        label = "r"
    elif kind == "t":
        _need(args, "n", "nparam")
        rows = [(x, t_test_type2(args.n, a, x, args.nparam)) for x in grid]
        label = "r"
    elif kind == "f":
        _need(args, "m", "n", "nparam")
        rows = [(x, f_test_type2(args.m, args.n, a, x, args.nparam)) for x in grid]
        label = "M"
    else:
        raise CliError("curve needs --figure 1|2 or a kind among chi2, mean, t, f")
    emit(out, args.format, [label, "beta_number"], rows, {"kind": kind})


def cmd_verify(args, out):
    checks = run_suite(args.suite, n=args.n, dim=args.dim)
    ok = all(bool(c.passed) for c in checks)
    if args.format == "json":
        doc = {"schema": SCHEMA, "suite": args.suite, "passed": ok,
               "checks": [{"name": c.name, "passed": bool(c.passed), **c.detail} for c in checks]}
        out.write(json.dumps(_jsonable(doc)) + "\n")
    else:
        for c in checks:
            detail = " ".join(f"{k}={_fmt(v) if not isinstance(v, list) else v}"
                              for k, v in c.detail.items())
            out.write(f"{'PASS' if c.passed else 'FAIL'} {c.name} {detail}\n")
        out.write(f"{'PASS' if ok else 'FAIL'} suite {args.suite}\n")
    return 0 if ok else 1


def cmd_estimate(args, out):
    _need(args, "n", "nparam")
    theta = args.theta if args.theta is not None else 0.0
    r = umvue_simulate(args.n, args.nparam, theta, args.draws, seed=args.seed, method=args.method)
    record = {"n": args.n, "N": args.nparam, "theta": complex(theta), "draws": r.draws,
              "seed": args.seed, "mean": r.mean, "mean_stderr": r.mean_stderr,
              "mse": r.mse, "mse_stderr": r.mse_stderr, "mse_exact": umvue_mse(args.n, args.nparam),
              "sld_fisher": sld_fisher(args.n, args.nparam)}
    emit_record(out, args.format, record)


def cmd_nchisq(args, out):
    _need(args, "n", "nparam")
    q = NChiSqParams(args.n, args.nparam)
    if args.x is not None:
        emit_record(out, args.format, {"dof": q.dof, "N": q.n_param, "x": args.x,
                                       "cdf": nchisq_cdf(q, args.x)})
    else:
        a = _alpha(args)
        emit_record(out, args.format, {"dof": q.dof, "N": q.n_param, "alpha": a,
                                       "upper_point": nchisq_upper_point(q, a)})


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--dim", type=int, default=None, help="truncation override")
    p.add_argument("--config", default=None, help="JSON file with default option values")
    return p


def _model_options(p):
    p.add_argument("-n", type=int, default=None, help="number of modes (copies)")
    p.add_argument("-m", type=int, default=None, help="size of the first sample")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--nparam", type=float, default=None, help="number parameter N")
    p.add_argument("--n0", type=float, default=None, help="boundary number parameter N0")
    p.add_argument("--r", type=float, default=None, help="radius R of the mean test")
    p.add_argument("--r0", type=float, default=None, help="R0 of problems H1/H2")
    p.add_argument("--theta", type=parse_complex, default=None)
    p.add_argument("--eta", type=parse_complex, default=None)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="qgt", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dist", parents=[common], help="number-measurement distribution")
    p.add_argument("--theta", type=parse_complex, default=None)
    p.add_argument("--nparam", type=float, default=None)
    p.add_argument("--kmax", type=int, default=None)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("test", help="construct tests")
    tsub = p.add_subparsers(dest="action", required=True)
    b = tsub.add_parser("build", parents=[common], help="thresholds of a test")
    b.add_argument("kind", help="chi2, mean, t, f or h1..h8")
    _model_options(b)
    b.add_argument("--smax", type=int, default=None)
    b.set_defaults(func=cmd_test_build)

    p = sub.add_parser("curve", parents=[common], help="type II error curves")
    p.add_argument("kind", nargs="?", default=None, help="chi2, mean, t or f")
    p.add_argument("--figure", type=int, default=None)
    p.add_argument("--grid", default=None)
    _model_options(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("verify", parents=[common], help="simulator cross-checks")
    p.add_argument("--suite", default="all")
    p.add_argument("-n", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("estimate", parents=[common], help="Monte Carlo of the N estimator")
    p.add_argument("-n", type=int, default=None)
    p.add_argument("--nparam", type=float, default=None)
    p.add_argument("--theta", type=parse_complex, default=None)
    p.add_argument("--draws", type=int, default=10 ** 5)
    p.add_argument("--method", choices=["mixture", "marginal"], default="mixture")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("nchisq", parents=[common], help="N-chi-square law")
    p.add_argument("-n", "--dof", dest="n", type=int, default=None)
    p.add_argument("--nparam", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--x", type=float, default=None)
    p.set_defaults(func=cmd_nchisq)
    return parser


def _apply_config(args):
    if not args.config:
        return
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {args.config}: {exc}")
    for key, val in cfg.items():
        key = key.replace("-", "_")
        if not hasattr(args, key):
            raise CliError(f"unknown config key {key!r}")
        if getattr(args, key) is None:
            if key in ("theta", "eta"):
                val = parse_complex(str(val))
            setattr(args, key, val)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        params = {k: v for k, v in vars(args).items() if k not in ("func", "format", "seed", "dim")}
        RunConfig(args.command, params, args.format, args.seed, args.dim)
        code = args.func(args, out)
        return int(code or 0)
    except (CliError, ValueError, ArithmeticError, TruncationError, MemoryEnvelopeError,
            DominanceError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if args.format == "json":
            out.write(json.dumps({"schema": SCHEMA, "error": msg}) + "\n")
        else:
            sys.stderr.write(f"qgt: error: {msg}\n")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
