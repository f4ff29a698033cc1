"""Command-line interface: ``fluidclt solve|simulate|ensemble|verify``.

Every option can also come from a JSON file given with ``--config``; keys
are the long option names with dashes turned into underscores
(``t_end``, ``stop_at_H``, ...).  Flags on the command line win over the
file.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 failed
statistical verdict or cross-check.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Optional

import numpy as np

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_VERDICT = 3

MODELS = ("mindeg", "dproc", "gauss")

# value used when neither the config file nor a flag sets the option
DEFAULTS = {
    "model": "mindeg",
    "q": 6,
    "d": 2,
    "n": 10000,
    "trials": 1000,
    "checkpoints": None,
    "t_end": None,
    "dt": 1e-4,
    "seed": 0,
    "epsilon": 0.1,
    "delta": None,
    "scale": 1.0,
    "output": None,
    "format": None,
    "workers": None,
    "stop_at_H": False,
    "corrected": True,
    "cross_check": False,
    "trial": 0,
    "points": 20,
    "only": None,
}


class UsageError(Exception):
    pass


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def parse_checkpoints(value) -> Optional[tuple]:
    """Comma-separated decimal times (or a list from a config file)."""
    if value is None:
        return None
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
        try:
            ts = tuple(float(p) for p in parts)
        except ValueError:
            raise UsageError(f"bad checkpoint list {value!r}")
    else:
        ts = tuple(float(v) for v in value)
    if not ts:
        raise UsageError("empty checkpoint list")
    if any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] < 0:
        raise UsageError("checkpoints must be non-negative and strictly ascending")
    return ts


def _model_options(p):
    p.add_argument("--config", help="JSON file with option values")
    p.add_argument("--model", choices=MODELS, default=None)
    p.add_argument("--q", type=_positive_int, default=None, help="min-degree: largest tracked order")
    p.add_argument("--d", type=_positive_int, default=None, help="d-process: degree cap")
    p.add_argument("--epsilon", type=float, default=None, help="domain margin")
    p.add_argument("--uncorrected-diffusion", dest="corrected", action="store_const", const=False,
                   default=None, help="d-process: use the uncorrected second-moment formula")
    p.add_argument("--scale", type=float, default=None, help="gauss: covariance scale on the analytic side")
    p.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluidclt", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="integrate the mean/covariance ODE and print the table")
    _model_options(p)
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--delta", type=float, default=None,
                   help="d-process: stop at the first grid point with z_d >= 1 - delta")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--cross-check", dest="cross_check", action="store_const", const=True, default=None,
                   help="min-degree: compare with the closed forms")

    p = sub.add_parser("simulate", help="run one process trial and print its counts")
    _model_options(p)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trial", type=int, default=None, help="trial index (same stream as in ensembles)")
    p.add_argument("--checkpoints", default=None, help="comma-separated times")
    p.add_argument("--t-end", dest="t_end", type=float, default=None)
    p.add_argument("--points", type=_positive_int, default=None,
                   help="number of evenly spaced records when no checkpoints are given")
    p.add_argument("--stop-at-H", dest="stop_at_H", action="store_const", const=True, default=None)
    p.add_argument("--format", choices=("csv", "json"), default=None)

    p = sub.add_parser("ensemble", help="Monte Carlo ensemble compared with the ODE prediction")
    _model_options(p)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--trials", type=_positive_int, default=None)
    p.add_argument("--checkpoints", default=None, help="comma-separated times")
    p.add_argument("--stop-at-H", dest="stop_at_H", action="store_const", const=True, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--only", default=None, help="comma-separated groups or criterion numbers")
    p.add_argument("--workers", type=_positive_int, default=None)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge built-in defaults, the config file and explicit flags."""
    opts = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        opts.update(loaded)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            opts[key] = value
    opts["command"] = args.command
    return opts


def _model_params(o) -> dict:
    if o["model"] == "mindeg":
        return {"q": int(o["q"]), "epsilon": float(o["epsilon"])}
    if o["model"] == "dproc":
        return {"d": int(o["d"]), "epsilon": float(o["epsilon"]), "corrected": bool(o["corrected"])}
    return {"scale": float(o["scale"])}


def available_workers() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _emit(text: str, output: Optional[str]):
    if output:
        with open(output, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


# -- solve ------------------------------------------------------------------

def cmd_solve(o) -> int:
    from .ensemble import build_model
    from .models import LN2, mindeg_beta, mindeg_T_closed
    from .numerics import solve_augmented

    label = o["model"]
    delta = o["delta"]
    stop = None
    if delta is not None:
        if label != "dproc":
            raise UsageError("--delta applies to the d-process only")
        if not 0 < delta < 1:
            raise UsageError("--delta must lie in (0, 1)")
        # the domain must reach past the stopping level 1 - delta
        if o["epsilon"] >= delta:
            o["epsilon"] = delta / 2
        d = int(o["d"])
        stop = lambda t, z: z[d] >= 1.0 - delta  # noqa: E731
    t_end = o["t_end"]
    if t_end is None:
        t_end = LN2 if label == "mindeg" else (int(o["d"]) / 2.0 if label == "dproc" else 1.0)
    if t_end < 0:
        raise UsageError("--t-end must be non-negative")
    if o["dt"] <= 0:
        raise UsageError("--dt must be positive")
    model = build_model(label, _model_params(o))
    table = solve_augmented(model, t_end, o["dt"], stop=stop)
    if table.exited_domain:
        print(f"note: the trajectory leaves the domain after t={table.t_final:.6g}; table truncated",
              file=sys.stderr)
    fmt = o["format"] or "csv"
    _emit(table.to_csv() if fmt == "csv" else json.dumps(table.to_dict()) + "\n", o["output"])

    if o["cross_check"]:
        if label != "mindeg":
            raise UsageError("--cross-check is available for the min-degree model only")
        q = model.q
        ez = eT = 0.0
        for k, t in enumerate(table.grid):
            beta = np.array([mindeg_beta(t, j) for j in range(1, q + 1)])
            ez = max(ez, np.abs(table.z[k] - beta).max())
            eT = max(eT, np.abs(table.T[k] - mindeg_T_closed(t, q)).max())
        ok = ez <= 1e-9 and eT <= 1e-8
        print(f"cross-check: max|z - beta| = {ez:.3e}, max|T - closed form| = {eT:.3e}: "
              f"{'pass' if ok else 'FAIL'}", file=sys.stderr)
        if not ok:
            return EXIT_VERDICT
    return EXIT_OK


# -- simulate ---------------------------------------------------------------

def cmd_simulate(o) -> int:
    from .ensemble import _path_runner, build_model, trial_seed

    label = o["model"]
    n = int(o["n"])
    params = _model_params(o)
    model = build_model(label, params)
    ts = parse_checkpoints(o["checkpoints"])
    if ts is None:
        t_end = o["t_end"]
        if t_end is None:
            raise UsageError("simulate needs --checkpoints or --t-end")
        ts = tuple(np.linspace(0.0, t_end, int(o["points"]) + 1))
    ms = sorted({int(round(t * n)) for t in ts})
    stop = bool(o["stop_at_H"])
    if stop and label != "mindeg":
        raise UsageError("--stop-at-H applies to the min-degree model only")
    rng = np.random.default_rng(trial_seed(int(o["seed"]), int(o["trial"])))
    records, H, final = _path_runner(label)(n, params, ms, rng, stop)
    rows = [(m, r) for m, r in zip(ms, records) if r is not None]
    if stop:
        rows.append((H, final))
    q = model.q
    if (o["format"] or "csv") == "json":
        out = {"model": label, "n": n, "seed": int(o["seed"]), "trial": int(o["trial"]),
               "m": [int(m) for m, _ in rows], "counts": [np.asarray(r).tolist() for _, r in rows]}
        if stop:
            out["H"] = int(H)
        _emit(json.dumps(out) + "\n", o["output"])
        return EXIT_OK
    lines = [",".join(["m", "t"] + [f"x_{k}" for k in range(1, q + 1)])]
    for m, r in rows:
        vals = np.asarray(r)
        cells = [str(int(m)), "%.17g" % (m / n)]
        cells += [str(int(v)) if float(v).is_integer() else "%.17g" % v for v in vals]
        lines.append(",".join(cells))
    _emit("\n".join(lines) + "\n", o["output"])
    if len(rows) < len(ms) + stop:
        print(f"note: the process ended before m={ms[-1]}", file=sys.stderr)
    return EXIT_OK


# -- ensemble ---------------------------------------------------------------

def cmd_ensemble(o) -> int:
    from .ensemble import EnsembleConfig, compare_report, prediction_table, run_ensemble

    ts = parse_checkpoints(o["checkpoints"])
    stop = bool(o["stop_at_H"])
    if ts is None and not stop:
        raise UsageError("ensemble needs --checkpoints and/or --stop-at-H")
    try:
        cfg = EnsembleConfig(model=o["model"], n=int(o["n"]), trials=int(o["trials"]),
                             checkpoints=ts or (), seed=int(o["seed"]), stop_at_H=stop,
                             params=_model_params(o), dt=float(o["dt"]))
    except ValueError as exc:
        raise UsageError(str(exc))
    workers = o["workers"] or available_workers()
    stats = run_ensemble(cfg, workers)
    report = compare_report(stats, prediction_table(cfg))
    _emit(report.to_json(), o["output"])
    if not report.passed:
        names = ", ".join(c["name"] for c in report.failures())
        print(f"verdict: fail ({names})", file=sys.stderr)
        return EXIT_VERDICT
    return EXIT_OK


# -- verify -----------------------------------------------------------------

def cmd_verify(o) -> int:
    from . import acceptance

    only = o["only"]
    if isinstance(only, str):
        only = [s for s in only.split(",") if s.strip()]
    try:
        acceptance.select(only)
    except ValueError as exc:
        raise UsageError(str(exc))
    workers = o["workers"] or available_workers()
    results = acceptance.run_criteria(only, workers,
                                      progress=lambda r: print(r.line(), file=sys.stderr, flush=True))
    print(acceptance.format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERDICT


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "ensemble": cmd_ensemble, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with code 2 on bad flags
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        opts = resolve(args)
        if opts["model"] not in MODELS:
            raise UsageError(f"unknown model {opts['model']!r}")
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fluidclt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ValueError, RuntimeError, OSError) as exc:
        print(f"fluidclt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
