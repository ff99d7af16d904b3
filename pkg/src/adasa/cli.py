"""Command line entry point.

    adasa run    --config cfg.yaml [--out DIR] [--jobs N]
    adasa check  --config cfg.yaml [--probes N]
    adasa slopes --traces FILE [FILE ...] --window LO:HI [--field F]

Exit codes: 0 all rate bands passed, 1 a band/check/fit failed, 2 bad usage,
config, or IO.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import average_traces, fit_loglog_slope
from .config import ConfigError, config_hash, load_config
from .driver import read_trace
from .experiment import build_problem, run_experiment
from .problems import verify_assumptions


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.out or cfg.out_dir or f"runs/{cfg.name}"
    jobs = args.jobs if args.jobs is not None else cfg.jobs
    summary = run_experiment(cfg, out, jobs=jobs)
    print(f"{cfg.name}: {config_hash(cfg)} -> {out} ({summary['wall_time']:.2f}s)")
    failed = False
    for v in summary["variants"]:
        slope = v.get("slope")
        slope_txt = f"slope={slope['value']:+.3f}" if slope else f"slope=NA ({v.get('slope_error', '')})"
        if v["expected_slope"] is not None:
            slope_txt += f" expected={v['expected_slope']:+.3f}"
        verdict = {True: "ok", False: "BAND FAIL", None: "unchecked"}[v["band_pass"]]
        if v["band_pass"] is False:
            failed = True
        diverged = sum(r["diverged"] for r in v["runs"])
        div_txt = f" DIVERGED={diverged}" if diverged else ""
        print(
            f"  {v['preconditioner']:>9s} / {v['bias']:<12s} {slope_txt}  "
            f"plateau={v['plateau']:.3e}  runs={len(v['runs'])} {verdict}{div_txt}"
        )
    return 1 if failed else 0


def _cmd_check(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg.problem)
    report = verify_assumptions(problem, probes=args.probes)
    for line in report.lines():
        print(line)
    return 0 if report.passed else 1


def _cmd_slopes(args) -> int:
    lo, sep, hi = args.window.partition(":")
    if not sep:
        print(f"--window must look like LO:HI, got {args.window!r}", file=sys.stderr)
        return 2
    try:
        window = (int(lo), int(hi))
    except ValueError:
        print(f"--window bounds must be integers, got {args.window!r}", file=sys.stderr)
        return 2
    traces = []
    for path in args.traces:
        if not Path(path).exists():
            print(f"no such trace: {path}", file=sys.stderr)
            return 2
        traces.append(read_trace(path))
    try:
        n, mean = average_traces(traces, args.field)
        fit = fit_loglog_slope(n + 1, mean, window)
    except ValueError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return 1
    print(
        f"{args.field}: slope={fit.slope:+.4f} stderr={fit.stderr:.4f} "
        f"r2={fit.r_squared:.4f} points={fit.n_points} window=[{window[0]},{window[1]}] traces={len(traces)}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adasa", description="biased adaptive stochastic approximation runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a config's full run grid")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None, help="output directory (default runs/<name>)")
    p_run.add_argument("--jobs", type=int, default=None, help="parallel runs (default: one per seed)")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="probe the configured problem's regularity assumptions")
    p_check.add_argument("--config", required=True)
    p_check.add_argument("--probes", type=int, default=1000)
    p_check.set_defaults(func=_cmd_check)

    p_slopes = sub.add_parser("slopes", help="fit a log-log decay slope over trace files")
    p_slopes.add_argument("--traces", nargs="+", required=True)
    p_slopes.add_argument("--window", required=True, help="LO:HI iteration range")
    p_slopes.add_argument("--field", default="v_gap", choices=("v_gap", "grad_norm_sq"))
    p_slopes.set_defaults(func=_cmd_slopes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"not found: {exc.filename}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
