"""Compare the compiled kernel against the numpy fallback on the hot loop.

Usage: python benchmarks/backend_bench.py [--steps N] [--dim D]

Runs the identical chunked recursion through both backends, reports steps/sec
for each, and asserts the traces match bit for bit (the fallback is not an
approximation; it is the same arithmetic in slower clothing).
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from adasa._kernels import load_backend
from adasa.driver import SyntheticOracleSpec, run_amsgrad, run_asa
from adasa.preconditioners import PreconditionerState
from adasa.problems import default_quadratic
from adasa.schedules import PowerSchedule


def time_run(runner, kind, problem, steps, repeats=3):
    oracle = SyntheticOracleSpec(sigma=0.1)
    gamma = PowerSchedule(0.5, 0.5)
    best = np.inf
    trace = None
    for _ in range(repeats):
        pre = PreconditionerState(kind=kind, dim=problem.dim)
        t0 = time.perf_counter()
        trace = runner(problem, oracle, pre, gamma, steps, seed=1234)
        best = min(best, time.perf_counter() - t0)
    return trace, best


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--steps", type=int, default=200_000)
    parser.add_argument("--dim", type=int, default=10)
    args = parser.parse_args()

    problem = default_quadratic(dim=args.dim, seed=0)
    print(f"{args.steps} steps, dim {args.dim}, best of 3")
    for label, runner, kind in (("adagrad", run_asa, "adagrad"), ("amsgrad", run_amsgrad, "amsgrad")):
        results = {}
        for backend in ("compiled", "python"):
            try:
                load_backend(backend)
            except ImportError:
                print(f"  {label:>8s} {backend}: unavailable")
                continue
            results[backend] = time_run(runner, kind, problem, args.steps)
        if len(results) == 2:
            (tc, sc), (tp, sp) = results["compiled"], results["python"]
            fields = ("v_gap", "grad_norm_sq", "bias_norm", "a_lmin", "a_lmax")
            exact = all(np.array_equal(getattr(tc, f), getattr(tp, f)) for f in fields)
            exact = exact and np.array_equal(tc.final_theta, tp.final_theta)
            print(
                f"  {label:>8s} compiled {args.steps / sc:>12,.0f} steps/s   "
                f"python {args.steps / sp:>12,.0f} steps/s   "
                f"speedup {sp / sc:5.1f}x   bitwise {'OK' if exact else 'MISMATCH'}"
            )
            if not exact:
                raise SystemExit(1)
        elif "python" in results:
            _, sp = results["python"]
            print(f"  {label:>8s} python {args.steps / sp:>12,.0f} steps/s (no compiled backend)")
    load_backend("auto")


if __name__ == "__main__":
    main()
