"""Config-driven fan-out: every (preconditioner, bias arm, seed) combination
becomes one trace CSV named <variant-hash>_<seed>.csv, plus a summary.json
with per-variant slope fits, regime classification, and rate-band verdicts.

Trace files contain no timing, so rerunning the same config reproduces them
byte for byte; wall time lives only in the summary.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import average_traces, fit_loglog_slope, regime_bound, terminal_plateau
from .config import BiasVariant, ExperimentConfig, ProblemSpec, config_hash, derive_run_seed, parse_config, serialize_config
from .driver import (
    MarkovOracleSpec,
    SyntheticOracleSpec,
    Trace,
    ZerothOrderOracleSpec,
    iterate_distribution,
    run_amsgrad,
    run_asa,
    sample_R,
)
from .preconditioners import PreconditionerState
from .problems import Problem, default_logistic, default_quadratic
from .schedules import classify_rate_regime

# convergence must not be slower than the bound; faster is expected and fine,
# so the sanity slack on the fast side is looser
SLOWER_SLACK = 0.15
FASTER_SLACK = 0.35
R_SAMPLE_COUNT = 16
# seed label reserved for post-hoc iterate selection; config seeds are 32-bit
_R_SEED_LABEL = 1 << 62


def build_problem(spec: ProblemSpec) -> Problem:
    if spec.kind == "quadratic":
        return default_quadratic(dim=spec.dim, seed=spec.seed, spectrum=spec.spectrum)
    return default_logistic(n=spec.n_samples, dim=spec.dim, seed=spec.seed, ridge=spec.ridge)


def build_oracle(cfg: ExperimentConfig, bias: BiasVariant):
    if cfg.oracle_kind == "synthetic":
        return SyntheticOracleSpec(
            sigma=cfg.sigma, bias=bias.schedule, direction=cfg.direction, direction_seed=cfg.master_seed
        )
    if cfg.oracle_kind == "zeroth_order":
        return ZerothOrderOracleSpec(tau=cfg.tau)
    return MarkovOracleSpec(mixing=cfg.mixing, inner_samples=cfg.inner_samples)


@dataclass(frozen=True)
class RunKey:
    precond_kind: str
    bias_label: str
    seed: int
    variant_hash: str

    @property
    def filename(self) -> str:
        return f"{self.variant_hash}_{self.seed}.csv"


def run_grid(cfg: ExperimentConfig) -> list[RunKey]:
    keys = []
    for pk in cfg.precond_kinds:
        for bias in cfg.bias_variants:
            h = config_hash(cfg, precond_kind=pk, bias_label=bias.label)
            for seed in cfg.seeds:
                keys.append(RunKey(precond_kind=pk, bias_label=bias.label, seed=seed, variant_hash=h))
    return keys


def execute_run(cfg: ExperimentConfig, key: RunKey, problem: Problem | None = None) -> Trace:
    """One grid cell.  The generator seed mixes the variant hash with the
    config seed label, so a run's stream never shifts when other variants or
    seeds are added to the sweep."""
    if problem is None:
        problem = build_problem(cfg.problem)
    if cfg.clip is not None and key.precond_kind == "amsgrad":
        raise ValueError("spectral clipping is not defined for the amsgrad update")
    bias = next(b for b in cfg.bias_variants if b.label == key.bias_label)
    oracle = build_oracle(cfg, bias)
    precond = PreconditionerState(
        kind=key.precond_kind, dim=problem.dim, delta=cfg.delta, rho=cfg.rho, rho1=cfg.rho1, rho2=cfg.rho2
    )
    run_seed = derive_run_seed(cfg.master_seed ^ int(key.variant_hash, 16), key.seed)
    runner = run_amsgrad if key.precond_kind == "amsgrad" else run_asa
    kwargs = {} if key.precond_kind == "amsgrad" else {"clip": cfg.clip}
    trace = runner(
        problem, oracle, precond, cfg.step, cfg.n_steps, run_seed, config_hash=key.variant_hash, **kwargs
    )
    trace.seed = key.seed
    return trace


def _run_record(key: RunKey, trace: Trace) -> dict:
    best = int(np.argmin(trace.v_gap))
    return {
        "file": key.filename,
        "seed": key.seed,
        "steps": len(trace),
        "diverged": trace.diverged,
        "wall_time": trace.wall_time,
        "final_v_gap": float(trace.v_gap[-1]),
        "final_grad_norm_sq": float(trace.grad_norm_sq[-1]),
        "final_theta": [float(x) for x in trace.final_theta] if trace.final_theta is not None else None,
        "best_n": best,
        "best_v_gap": float(trace.v_gap[best]),
    }


def _worker(args) -> str:
    text, key, out_dir = args
    cfg = parse_config(text)
    trace = execute_run(cfg, key)
    path = Path(out_dir) / key.filename
    trace.write_csv(path)
    return json.dumps(_run_record(key, trace))


def _variant_regime(cfg: ExperimentConfig, bias: BiasVariant):
    r = math.inf if bias.schedule is None else bias.schedule.exponent
    beta = 0.0
    if cfg.clip is not None and cfg.clip.direction == "increasing":
        beta = cfg.clip.exponent
    return classify_rate_regime(cfg.step.exponent, beta, cfg.lam.exponent, r)


def _expected_slope(cfg: ExperimentConfig, regime, kind: str) -> float | None:
    """Log-log slope the anchored bound itself shows across the fit window.

    Comparing the measured slope to this (not to the raw leading exponent)
    keeps log factors and bias floors from being misread as rate failures.
    """
    bound = regime_bound(regime, kind=kind)
    grid = np.geomspace(cfg.window[0], cfg.window[1], 64)
    vals = bound.evaluate(grid)
    if np.any(vals <= 0):
        return None
    return float(np.polyfit(np.log10(grid), np.log10(vals), 1)[0])


def run_experiment(cfg: ExperimentConfig, out_dir, jobs: int | None = None) -> dict:
    """Execute the full grid, write traces, per-variant aggregates, and summary.json.

    jobs=None uses one worker per seed, capped at the CPU count.  Runs are
    independent; a diverged run is recorded in the summary and does not stop
    its siblings.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if jobs is None:
        jobs = max(1, min(os.cpu_count() or 1, len(cfg.seeds)))
    keys = run_grid(cfg)
    t0 = time.perf_counter()
    traces: dict[RunKey, Trace] = {}
    records: dict[RunKey, dict] = {}

    if jobs > 1:
        text = serialize_config(cfg)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for key, rec in zip(keys, pool.map(_worker, [(text, k, str(out)) for k in keys])):
                records[key] = json.loads(rec)
        from .driver import read_trace

        for key in keys:
            traces[key] = read_trace(out / key.filename)
    else:
        problem = build_problem(cfg.problem)
        for key in keys:
            trace = execute_run(cfg, key, problem=problem)
            trace.write_csv(out / key.filename)
            traces[key] = trace
            records[key] = _run_record(key, trace)

    problem = build_problem(cfg.problem)
    bound_kind = "pl_bound" if cfg.field == "v_gap" else "nonconvex_rate"
    variants = []
    for pk in cfg.precond_kinds:
        kind = "amsgrad_rate" if (pk == "amsgrad" and cfg.field != "v_gap") else bound_kind
        for bias in cfg.bias_variants:
            group = [k for k in keys if k.precond_kind == pk and k.bias_label == bias.label]
            vt = [traces[k] for k in group]
            regime = _variant_regime(cfg, bias)
            expected = _expected_slope(cfg, regime, kind)
            entry = {
                "preconditioner": pk,
                "bias": bias.label,
                "hash": group[0].variant_hash,
                "runs": [records[k] for k in group],
                "plateau": float(np.mean([terminal_plateau(getattr(t, cfg.field)) for t in vt])),
                "regime": {
                    "leading_exponent": regime.leading_exponent,
                    "has_log_factor": regime.has_log_factor,
                    "bias_exponent": regime.bias_exponent
                    if isinstance(regime.bias_exponent, str)
                    else float(regime.bias_exponent),
                },
                "expected_slope": expected,
                "band": None if expected is None else [expected - FASTER_SLACK, expected + SLOWER_SLACK],
                "band_pass": None,
                "slope": None,
            }
            try:
                n, mean = average_traces(vt, cfg.field)
                fit = fit_loglog_slope(n + 1, mean, cfg.window)
                entry["slope"] = {
                    "value": fit.slope,
                    "stderr": fit.stderr,
                    "r_squared": fit.r_squared,
                    "n_points": fit.n_points,
                }
                if expected is not None:
                    entry["band_pass"] = bool(expected - FASTER_SLACK <= fit.slope <= expected + SLOWER_SLACK)
            except ValueError as exc:
                entry["slope_error"] = str(exc)

            horizon = min(len(t) for t in vt) - 1
            beta_sched = cfg.clip if (cfg.clip is not None and cfg.clip.direction == "increasing") else None
            dist = iterate_distribution(
                cfg.iterate_kind, 0.0, problem.smoothness,
                gamma=cfg.step, beta=beta_sched, lam=cfg.lam, n=horizon,
            )
            r_rng = np.random.default_rng(
                derive_run_seed(cfg.master_seed ^ int(group[0].variant_hash, 16), _R_SEED_LABEL)
            )
            entry["r_samples"] = [int(i) for i in sample_R(dist, r_rng, size=R_SAMPLE_COUNT)]
            entry["iterate_kind"] = cfg.iterate_kind

            agg_name = f"{group[0].variant_hash}_agg.csv"
            try:
                emit_plot_data(vt, "mean", out / agg_name)
                entry["aggregate"] = agg_name
            except ValueError as exc:
                entry["aggregate_error"] = str(exc)
            variants.append(entry)

    summary = {
        "name": cfg.name,
        "config_hash": config_hash(cfg),
        "n_steps": cfg.n_steps,
        "field": cfg.field,
        "window": list(cfg.window),
        "seeds": list(cfg.seeds),
        "variants": variants,
        "wall_time": time.perf_counter() - t0,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


PLOT_HEADER = "n,stat_V_gap,lo_V_gap,hi_V_gap,stat_grad,lo_grad,hi_grad"


def emit_plot_data(traces: list[Trace], reduction: str, out_path, max_rows: int = 500) -> int:
    """Aggregate seed traces into one plot-ready CSV; returns rows written.

    stat is the mean or median across traces, lo/hi the pointwise envelope.
    Rows are thinned to a log grid of at most max_rows, always keeping the
    first and last iteration exactly.
    """
    if not traces:
        raise ValueError("no traces given")
    if reduction not in ("mean", "median"):
        raise ValueError(f"reduction must be 'mean' or 'median', got {reduction!r}")
    n = traces[0].n
    for t in traces[1:]:
        if not np.array_equal(t.n, n):
            raise ValueError("traces do not share an iteration grid")
    if n.size == 0:
        raise ValueError("empty traces")
    v = np.stack([t.v_gap for t in traces])
    g = np.stack([t.grad_norm_sq for t in traces])
    stat = np.mean if reduction == "mean" else np.median
    sv, sg = stat(v, axis=0), stat(g, axis=0)
    lov, hiv = v.min(axis=0), v.max(axis=0)
    log_, hig = g.min(axis=0), g.max(axis=0)

    idx = np.unique(np.geomspace(1, n.size, num=min(max_rows, n.size)).astype(np.int64) - 1)
    idx[0], idx[-1] = 0, n.size - 1

    hashes = sorted({t.config_hash for t in traces})
    seeds = [t.seed for t in traces]
    with open(out_path, "w") as fh:
        fh.write(f"# config_hash={','.join(hashes)}\n")
        fh.write(f"# seeds={','.join(str(s) for s in seeds)}\n")
        fh.write(f"# reduction={reduction}\n")
        fh.write(PLOT_HEADER + "\n")
        for i in idx:
            fh.write(
                f"{n[i]},{float(sv[i])!r},{float(lov[i])!r},{float(hiv[i])!r},"
                f"{float(sg[i])!r},{float(log_[i])!r},{float(hig[i])!r}\n"
            )
    return int(idx.size)
