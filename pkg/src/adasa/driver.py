"""Run loops, traces, and randomized iterate selection.

run_asa / run_amsgrad execute theta_{n+1} = theta_n - gamma_{n+1} A_n H_n with
the configured oracle and preconditioner.  Row k of a trace describes iterate
theta_k before it moves: objective gap, squared gradient norm, the step size
gamma_{k+1} about to be applied, the planted bias magnitude (nan when the
oracle's instantaneous bias is unknown), the post-clip eigenvalue range of
A_k, and the oracle draws consumed.

Quadratic problems driven by the synthetic oracle run through a chunk kernel
(compiled or numpy, bit-identical); everything else takes the generic
per-step loop.  Noise is drawn through one per-run Generator either way, in
the same order, so results depend only on (config, seed).
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .bilevel import BilevelProblem, bilevel_oracle, inner_sgd
from .oracles import GradientSample, MarkovStream, bias_direction_vector, markov_oracle, synthetic_biased_oracle, zeroth_order_oracle
from .preconditioners import (
    DiagonalMatrix,
    PreconditionerState,
    clip_spectral,
    coordinate_select,
    update_adagrad,
    update_amsgrad,
    update_rmsprop,
)
from .problems import Problem
from .schedules import PowerSchedule, schedule_array

CSV_HEADER = "n,V_gap,grad_norm_sq,step,bias_norm,A_lmin,A_lmax,inner_samples"

_CHUNK = 65536


@dataclass
class SyntheticOracleSpec:
    """Gradient + N(0, sigma^2 I) noise + planted power-law bias."""

    sigma: float = 0.1
    bias: PowerSchedule | None = None
    direction: str = "fixed_axis"
    direction_seed: int = 0


@dataclass
class ZerothOrderOracleSpec:
    """Two-point Gaussian-smoothing oracle on the problem's value function."""

    tau: float = 0.01


@dataclass
class MarkovOracleSpec:
    """Additive AR(1) noise averaged over an inner window of T draws."""

    mixing: float = 0.5
    inner_samples: int = 1


OracleSpec = SyntheticOracleSpec | ZerothOrderOracleSpec | MarkovOracleSpec


@dataclass
class Trace:
    n: np.ndarray
    v_gap: np.ndarray
    grad_norm_sq: np.ndarray
    step: np.ndarray
    bias_norm: np.ndarray
    a_lmin: np.ndarray
    a_lmax: np.ndarray
    inner_samples: np.ndarray
    seed: int = 0
    config_hash: str = ""
    wall_time: float = 0.0
    diverged: bool = False
    final_theta: np.ndarray | None = None
    m_obs: np.ndarray | None = None
    problem_name: str = ""

    def __len__(self) -> int:
        return self.n.size

    def write_csv(self, path) -> None:
        """Spec columns under '#' metadata lines; floats print round-trip exact.

        Wall time deliberately stays out of the file so reruns are bitwise
        identical.
        """
        with open(path, "w") as fh:
            fh.write(f"# config_hash={self.config_hash}\n")
            fh.write(f"# seed={self.seed}\n")
            fh.write(CSV_HEADER + "\n")
            for i in range(self.n.size):
                fh.write(
                    f"{self.n[i]},{float(self.v_gap[i])!r},{float(self.grad_norm_sq[i])!r},"
                    f"{float(self.step[i])!r},{float(self.bias_norm[i])!r},{float(self.a_lmin[i])!r},"
                    f"{float(self.a_lmax[i])!r},{self.inner_samples[i]}\n"
                )


def read_trace(path) -> Trace:
    """Read a trace CSV written by write_csv."""
    meta = {}
    with open(path) as fh:
        pos = fh.tell()
        line = fh.readline()
        while line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            pos = fh.tell()
            line = fh.readline()
        if line.strip() != CSV_HEADER:
            raise ValueError(f"{path}: expected header {CSV_HEADER!r}, got {line.strip()!r}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] and data.shape[1] != 8:
        raise ValueError(f"{path}: expected 8 columns, got {data.shape[1]}")
    return Trace(
        n=data[:, 0].astype(np.int64),
        v_gap=data[:, 1],
        grad_norm_sq=data[:, 2],
        step=data[:, 3],
        bias_norm=data[:, 4],
        a_lmin=data[:, 5],
        a_lmax=data[:, 6],
        inner_samples=data[:, 7].astype(np.int64),
        seed=int(meta.get("seed", 0)),
        config_hash=meta.get("config_hash", ""),
    )


def asa_step(theta: np.ndarray, gamma: float, a: DiagonalMatrix, estimate: np.ndarray) -> np.ndarray:
    """One update theta - gamma * A estimate (pure)."""
    return theta - gamma * a.apply(estimate)


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.PCG64(seed))


def _alloc(n: int) -> dict[str, np.ndarray]:
    return {
        "v_gap": np.empty(n),
        "grad_norm_sq": np.empty(n),
        "bias_norm": np.empty(n),
        "a_lmin": np.empty(n),
        "a_lmax": np.empty(n),
        "m_obs": np.empty(n),
        "inner": np.empty(n, dtype=np.int64),
    }


def _finish(
    out: dict[str, np.ndarray],
    steps: int,
    gamma_arr: np.ndarray,
    theta: np.ndarray,
    seed,
    config_hash: str,
    diverged: bool,
    t_start: float,
    problem_name: str,
) -> Trace:
    return Trace(
        n=np.arange(steps, dtype=np.int64),
        v_gap=out["v_gap"][:steps].copy(),
        grad_norm_sq=out["grad_norm_sq"][:steps].copy(),
        step=gamma_arr[:steps].copy(),
        bias_norm=out["bias_norm"][:steps].copy(),
        a_lmin=out["a_lmin"][:steps].copy(),
        a_lmax=out["a_lmax"][:steps].copy(),
        inner_samples=out["inner"][:steps].copy(),
        seed=seed if isinstance(seed, int) else -1,
        config_hash=config_hash,
        wall_time=time.perf_counter() - t_start,
        diverged=diverged,
        final_theta=theta.copy(),
        m_obs=out["m_obs"][:steps].copy(),
        problem_name=problem_name,
    )


def _fast_path_arrays(oracle: SyntheticOracleSpec, problem: Problem, n_steps: int):
    bias_arr = schedule_array(oracle.bias, n_steps) if oracle.bias is not None else np.zeros(n_steps)
    if oracle.direction == "toward_gradient":
        u = np.zeros(problem.dim)
        mode = _kernels.BIAS_TOWARD_GRADIENT
    else:
        u = bias_direction_vector(oracle.direction, problem.dim, oracle.direction_seed)
        mode = _kernels.BIAS_FIXED
    return bias_arr, u, mode


def run_asa(
    problem: Problem,
    oracle: OracleSpec,
    precond: PreconditionerState,
    gamma: PowerSchedule,
    n_steps: int,
    seed,
    clip: PowerSchedule | None = None,
    theta0: np.ndarray | None = None,
    divergence_cap: float = 1e12,
    config_hash: str = "",
) -> Trace:
    """Drive the recursion for n_steps; aborts early past the divergence cap.

    Per iteration: evaluate the oracle at theta_k, fold the estimate into the
    preconditioner (the current sample is included in A_k), clip if a cap
    schedule is given, record the row, then step.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if precond.kind == "amsgrad":
        raise ValueError("use run_amsgrad for the amsgrad preconditioner")
    if precond.dim != problem.dim:
        raise ValueError(f"preconditioner dim {precond.dim} != problem dim {problem.dim}")
    rng = _as_generator(seed)
    theta = np.ones(problem.dim) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    gamma_arr = schedule_array(gamma, n_steps)
    clip_arr = schedule_array(clip, n_steps) if clip is not None else np.full(n_steps, np.inf)
    t0 = time.perf_counter()
    out = _alloc(n_steps)

    fast = (
        problem.quad_matrix is not None
        and isinstance(oracle, SyntheticOracleSpec)
        and precond.kind in ("identity", "adagrad", "rmsprop")
    )
    if fast:
        bias_arr, u, mode = _fast_path_arrays(oracle, problem, n_steps)
        code = {
            "identity": _kernels.PRECOND_IDENTITY,
            "adagrad": _kernels.PRECOND_ADAGRAD,
            "rmsprop": _kernels.PRECOND_RMSPROP,
        }[precond.kind]
        q = np.ascontiguousarray(problem.quad_matrix)
        m_obs = 0.0
        diverged = False
        pos = 0
        while pos < n_steps:
            m = min(_CHUNK, n_steps - pos)
            noise = rng.standard_normal((m, problem.dim))
            sl = slice(pos, pos + m)
            steps, count, m_obs, diverged = _kernels.asa_quadratic_chunk(
                q, theta, code, precond.accum, precond.count, precond.delta, precond.rho,
                m_obs, gamma_arr[sl], clip_arr[sl], bias_arr[sl], u, mode, oracle.sigma, noise,
                out["v_gap"][sl], out["grad_norm_sq"][sl], out["bias_norm"][sl],
                out["a_lmin"][sl], out["a_lmax"][sl], out["m_obs"][sl], divergence_cap,
            )
            precond.count = count
            pos += steps
            if diverged:
                break
        out["inner"][:pos] = 1
        return _finish(out, pos, gamma_arr, theta, seed, config_hash, diverged, t0, problem.name)

    return _generic_loop(
        problem, oracle, precond, gamma_arr, clip_arr, n_steps, rng, theta,
        out, seed, config_hash, divergence_cap, t0, amsgrad=False,
    )


def run_amsgrad(
    problem: Problem,
    oracle: OracleSpec,
    precond: PreconditionerState,
    gamma: PowerSchedule,
    n_steps: int,
    seed,
    theta0: np.ndarray | None = None,
    divergence_cap: float = 1e12,
    config_hash: str = "",
) -> Trace:
    """AMSGRAD driver: EMA first moment (held here) and running-max second moment."""
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if precond.kind != "amsgrad":
        raise ValueError(f"run_amsgrad needs an amsgrad preconditioner, got {precond.kind!r}")
    if precond.dim != problem.dim:
        raise ValueError(f"preconditioner dim {precond.dim} != problem dim {problem.dim}")
    rng = _as_generator(seed)
    theta = np.ones(problem.dim) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    gamma_arr = schedule_array(gamma, n_steps)
    t0 = time.perf_counter()
    out = _alloc(n_steps)

    if problem.quad_matrix is not None and isinstance(oracle, SyntheticOracleSpec):
        bias_arr, u, mode = _fast_path_arrays(oracle, problem, n_steps)
        q = np.ascontiguousarray(problem.quad_matrix)
        mvec = np.zeros(problem.dim)
        m_obs = 0.0
        diverged = False
        pos = 0
        while pos < n_steps:
            m = min(_CHUNK, n_steps - pos)
            noise = rng.standard_normal((m, problem.dim))
            sl = slice(pos, pos + m)
            steps, count, m_obs, diverged = _kernels.amsgrad_quadratic_chunk(
                q, theta, mvec, precond.accum, precond.vhat, precond.count, precond.delta,
                precond.rho1, precond.rho2, m_obs, gamma_arr[sl], bias_arr[sl], u, mode,
                oracle.sigma, noise,
                out["v_gap"][sl], out["grad_norm_sq"][sl], out["bias_norm"][sl],
                out["a_lmin"][sl], out["a_lmax"][sl], out["m_obs"][sl], divergence_cap,
            )
            precond.count = count
            pos += steps
            if diverged:
                break
        out["inner"][:pos] = 1
        return _finish(out, pos, gamma_arr, theta, seed, config_hash, diverged, t0, problem.name)

    return _generic_loop(
        problem, oracle, precond, gamma_arr, np.full(n_steps, np.inf), n_steps, rng, theta,
        out, seed, config_hash, divergence_cap, t0, amsgrad=True,
    )


def _generic_loop(
    problem, oracle, precond, gamma_arr, clip_arr, n_steps, rng, theta,
    out, seed, config_hash, divergence_cap, t0, amsgrad: bool,
) -> Trace:
    """Reference per-step loop: any problem, oracle, and preconditioner kind."""
    if isinstance(oracle, SyntheticOracleSpec):
        u = bias_direction_vector(oracle.direction, problem.dim, oracle.direction_seed)
        direction = u if u is not None else "toward_gradient"
        noise_var = oracle.sigma * oracle.sigma
    elif isinstance(oracle, MarkovOracleSpec):
        stream = MarkovStream(a=oracle.mixing, dim=problem.dim)
    elif not isinstance(oracle, ZerothOrderOracleSpec):
        raise TypeError(f"unsupported oracle spec {type(oracle).__name__}")

    mvec = np.zeros(problem.dim)
    m_obs = 0.0
    capsq = divergence_cap * divergence_cap
    diverged = False
    steps = 0

    for k in range(n_steps):
        v_gap = problem.value(theta) - problem.optimum_value
        g = problem.gradient(theta)

        if isinstance(oracle, SyntheticOracleSpec):
            sample = synthetic_biased_oracle(problem, theta, k + 1, oracle.bias, noise_var, rng, direction)
            bias_norm = float(np.linalg.norm(sample.bias_target))
        elif isinstance(oracle, ZerothOrderOracleSpec):
            sample = zeroth_order_oracle(problem.value, theta, oracle.tau, rng)
            bias_norm = np.nan
        else:
            sample = markov_oracle(stream, lambda th, x, g=g: g - x, theta, oracle.inner_samples, rng)
            bias_norm = np.nan

        h = sample.estimate
        hmax = float(np.max(np.abs(h)))
        if hmax > m_obs:
            m_obs = hmax

        if amsgrad:
            mvec += (1.0 - precond.rho1) * (h - mvec)
            a = update_amsgrad(precond, h)
        elif precond.kind == "adagrad":
            a = update_adagrad(precond, h)
        elif precond.kind == "rmsprop":
            a = update_rmsprop(precond, h)
        elif precond.kind == "coordinate":
            _, a = coordinate_select(precond, h, precond.coord_rule, rng)
        else:
            a = DiagonalMatrix(np.ones(problem.dim))
        if clip_arr[k] != np.inf:
            a = clip_spectral(a, clip_arr[k])

        out["v_gap"][k] = v_gap
        out["grad_norm_sq"][k] = float(g @ g)
        out["bias_norm"][k] = bias_norm
        out["a_lmin"][k] = a.lambda_min()
        out["a_lmax"][k] = a.lambda_max()
        out["m_obs"][k] = m_obs
        out["inner"][k] = sample.inner_samples

        theta = asa_step(theta, gamma_arr[k], a, mvec if amsgrad else h)
        steps = k + 1
        if float(theta @ theta) > capsq:
            diverged = True
            break

    return _finish(out, steps, gamma_arr, theta, seed, config_hash, diverged, t0, problem.name)


def run_bilevel(
    bp: BilevelProblem,
    n_outer: int,
    inner_steps: int,
    gamma: PowerSchedule,
    n_truncation: int,
    seed,
    inner_step_coeff: float = 1.0,
    delta: float = 5e-2,
    rho1: float = 0.9,
    rho2: float = 0.999,
    theta0: np.ndarray | None = None,
    phi0: np.ndarray | None = None,
    divergence_cap: float = 1e12,
    config_hash: str = "",
) -> Trace:
    """Alternate inner SGD (warm-started) with AMSGRAD on the hypergradient.

    Outer round k runs `inner_steps` inner SGD steps at step size
    inner_step_coeff * (k+1)^{-1/2} / inner_steps, then one AMSGRAD update of
    theta from the truncated-Neumann oracle.  inner_samples records the inner
    SGD draws plus the Neumann depth consumed.
    """
    if n_outer < 1:
        raise ValueError(f"n_outer must be >= 1, got {n_outer}")
    rng = _as_generator(seed)
    theta = np.ones(bp.dim_outer) if theta0 is None else np.asarray(theta0, dtype=np.float64).copy()
    phi = np.zeros(bp.dim_inner) if phi0 is None else np.asarray(phi0, dtype=np.float64).copy()
    precond = PreconditionerState(kind="amsgrad", dim=bp.dim_outer, delta=delta, rho1=rho1, rho2=rho2)
    mvec = np.zeros(bp.dim_outer)
    gamma_arr = schedule_array(gamma, n_outer)
    inner_arr = inner_step_coeff * np.arange(1, n_outer + 1, dtype=np.float64) ** -0.5 / max(inner_steps, 1)
    t0 = time.perf_counter()
    out = _alloc(n_outer)
    capsq = divergence_cap * divergence_cap
    diverged = False
    steps = 0

    for k in range(n_outer):
        phi = inner_sgd(bp, theta, phi, inner_steps, PowerSchedule(inner_arr[k], 0.0), rng)
        sample = bilevel_oracle(bp, theta, phi, n_truncation, rng)
        grad = bp.hypergradient(theta)

        h = sample.estimate
        mvec += (1.0 - precond.rho1) * (h - mvec)
        a = update_amsgrad(precond, h)

        out["v_gap"][k] = bp.value(theta) - bp.optimum_value
        out["grad_norm_sq"][k] = float(grad @ grad)
        out["bias_norm"][k] = np.nan
        out["a_lmin"][k] = a.lambda_min()
        out["a_lmax"][k] = a.lambda_max()
        out["m_obs"][k] = 0.0
        out["inner"][k] = inner_steps + sample.inner_samples

        theta = asa_step(theta, gamma_arr[k], a, mvec)
        steps = k + 1
        if float(theta @ theta) > capsq:
            diverged = True
            break

    trace = _finish(out, steps, gamma_arr, theta, seed, config_hash, diverged, t0, "bilevel")
    trace.m_obs = None
    return trace


def check_spectral_bracket(trace: Trace, delta: float) -> int:
    """Count bracket violations: A_lmax <= delta^-1/2 and A_lmin >= (delta + M_n^2)^-1/2.

    M_n is the running max gradient sup-norm the run itself recorded; both
    sides are computed with the same float operations the kernels use, so the
    comparison is exact, not tolerance-based.  Only meaningful for inverse-
    sqrt preconditioners with delta > 0 and no clipping.
    """
    if not delta > 0:
        raise ValueError("bracket check needs delta > 0")
    if trace.m_obs is None:
        raise ValueError("trace lacks the in-memory M_n series (was it read from CSV?)")
    hi = 1.0 / np.sqrt(delta)
    lo = 1.0 / np.sqrt(delta + trace.m_obs * trace.m_obs)
    return int(np.sum(trace.a_lmax > hi) + np.sum(trace.a_lmin < lo))


@dataclass
class IterateDistribution:
    """Law of the reported iterate index R over {0, ..., n}.

    empirical_beta marks weights built from observed preconditioner spectra
    instead of a clip schedule (the fallback when clipping is off).
    """

    probs: np.ndarray
    weights: np.ndarray
    kind: str
    empirical_beta: bool = False


def iterate_distribution(
    kind: str,
    sigma_tilde2: float,
    smoothness: float,
    gamma: PowerSchedule | None = None,
    beta: PowerSchedule | np.ndarray | None = None,
    lam: PowerSchedule | None = None,
    n: int = 0,
    sigma_tilde1: float = 0.0,
) -> IterateDistribution:
    """P(R = k) proportional to w_{k+1} gamma_{k+1} lambda_{k+1}, k = 0..n.

    w_{k+1} = prod_{j=1}^{k+1} (1 + sigma_tilde2 * delta_j)^-1 with
    delta_j = smoothness * gamma_j^2 beta_j^2 / 2; sigma_tilde2 = 0 collapses
    the weights to 1.  kind "uniform" ignores the schedules and puts mass
    1/(n+1) everywhere.  beta is the clip schedule when one was enforced;
    passing an array of observed lambda_max values instead flags the result
    as empirical-beta.  Warns (does not enforce) when the step condition
    gamma <= lambda / (sigma_tilde1 * smoothness * beta^2) fails somewhere.
    """
    if n < 0:
        raise ValueError(f"horizon must be >= 0, got {n}")
    if kind == "uniform":
        probs = np.full(n + 1, 1.0 / (n + 1))
        return IterateDistribution(probs=probs, weights=np.ones(n + 1), kind=kind)
    if kind != "weighted":
        raise ValueError(f"kind must be 'weighted' or 'uniform', got {kind!r}")
    if gamma is None:
        raise ValueError("weighted kind needs the gamma schedule")
    lam = lam or PowerSchedule(1.0, 0.0)

    g = schedule_array(gamma, n + 1)
    l = schedule_array(lam, n + 1)
    empirical = isinstance(beta, np.ndarray)
    if empirical:
        if beta.shape != (n + 1,):
            raise ValueError(f"empirical beta needs shape ({n + 1},), got {beta.shape}")
        b = np.asarray(beta, dtype=np.float64)
    else:
        b = schedule_array(beta or PowerSchedule(1.0, 0.0, "increasing"), n + 1)
    if sigma_tilde1 > 0:
        cap = l / (sigma_tilde1 * smoothness * b * b)
        bad = np.nonzero(g > cap)[0]
        if bad.size:
            warnings.warn(
                f"step condition gamma <= lambda/(sigma1*L*beta^2) fails first at n={bad[0] + 1}",
                RuntimeWarning,
            )
    deltas = smoothness * g * g * b * b / 2.0
    weights = np.cumprod(1.0 / (1.0 + sigma_tilde2 * deltas))
    unnorm = weights * g * l
    return IterateDistribution(probs=unnorm / unnorm.sum(), weights=weights, kind=kind, empirical_beta=empirical)


def sample_R(dist: IterateDistribution, rng: np.random.Generator, size=None):
    """Draw iterate indices by inverse CDF."""
    cdf = np.cumsum(dist.probs)
    draws = rng.random(size)
    idx = np.searchsorted(cdf, draws, side="right")
    return np.minimum(idx, dist.probs.size - 1)
