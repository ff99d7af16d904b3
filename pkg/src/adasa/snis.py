"""Self-normalized importance sampling (SNIS) and a bias-reduced variant.

SNIS estimates pi(f) = E_pi[f] by reweighting proposal draws with normalized
importance weights; its bias decays like 1/N in the number of particles.  The
bias-reduced estimator runs a retained-particle chain: each sweep keeps one
particle from the previous sweep, refreshes the other k-1, self-normalizes,
and selects the next retained particle from the normalized weights.  Averaging
sweep estimates after a burn-in shrinks the bias exponentially in the burn-in.

Batch variants vectorize over repetitions and are draw-for-draw identical to
sequences of single calls on the same generator (row r of a batch consumes
exactly the draws call r would).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .oracles import GradientSample


@dataclass
class SNISTarget:
    """Proposal sampler plus importance weight and integrand, all vectorized.

    `sampler(rng, size)` must fill C-order so batch shapes replay the stream.
    For targets with finite support, `support_values`/`support_probs` enable
    exact enumeration and exact weight moments.
    """

    sampler: Callable[[np.random.Generator, object], np.ndarray]
    weight: Callable[[np.ndarray], np.ndarray]
    integrand: Callable[[np.ndarray], np.ndarray]
    exact_value: float | None = None
    support_values: np.ndarray | None = None
    support_probs: np.ndarray | None = None


def make_discrete_target(
    values,
    probs,
    weight: Callable[[np.ndarray], np.ndarray],
    integrand: Callable[[np.ndarray], np.ndarray],
) -> SNISTarget:
    """Finite-support target; exact pi(f) computed from the weighted law."""
    values = np.asarray(values, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    if values.shape != probs.shape or values.ndim != 1:
        raise ValueError("values and probs must be matching 1-d arrays")
    if np.any(probs <= 0) or abs(float(probs.sum()) - 1.0) > 1e-12:
        raise ValueError("probs must be positive and sum to 1")
    w = weight(values)
    exact = float(np.sum(probs * w * integrand(values)) / np.sum(probs * w))

    def sampler(rng, size):
        return values[rng.choice(values.size, size=size, p=probs)]

    return SNISTarget(
        sampler=sampler,
        weight=weight,
        integrand=integrand,
        exact_value=exact,
        support_values=values,
        support_probs=probs,
    )


def discrete_toy_target() -> SNISTarget:
    """Uniform proposal on {1, 2}, w(1)=1, w(2)=3, f = identity; pi(f) = 7/4."""
    return make_discrete_target(
        values=[1.0, 2.0],
        probs=[0.5, 0.5],
        weight=lambda x: np.where(x == 1.0, 1.0, 3.0),
        integrand=lambda x: x,
    )


def snis_value(target: SNISTarget, xs: np.ndarray) -> float:
    """Deterministic SNIS core: normalized-weight average of f over given draws."""
    xs = np.asarray(xs, dtype=np.float64)
    w = np.asarray(target.weight(xs), dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("importance weights must be finite and >= 0")
    total = w.sum()
    if not total > 0:
        raise ValueError("importance weights sum to zero")
    omega = w / total
    return float((omega * target.integrand(xs)).sum())


def snis_estimate(target: SNISTarget, n: int, rng: np.random.Generator) -> GradientSample:
    """Draw n proposal samples and self-normalize; inner_samples counts the draws."""
    if n < 1:
        raise ValueError(f"need at least one particle, got {n}")
    val = snis_value(target, target.sampler(rng, n))
    return GradientSample(estimate=np.array([val]), inner_samples=n)


def snis_batch(target: SNISTarget, n: int, reps: int, rng: np.random.Generator) -> np.ndarray:
    """`reps` independent SNIS estimates; row r replays call r bit-for-bit."""
    xs = target.sampler(rng, (reps, n))
    w = np.asarray(target.weight(xs), dtype=np.float64)
    omega = w / w.sum(axis=1, keepdims=True)
    return (omega * target.integrand(xs)).sum(axis=1)


def br_snis_batch(
    target: SNISTarget,
    k: int,
    t0: int,
    t_max: int,
    reps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bias-reduced SNIS, vectorized over `reps` independent chains.

    Sweep t builds k particles (the retained one plus k-1 fresh), and the
    estimator averages the sweep SNIS values at t+1 in (t0, t_max].  The
    conceptual uniform placement of the retained particle among the k slots
    does not affect any output (sweep values and the selection law are
    permutation invariant), so the retained particle sits in slot 0 and no
    placement randomness is consumed.  Per sweep the generator serves k-1
    fresh draws per chain and one selection uniform per chain.
    """
    if k < 2:
        raise ValueError(f"need k >= 2 particles per sweep, got {k}")
    if not (0 <= t0 < t_max):
        raise ValueError(f"need 0 <= t0 < t_max, got t0={t0}, t_max={t_max}")
    retained = target.sampler(rng, reps)
    total = np.zeros(reps)
    rows = np.arange(reps)
    averaged = 0
    for t in range(t_max):
        fresh = target.sampler(rng, (reps, k - 1))
        parts = np.concatenate([retained[:, None], fresh], axis=1)
        w = np.asarray(target.weight(parts), dtype=np.float64)
        omega = w / w.sum(axis=1, keepdims=True)
        if t + 1 > t0:
            total += (omega * target.integrand(parts)).sum(axis=1)
            averaged += 1
        sel = np.minimum((rng.random(reps)[:, None] > np.cumsum(omega, axis=1)).sum(axis=1), k - 1)
        retained = parts[rows, sel]
    return total / averaged


def br_snis_estimate(target: SNISTarget, k: int, t0: int, t_max: int, rng: np.random.Generator) -> GradientSample:
    """One retained-particle chain; draws = initial particle + (k-1) per sweep."""
    val = float(br_snis_batch(target, k, t0, t_max, 1, rng)[0])
    return GradientSample(estimate=np.array([val]), inner_samples=1 + t_max * (k - 1))


def enumerate_snis_expectation(target: SNISTarget, n: int) -> float:
    """Exact E[SNIS_n] on a finite support: sum over the outcome lattice.

    Feeds every length-n tuple through snis_value weighted by its probability,
    so it exercises the same estimator core the sampled path uses.
    """
    if target.support_values is None or target.support_probs is None:
        raise ValueError("enumeration needs a finite-support target")
    size = target.support_values.size
    if size**n > 1_000_000:
        raise ValueError(f"lattice too large: {size}^{n}")
    total = 0.0
    for combo in itertools.product(range(size), repeat=n):
        idx = np.array(combo)
        prob = float(np.prod(target.support_probs[idx]))
        total += prob * snis_value(target, target.support_values[idx])
    return total


def snis_bias_bound(target: SNISTarget, n: int) -> float:
    """Bias bound (12 / n) * E[w^2] / E[w]^2 under the proposal law."""
    if target.support_values is None or target.support_probs is None:
        raise ValueError("exact weight moments need a finite-support target")
    w = np.asarray(target.weight(target.support_values), dtype=np.float64)
    p = target.support_probs
    mean_w = float(np.sum(p * w))
    mean_w2 = float(np.sum(p * w * w))
    return 12.0 / n * mean_w2 / (mean_w * mean_w)
