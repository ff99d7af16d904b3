"""Gradient oracles: controllable-bias synthetic, zeroth-order, Markov-noise.

Every oracle returns a GradientSample.  `inner_samples` counts the Monte
Carlo draws the call consumed (1 for single-draw oracles, T for a Markov
window, N' for truncated Neumann products) so traces can report oracle cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problems import Problem
from .schedules import PowerSchedule, schedule_value


@dataclass
class GradientSample:
    estimate: np.ndarray
    true_gradient: np.ndarray | None = None
    bias_target: np.ndarray | None = None
    inner_samples: int = 1


BIAS_DIRECTIONS = ("fixed_axis", "fixed_random_unit", "toward_gradient")


def bias_direction_vector(direction: str, dim: int, seed: int = 0) -> np.ndarray | None:
    """Unit vector for the fixed bias directions; None for toward_gradient."""
    if direction == "fixed_axis":
        u = np.zeros(dim)
        u[0] = 1.0
        return u
    if direction == "fixed_random_unit":
        v = np.random.default_rng(seed).standard_normal(dim)
        return v / np.linalg.norm(v)
    if direction == "toward_gradient":
        return None
    raise ValueError(f"direction must be one of {BIAS_DIRECTIONS}, got {direction!r}")


def synthetic_biased_oracle(
    problem: Problem,
    theta: np.ndarray,
    n: int,
    bias_sched: PowerSchedule | float | None,
    noise_var: float,
    rng: np.random.Generator,
    direction: np.ndarray | str = "fixed_axis",
) -> GradientSample:
    """True gradient plus N(0, noise_var I) noise plus a planted decaying bias.

    The bias magnitude at iteration n (1-indexed) is bias_sched evaluated at
    n; pass None (or inf) for an exactly unbiased oracle.  `direction` is a
    fixed unit vector, the name of one, or "toward_gradient" to align the
    bias with the current gradient (zero gradient contributes no bias).
    bias_target reports the planted vector exactly.
    """
    if not noise_var >= 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var}")
    g = problem.gradient(theta)
    noise = math.sqrt(noise_var) * rng.standard_normal(theta.size)
    if bias_sched is None or (isinstance(bias_sched, float) and math.isinf(bias_sched)):
        magnitude = 0.0
    else:
        magnitude = schedule_value(bias_sched, n)
    if isinstance(direction, str):
        u = bias_direction_vector(direction, theta.size)
    else:
        u = direction
    if u is None:
        norm = float(np.linalg.norm(g))
        u = g / norm if norm > 0 else np.zeros_like(g)
    bias = magnitude * u
    return GradientSample(estimate=g + noise + bias, true_gradient=g, bias_target=bias, inner_samples=1)


def zeroth_order_oracle(
    value_fn: Callable[[np.ndarray], float],
    theta: np.ndarray,
    tau: float,
    rng: np.random.Generator,
) -> GradientSample:
    """Gaussian-smoothing estimate ((V(theta + tau X) - V(theta)) / tau) * X, X ~ N(0, I)."""
    if not tau > 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    x = rng.standard_normal(np.asarray(theta).size)
    shifted = value_fn(theta + tau * x)
    base = value_fn(theta)
    if not (math.isfinite(shifted) and math.isfinite(base)):
        raise ValueError("value function returned a non-finite number")
    return GradientSample(estimate=((shifted - base) / tau) * x, inner_samples=1)


@dataclass
class MarkovStream:
    """Componentwise AR(1) chain x' = a x + sqrt(1 - a^2) xi, stationary N(0, I).

    State persists across calls: optimization runs advance one chain, they do
    not restart it.  a = 0 degenerates to i.i.d. standard normal draws.
    """

    a: float
    dim: int
    state: np.ndarray | None = None
    steps_taken: int = 0

    def __post_init__(self):
        if not (0 <= self.a < 1):
            raise ValueError(f"mixing parameter a must be in [0, 1), got {self.a}")
        if self.state is None:
            self.state = np.zeros(self.dim)
        else:
            self.state = np.asarray(self.state, dtype=np.float64).copy()
            if self.state.shape != (self.dim,):
                raise ValueError("state shape must match dim")

    @property
    def stationary_mean(self) -> np.ndarray:
        return np.zeros(self.dim)

    @property
    def stationary_var(self) -> float:
        # a^2 + (1 - a^2) = 1 by construction
        return 1.0

    def advance(self, rng: np.random.Generator) -> np.ndarray:
        innov = np.sqrt(1.0 - self.a * self.a)
        self.state = self.a * self.state + innov * rng.standard_normal(self.dim)
        self.steps_taken += 1
        return self.state


def markov_oracle(
    stream: MarkovStream,
    grad_fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
    theta: np.ndarray,
    inner_samples: int,
    rng: np.random.Generator,
) -> GradientSample:
    """Average grad_fn(theta, x) over the next `inner_samples` chain states.

    The chain is advanced, never reset, so consecutive calls see correlated
    noise; the estimate is conditionally biased through the chain's memory of
    its current state, and longer windows shrink that bias like the mixing
    time over T.
    """
    if inner_samples < 1:
        raise ValueError(f"inner_samples must be >= 1, got {inner_samples}")
    acc = np.zeros(np.asarray(theta).size)
    for _ in range(inner_samples):
        acc += grad_fn(theta, stream.advance(rng))
    return GradientSample(estimate=acc / inner_samples, inner_samples=inner_samples)
