"""Power-law schedules and rate-regime classification.

Runs are driven by three 1-indexed schedules: step sizes gamma_n = C_g * n^-g,
spectral caps beta_n = C_b * n^b, and drift floors lambda_n = C_l * n^-l.
Oracle bias magnitudes follow the same power form r_n = C_r * n^-r, with
r = inf standing for an exactly unbiased oracle (distinct from r = 0, which
means a constant bias).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

UNBIASED = math.inf

_DIRECTIONS = ("decreasing", "increasing")


@dataclass(frozen=True)
class PowerSchedule:
    """n |-> coeff * n^(+/- exponent), n >= 1; sign picked by `direction`."""

    coeff: float
    exponent: float
    direction: str = "decreasing"

    def __post_init__(self):
        if not (self.coeff > 0 and math.isfinite(self.coeff)):
            raise ValueError(f"schedule coeff must be finite and > 0, got {self.coeff}")
        if not (self.exponent >= 0 and math.isfinite(self.exponent)):
            raise ValueError(f"schedule exponent must be finite and >= 0, got {self.exponent}")
        if self.direction not in _DIRECTIONS:
            raise ValueError(f"direction must be one of {_DIRECTIONS}, got {self.direction!r}")

    @property
    def signed_exponent(self) -> float:
        return self.exponent if self.direction == "increasing" else -self.exponent


def schedule_value(schedule: PowerSchedule, n: int) -> float:
    """Value at iteration n (1-indexed)."""
    if n < 1:
        raise ValueError(f"schedules are 1-indexed, got n={n}")
    return schedule.coeff * float(n) ** schedule.signed_exponent


def schedule_array(schedule: PowerSchedule, n: int) -> np.ndarray:
    """Values at 1..n as a float64 array; the single source for run loops."""
    if n < 1:
        raise ValueError(f"schedules are 1-indexed, got n={n}")
    idx = np.arange(1, n + 1, dtype=np.float64)
    return schedule.coeff * idx ** schedule.signed_exponent


@dataclass(frozen=True)
class RateRegime:
    """Leading decay exponent of the expected-suboptimality bound.

    bias_exponent is a float, the string "constant" when the bias term does
    not decay (r = 0), or -inf when the oracle is unbiased (r = inf).
    """

    leading_exponent: float
    has_log_factor: bool
    bias_exponent: float | str


def classify_rate_regime(gamma: float, beta: float, lam: float, r: float) -> RateRegime:
    """Case split of the composite rate n^(-gamma+lambda+2*beta) vs n^(gamma+lambda-1).

    Exponents are the schedule decay/growth rates (all >= 0); r = inf flags an
    unbiased oracle.  Boundaries compare exactly: pass exact floats like 0.5.
    """
    for name, v in (("gamma", gamma), ("beta", beta), ("lambda", lam)):
        if not (0 <= v < math.inf):
            raise ValueError(f"{name} exponent must be finite and >= 0, got {v}")
    if not (gamma + lam < 1):
        raise ValueError(f"admissibility requires gamma + lambda < 1, got {gamma + lam}")
    if not (r >= 0):
        raise ValueError(f"bias exponent r must be >= 0 (inf for unbiased), got {r}")

    has_log = False
    d = gamma - beta
    if d < 0.5:
        leading = -gamma + lam + 2 * beta
    elif d > 0.5:
        leading = gamma + lam - 1
    else:
        leading = gamma + lam - 1
        has_log = True

    bias_exponent: float | str
    if math.isinf(r):
        bias_exponent = -math.inf
    elif r == 0:
        # gamma + lambda < 1 puts r + lambda + gamma < 1 automatically.
        bias_exponent = "constant"
    else:
        s = r + lam + gamma
        if s < 1:
            bias_exponent = -r
        elif s > 1:
            bias_exponent = gamma + lam - 1
        else:
            bias_exponent = gamma + lam - 1
            has_log = True

    return RateRegime(leading_exponent=leading, has_log_factor=has_log, bias_exponent=bias_exponent)
