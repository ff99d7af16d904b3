"""Diagonal adaptive preconditioners and spectral controls.

All preconditioners here are diagonal, so the spectral norm is the largest
entry and eigenvalue brackets reduce to entrywise comparisons.  Second-moment
accumulators are updated in the incremental form a += w * (g^2 - a), which is
algebraically the usual running mean / EMA but never overshoots the largest
squared gradient seen so far in float arithmetic; that is what makes the
spectral bracket checks below exact rather than approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

KINDS = ("identity", "adagrad", "rmsprop", "amsgrad", "coordinate")
COORDINATE_RULES = ("gauss_southwell", "uniform", "weighted")


@dataclass
class DiagonalMatrix:
    """Diagonal matrix stored as its entries (finite, >= 0).

    Inverse-sqrt preconditioners always produce strictly positive entries;
    zero entries only appear in 0/1 coordinate masks.
    """

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 1:
            raise ValueError("DiagonalMatrix entries must be a 1-d array")
        if not np.all(np.isfinite(self.entries)) or np.any(self.entries < 0):
            raise ValueError("DiagonalMatrix entries must be finite and >= 0")

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.entries * v

    def norm(self) -> float:
        """Spectral norm: the largest diagonal entry."""
        return float(np.max(self.entries))

    def lambda_min(self) -> float:
        return float(np.min(self.entries))

    def lambda_max(self) -> float:
        return float(np.max(self.entries))


@dataclass
class PreconditionerState:
    """Mutable per-run state; `accum` holds the second-moment statistic.

    adagrad: accum = running mean of squared gradients (count samples).
    rmsprop: accum = EMA with decay rho.
    amsgrad: accum = EMA with decay rho2, vhat = entrywise running max of it.
    AMSGRAD's first-moment vector lives in the driver, not here.
    """

    kind: str
    dim: int
    delta: float = 5e-2
    rho: float = 0.9
    rho1: float = 0.9
    rho2: float = 0.999
    accum: np.ndarray = field(init=False)
    vhat: np.ndarray = field(init=False)
    count: int = field(init=False, default=0)
    coord_weights: np.ndarray | None = None
    coord_rule: str = "gauss_southwell"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.kind in ("adagrad", "rmsprop", "amsgrad") and not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        for name, v in (("rho", self.rho), ("rho1", self.rho1), ("rho2", self.rho2)):
            if not (0 <= v < 1):
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.coord_rule not in COORDINATE_RULES:
            raise ValueError(f"coord_rule must be one of {COORDINATE_RULES}, got {self.coord_rule!r}")
        self.accum = np.zeros(self.dim)
        self.vhat = np.zeros(self.dim)
        if self.coord_weights is not None:
            w = np.asarray(self.coord_weights, dtype=np.float64)
            if w.shape != (self.dim,) or np.any(w <= 0) or abs(float(w.sum()) - 1.0) > 1e-12:
                raise ValueError("coord_weights must be positive, length dim, sum to 1 within 1e-12")
            self.coord_weights = w


def _inv_sqrt(delta: float, diag: np.ndarray) -> DiagonalMatrix:
    return DiagonalMatrix(1.0 / np.sqrt(delta + diag))


def _check_gradient(state: PreconditionerState, gradient: np.ndarray) -> np.ndarray:
    # reject before touching state, so a bad sample leaves it replayable
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != (state.dim,):
        raise ValueError(f"gradient shape {gradient.shape} != ({state.dim},)")
    if not np.all(np.isfinite(gradient)):
        raise ValueError("gradient has non-finite entries; state left unchanged")
    return gradient


def update_adagrad(state: PreconditionerState, gradient: np.ndarray) -> DiagonalMatrix:
    """Fold `gradient` into the running mean of squares; return the new A."""
    gradient = _check_gradient(state, gradient)
    state.count += 1
    state.accum += (gradient * gradient - state.accum) / state.count
    return _inv_sqrt(state.delta, state.accum)


def update_rmsprop(state: PreconditionerState, gradient: np.ndarray) -> DiagonalMatrix:
    gradient = _check_gradient(state, gradient)
    state.count += 1
    state.accum += (1.0 - state.rho) * (gradient * gradient - state.accum)
    return _inv_sqrt(state.delta, state.accum)


def update_amsgrad(state: PreconditionerState, gradient: np.ndarray) -> DiagonalMatrix:
    """EMA of squares plus entrywise running max, so A never grows."""
    gradient = _check_gradient(state, gradient)
    state.count += 1
    state.accum += (1.0 - state.rho2) * (gradient * gradient - state.accum)
    np.maximum(state.vhat, state.accum, out=state.vhat)
    return _inv_sqrt(state.delta, state.vhat)


def clip_spectral(a: DiagonalMatrix, bound: float) -> DiagonalMatrix:
    """Rescale A so its spectral norm is at most `bound` (no-op when already under).

    The scaled entries are capped at `bound` entrywise: the scale factor
    bound/norm can round a hair high in floats, and the cap makes the output
    obey the bound exactly and the operation idempotent bitwise.
    """
    if not bound > 0:
        raise ValueError(f"clip bound must be > 0, got {bound}")
    norm = a.norm()
    if norm <= bound:
        return a
    return DiagonalMatrix(np.minimum(a.entries * (bound / norm), bound))


def spectral_bounds(a: DiagonalMatrix) -> tuple[float, float]:
    """(smallest, largest) diagonal entry of A."""
    return a.lambda_min(), a.lambda_max()


def bracket_bounds(delta: float, grad_bound: float) -> tuple[float, float]:
    """Eigenvalue bracket ((delta + M^2)^-1/2, delta^-1/2) for the inverse-sqrt family.

    Valid for adagrad/rmsprop/amsgrad whenever every gradient sup-norm seen so
    far is <= grad_bound, because each accumulator entry then sits in [0, M^2].
    """
    if not delta > 0:
        raise ValueError(f"bracket bounds need delta > 0, got {delta}")
    lo = 1.0 / math.sqrt(delta + grad_bound * grad_bound)
    hi = 1.0 / math.sqrt(delta)
    return lo, hi


def coordinate_select(
    state: PreconditionerState,
    gradient: np.ndarray,
    rule: str = "gauss_southwell",
    rng: np.random.Generator | None = None,
) -> tuple[int, DiagonalMatrix]:
    """Pick a coordinate and return (index, 0/1 diagonal mask).

    gauss_southwell takes the largest |gradient| entry, ties resolved to the
    lowest index (an all-zero gradient selects 0).
    """
    if rule not in COORDINATE_RULES:
        raise ValueError(f"rule must be one of {COORDINATE_RULES}, got {rule!r}")
    if rule == "gauss_southwell":
        index = int(np.argmax(np.abs(gradient)))
    elif rule == "uniform":
        if rng is None:
            raise ValueError("uniform rule needs an rng")
        index = int(rng.integers(state.dim))
    else:
        if rng is None:
            raise ValueError("weighted rule needs an rng")
        if state.coord_weights is None:
            raise ValueError("weighted rule needs coord_weights on the state")
        index = int(rng.choice(state.dim, p=state.coord_weights))
    mask = np.zeros(state.dim)
    mask[index] = 1.0
    return index, DiagonalMatrix(mask)
