"""Empirical rate measurement against predicted decay curves.

The log-log slope of E[V(theta_n) - V*] (or the squared gradient norm) over a
window is the measured rate; classify_rate_regime supplies the exponent it
should match.  Bound curves are shape-only: every comparison fits one
multiplicative constant by anchoring the curve to the trace at the window
start, because the constants in front of the rates are not observable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .schedules import RateRegime


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    n_points: int
    window: tuple[int, int]


def _ols_loglog(n: np.ndarray, y: np.ndarray, window: tuple[int, int]) -> SlopeFit:
    res = stats.linregress(np.log10(n), np.log10(y))
    return SlopeFit(
        slope=float(res.slope),
        intercept=float(res.intercept),
        stderr=float(res.stderr),
        r_squared=float(res.rvalue) ** 2,
        n_points=int(n.size),
        window=(int(window[0]), int(window[1])),
    )


def fit_loglog_slope(n: np.ndarray, y: np.ndarray, window: tuple[int, int]) -> SlopeFit:
    """Least-squares slope of log10 y against log10 n restricted to lo <= n <= hi.

    Needs at least 10 points in the window, all positive: a nonpositive value
    carries no rate information, so the caller must exclude it (or floor the
    series) before fitting rather than have it silently dropped here.
    """
    lo, hi = window
    if not 0 < lo < hi:
        raise ValueError(f"window must satisfy 0 < lo < hi, got {window}")
    n = np.asarray(n, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mask = (n >= lo) & (n <= hi)
    if int(mask.sum()) < 10:
        raise ValueError(f"only {int(mask.sum())} points in window {window}; need >= 10")
    if not np.all(np.isfinite(y[mask])):
        raise ValueError(f"non-finite values in window {window}")
    if np.any(y[mask] <= 0):
        raise ValueError(f"nonpositive values in window {window}; exclude or floor them first")
    return _ols_loglog(n[mask], y[mask], (int(lo), int(hi)))


BOUND_KINDS = ("pl_bound", "nonconvex_rate", "amsgrad_rate")


@dataclass(frozen=True)
class TheoreticalBound:
    """Sum of coef * n^exponent * log(n+1)^log_power terms.

    `kind` records which guarantee the shape came from: "pl_bound" for
    gradient-dominated objectives (value gap decays to a bias floor),
    "nonconvex_rate" / "amsgrad_rate" for the expected squared gradient norm
    of the selected iterate.  The log argument is shifted by one so curves
    stay positive from n = 1.
    """

    kind: str
    terms: tuple[tuple[float, float, int], ...]

    def __post_init__(self):
        if self.kind not in BOUND_KINDS:
            raise ValueError(f"kind must be one of {BOUND_KINDS}, got {self.kind!r}")
        if not self.terms:
            raise ValueError("bound needs at least one term")

    def evaluate(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        if np.any(n < 1):
            raise ValueError("bound curves are defined for n >= 1")
        total = np.zeros_like(n)
        for coef, exponent, log_power in self.terms:
            term = coef * n**exponent
            if log_power:
                term = term * np.log(n + 1.0) ** log_power
            total += term
        return total

    def dominant_exponent(self) -> float:
        """Exponent of the asymptotically dominant (slowest-decaying) term."""
        return max(t[1] for t in self.terms)


def regime_bound(
    regime: RateRegime,
    kind: str = "nonconvex_rate",
    rate_coef: float = 1.0,
    bias_coef: float = 1.0,
) -> TheoreticalBound:
    """Decay-plus-floor envelope for a classified regime.

    The transient term decays like n^leading_exponent (with a log factor on
    the boundary); the bias term is a constant floor, a power tail, or absent
    for unbiased oracles.  Regimes whose leading term grows are rejected: the
    guarantees only cover admissible schedule combinations.
    """
    if regime.leading_exponent > 0:
        raise ValueError(f"leading exponent {regime.leading_exponent} grows; inadmissible schedules")
    terms = [(rate_coef, regime.leading_exponent, 1 if regime.has_log_factor else 0)]
    if regime.bias_exponent == "constant":
        terms.append((bias_coef, 0.0, 0))
    elif isinstance(regime.bias_exponent, float) and np.isfinite(regime.bias_exponent):
        terms.append((bias_coef, regime.bias_exponent, 0))
    # -inf: unbiased, no floor term
    return TheoreticalBound(kind=kind, terms=tuple(terms))


def bound_curve(
    bound: TheoreticalBound,
    n_grid: np.ndarray,
    anchor: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the bound on a grid, rescaled through an anchor point.

    anchor = (n0, y0) fits the one free multiplicative constant so the curve
    passes through y0 at n0 (typically the trace value at the window start);
    without an anchor the curve is normalized to 1 at the first grid point.
    """
    n_grid = np.asarray(n_grid, dtype=np.float64)
    if n_grid.size == 0:
        raise ValueError("empty grid")
    values = bound.evaluate(n_grid)
    if anchor is None:
        n0, y0 = float(n_grid[0]), 1.0
    else:
        n0, y0 = float(anchor[0]), float(anchor[1])
    ref = float(bound.evaluate(np.array([n0]))[0])
    if not ref > 0:
        raise ValueError(f"bound is nonpositive at the anchor n={n0}")
    if not y0 > 0:
        raise ValueError(f"anchor value must be positive, got {y0}")
    return n_grid, values * (y0 / ref)


@dataclass(frozen=True)
class BiasDecayFit:
    """Measured |bias| per grid point, its MC error, and the log-log fit.

    indistinguishable: every measured bias sat within 3 standard errors of
    zero, so there is no decay to fit and `fit` is None.
    """

    n_grid: np.ndarray
    bias: np.ndarray
    stderr: np.ndarray
    fit: SlopeFit | None
    indistinguishable: bool


def bias_decay_fit(estimator_fn, n_grid, reps: int, rng: np.random.Generator) -> BiasDecayFit:
    """Monte Carlo bias-vs-N sweep with a log-log slope fit.

    estimator_fn(n, reps, rng) must return `reps` independent signed errors
    (estimate minus the exact target value) of the estimator run at size n;
    measured bias at n is |mean| with standard error std/sqrt(reps).  If every
    point is within 3 SE of zero the estimator is flagged indistinguishable
    from unbiased and no fit is attempted.  A bias left unresolved at the
    largest n (while others resolved) means reps is too small to trust the
    sweep, which is an error rather than a silent bad fit.
    """
    n_grid = np.asarray(n_grid, dtype=np.int64)
    if n_grid.size < 4:
        raise ValueError(f"need at least 4 grid points, got {n_grid.size}")
    if np.any(np.diff(n_grid) <= 0):
        raise ValueError("grid must be strictly increasing")
    if reps < 2:
        raise ValueError(f"need reps >= 2 for a standard error, got {reps}")
    bias = np.empty(n_grid.size)
    se = np.empty(n_grid.size)
    for i, n in enumerate(n_grid):
        errs = np.asarray(estimator_fn(int(n), reps, rng), dtype=np.float64)
        if errs.shape != (reps,):
            raise ValueError(f"estimator_fn returned shape {errs.shape}, expected ({reps},)")
        bias[i] = abs(float(errs.mean()))
        se[i] = float(errs.std(ddof=1)) / np.sqrt(reps)
    resolved = bias > 3.0 * se
    if not resolved.any():
        return BiasDecayFit(n_grid=n_grid, bias=bias, stderr=se, fit=None, indistinguishable=True)
    if not resolved[-1]:
        raise ValueError(
            f"bias at the largest n={int(n_grid[-1])} is inside 3 SE of zero "
            f"({bias[-1]:.3g} vs SE {se[-1]:.3g}); increase reps"
        )
    if not resolved.all():
        bad = n_grid[~resolved].tolist()
        raise ValueError(f"bias unresolved at n={bad}; increase reps")
    window = (int(n_grid[0]), int(n_grid[-1]))
    fit = _ols_loglog(n_grid.astype(np.float64), bias, window)
    return BiasDecayFit(n_grid=n_grid, bias=bias, stderr=se, fit=fit, indistinguishable=False)


def terminal_plateau(y: np.ndarray, fraction: float = 0.1) -> float:
    """Mean of the final fraction of a series; the bias-floor readout."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty series")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = max(1, int(round(fraction * y.size)))
    return float(np.mean(y[-k:]))


def average_traces(traces, field: str = "v_gap") -> tuple[np.ndarray, np.ndarray]:
    """Pointwise mean of one field across equal-length traces; returns (n, mean)."""
    if not traces:
        raise ValueError("no traces given")
    length = len(traces[0])
    for t in traces:
        if len(t) != length:
            raise ValueError("traces must share a horizon to be averaged")
    stack = np.stack([getattr(t, field) for t in traces])
    return traces[0].n.copy(), stack.mean(axis=0)
