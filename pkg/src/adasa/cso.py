"""Conditional stochastic optimization: nested-expectation gradient estimator.

Objective V(theta) = E_xi[ f_xi( E_eta[ g_eta(theta, xi) | xi ] ) ].  The
plug-in estimator draws one xi and m conditional eta samples and evaluates

    (mean_j grad g_eta_j)^T  grad f_xi( mean_j g_eta_j ),

whose squared bias falls like sigma_g^2 / m: the inner mean enters a nonlinear
outer gradient.  When grad f is linear the estimator is exactly unbiased,
which is why the decaying-bias toy below uses a kinked (but 1-Lipschitz)
outer gradient instead of a quadratic one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .oracles import GradientSample


@dataclass
class CSOProblem:
    """Inner/outer samplers plus constants and a closed-form gradient.

    sample_xi(rng) -> xi token; inner_batch(theta, xi, m, rng) -> (m, q) array
    of g_eta draws; inner_jacobian is (q, d) per draw or None meaning every
    grad g is the identity (the toys below).  outer_grad(y, xi) -> (q,).
    Constants: l_g0 (inner Lipschitz in theta), l_f1 (outer-gradient
    Lipschitz), sigma_g2 (conditional variance E||g - E g||^2), l_f0/l_g1
    certified on the probe ball where finite.
    """

    dim: int
    sample_xi: Callable[[np.random.Generator], object]
    inner_batch: Callable[[np.ndarray, object, int, np.random.Generator], np.ndarray]
    outer_grad: Callable[[np.ndarray, object], np.ndarray]
    closed_form_gradient: Callable[[np.ndarray], np.ndarray]
    l_g0: float
    l_f1: float
    sigma_g2: float
    l_g1: float = 0.0
    l_f0: float = np.inf
    inner_jacobian: Callable[[np.ndarray, object, int, np.random.Generator], np.ndarray] | None = None


def cso_oracle(problem: CSOProblem, theta: np.ndarray, m: int, rng: np.random.Generator) -> GradientSample:
    """One xi, m conditional draws, plug-in gradient; inner_samples = m."""
    if m < 1:
        raise ValueError(f"need at least one inner sample, got {m}")
    xi = problem.sample_xi(rng)
    g = problem.inner_batch(theta, xi, m, rng)
    outer = problem.outer_grad(g.mean(axis=0), xi)
    if problem.inner_jacobian is None:
        estimate = outer
    else:
        jac = problem.inner_jacobian(theta, xi, m, rng).mean(axis=0)
        estimate = jac.T @ outer
    return GradientSample(
        estimate=estimate,
        true_gradient=problem.closed_form_gradient(theta),
        inner_samples=m,
    )


def bias_bound(problem: CSOProblem, m: int) -> float:
    """Squared-bias bound l_g0^2 l_f1^2 sigma_g^2 / m."""
    return problem.l_g0**2 * problem.l_f1**2 * problem.sigma_g2 / m


def _shift_toy_parts(dim: int, n_groups: int, sigma: float, seed: int):
    """Shared inner structure: g_eta(theta, xi) = theta + mu(xi) + eta."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    mus = np.random.default_rng(seed).standard_normal((n_groups, dim)) if n_groups > 1 else np.zeros((1, dim))

    def sample_xi(rng):
        return int(rng.integers(n_groups))

    def inner_batch(theta, xi, m, rng):
        return theta + mus[xi] + sigma * rng.standard_normal((m, dim))

    return mus, sample_xi, inner_batch


_PROBE_RADIUS = 10.0


def cso_quadratic_toy(sigma_g: float = 1.0, seed: int = 0, dim: int = 4, n_groups: int = 3) -> CSOProblem:
    """f_xi(y) = ||y||^2 / 2, g_eta(theta, xi) = theta + mu(xi) + eta.

    grad V(theta) = theta + mean(mu); grad f is linear, so the plug-in
    estimator is exactly unbiased for every m.
    """
    mus, sample_xi, inner_batch = _shift_toy_parts(dim, n_groups, sigma_g, seed)
    mu_bar = mus.mean(axis=0)
    # sup of ||grad f|| at the conditional means over the probe ball
    mu_max = float(np.max(np.linalg.norm(mus, axis=1)))
    return CSOProblem(
        dim=dim,
        sample_xi=sample_xi,
        inner_batch=inner_batch,
        outer_grad=lambda y, xi: y,
        closed_form_gradient=lambda theta: theta + mu_bar,
        l_g0=1.0,
        l_f1=1.0,
        sigma_g2=dim * sigma_g * sigma_g,
        l_f0=_PROBE_RADIUS + mu_max,
    )


def cso_abs_toy(sigma_g: float = 1.0, dim: int = 4) -> CSOProblem:
    """f(y) = sum_i y_i |y_i| / 2, g_eta(theta) = theta + eta: genuinely biased.

    grad f(y) = |y| entrywise (1-Lipschitz, kinked at 0), so
    grad V(theta) = |theta| and at theta = 0 the estimator's mean is
    E|mean eta| = sigma_g sqrt(2 / (pi m)) per coordinate: squared bias
    exactly proportional to 1/m, inside the sigma_g^2/m bound.
    """
    _, sample_xi, inner_batch = _shift_toy_parts(dim, 1, sigma_g, 0)
    return CSOProblem(
        dim=dim,
        sample_xi=sample_xi,
        inner_batch=inner_batch,
        outer_grad=lambda y, xi: np.abs(y),
        closed_form_gradient=lambda theta: np.abs(np.asarray(theta, dtype=np.float64)),
        l_g0=1.0,
        l_f1=1.0,
        sigma_g2=dim * sigma_g * sigma_g,
        l_f0=_PROBE_RADIUS,
    )


def cso_linear_toy(sigma_g: float = 1.0, seed: int = 0, dim: int = 4) -> CSOProblem:
    """f_xi(y) = a^T y with a fixed: constant grad f, estimator exactly unbiased."""
    _, sample_xi, inner_batch = _shift_toy_parts(dim, 1, sigma_g, 0)
    a = np.random.default_rng(seed).standard_normal(dim)
    return CSOProblem(
        dim=dim,
        sample_xi=sample_xi,
        inner_batch=inner_batch,
        outer_grad=lambda y, xi: a,
        closed_form_gradient=lambda theta: a.copy(),
        l_g0=1.0,
        l_f1=0.0,
        sigma_g2=dim * sigma_g * sigma_g,
        l_f0=float(np.linalg.norm(a)),
    )
