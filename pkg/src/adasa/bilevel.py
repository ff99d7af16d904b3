"""Bilevel objectives and the truncated-Neumann hypergradient oracle.

Outer objective V(theta) = f(theta, phi*(theta)) with phi*(theta) minimizing a
strongly convex inner objective g(theta, .).  The hypergradient is

    grad V = grad_theta f - (d^2 g / dtheta dphi) [d^2 g / dphi^2]^-1 grad_phi f,

and the oracle replaces the inverse with the randomized truncated Neumann
product (N / l) * prod_{i=1..N'} (I - H_i / l), N' uniform on {1..N}, where
the H_i are independent inner-Hessian samples and l is an upper bound on
their spectral norm.  Its mean approaches the inverse geometrically in N with
ratio (1 - mu_g / l).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .schedules import PowerSchedule, schedule_value


@dataclass
class BilevelProblem:
    """Stochastic first/second-order oracles plus closed forms for testing.

    grad_outer returns (grad_theta f, grad_phi f) from one shared outer draw.
    mean_* are the noise-free versions used by exact computations.
    Constants: mu_g (inner strong convexity), l_g1 (Lipschitz bound on the
    inner gradient; also the Neumann scale), l_g2 (inner-Hessian Lipschitz),
    l_f0 / l_f1 (outer gradient bound / Lipschitz, certified on the probe ball).
    """

    dim_outer: int
    dim_inner: int
    grad_outer: Callable[[np.ndarray, np.ndarray, np.random.Generator], tuple[np.ndarray, np.ndarray]]
    grad_inner: Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]
    hess_inner: Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]
    cross: Callable[[np.ndarray, np.ndarray, np.random.Generator], np.ndarray]
    mean_grad_outer: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]
    mean_hess_inner: Callable[[np.ndarray, np.ndarray], np.ndarray]
    mean_cross: Callable[[np.ndarray, np.ndarray], np.ndarray]
    phi_star: Callable[[np.ndarray], np.ndarray]
    hypergradient: Callable[[np.ndarray], np.ndarray]
    value: Callable[[np.ndarray], float]
    optimum_value: float
    mu_g: float
    l_g1: float
    l_g2: float
    l_f0: float
    l_f1: float

    def __post_init__(self):
        if not (0 < self.mu_g <= self.l_g1):
            raise ValueError(f"need 0 < mu_g <= l_g1, got mu_g={self.mu_g}, l_g1={self.l_g1}")

    def hypergradient_smoothness(self) -> float:
        """Upper bound on the Lipschitz constant of grad V.

        l_f1 (1 + l_g1/mu_g) covers the outer-gradient and implicit-function
        terms; the curvature of phi* contributes l_f0 l_g2 (1/mu_g + l_g1/mu_g^2),
        which vanishes when the inner Hessian is constant (l_g2 = 0).
        """
        bound = self.l_f1 * (1.0 + self.l_g1 / self.mu_g)
        if self.l_g2 > 0:
            bound += self.l_f0 * self.l_g2 * (1.0 / self.mu_g + self.l_g1 / self.mu_g**2)
        return bound


def exact_hypergradient(bp: BilevelProblem, theta: np.ndarray, phi: np.ndarray | None = None) -> np.ndarray:
    """Noise-free hypergradient via a direct linear solve at phi (default phi*(theta))."""
    if phi is None:
        phi = bp.phi_star(theta)
    gt, gp = bp.mean_grad_outer(theta, phi)
    v = np.linalg.solve(bp.mean_hess_inner(theta, phi), gp)
    return gt - bp.mean_cross(theta, phi) @ v


def _neumann(bp: BilevelProblem, theta, phi, n_truncation: int, rng) -> tuple[np.ndarray, int]:
    if n_truncation < 1:
        raise ValueError(f"truncation depth must be >= 1, got {n_truncation}")
    n_prime = int(rng.integers(1, n_truncation + 1))
    q = bp.dim_inner
    eye = np.eye(q)
    prod = eye.copy()
    for _ in range(n_prime):
        prod = prod @ (eye - bp.hess_inner(theta, phi, rng) / bp.l_g1)
    return (n_truncation / bp.l_g1) * prod, n_prime


def neumann_inverse_estimate(
    bp: BilevelProblem, theta: np.ndarray, phi: np.ndarray, n_truncation: int, rng: np.random.Generator
) -> np.ndarray:
    """One randomized truncated-Neumann draw approximating [d^2 g/dphi^2]^-1."""
    mat, _ = _neumann(bp, theta, phi, n_truncation, rng)
    return mat


def bilevel_oracle(
    bp: BilevelProblem, theta: np.ndarray, phi: np.ndarray, n_truncation: int, rng: np.random.Generator
) -> "GradientSample":
    """Hypergradient sample with the Neumann inverse; inner_samples = N'."""
    from .oracles import GradientSample

    gt, gp = bp.grad_outer(theta, phi, rng)
    ghat, n_prime = _neumann(bp, theta, phi, n_truncation, rng)
    estimate = gt - bp.cross(theta, phi, rng) @ (ghat @ gp)
    return GradientSample(
        estimate=estimate,
        true_gradient=bp.hypergradient(theta),
        inner_samples=n_prime,
    )


def inner_sgd(
    bp: BilevelProblem,
    theta: np.ndarray,
    phi0: np.ndarray,
    steps: int,
    step: PowerSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """`steps` SGD steps on the inner objective at fixed theta.

    Step k (1-indexed) uses the schedule value at k; steps = 0 returns a copy
    of phi0 untouched.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    phi = np.asarray(phi0, dtype=np.float64).copy()
    for k in range(1, steps + 1):
        phi -= schedule_value(step, k) * bp.grad_inner(theta, phi, rng)
    return phi


def bilevel_quadratic_toy(
    seed: int = 0,
    dim_outer: int = 3,
    dim_inner: int = 3,
    alpha: float = 1.0,
    noise_outer: float = 0.0,
    noise_inner: float = 0.0,
) -> BilevelProblem:
    """g = ||phi - B theta||^2 / 2, f = alpha ||theta||^2 / 2 + ||phi - y0||^2 / 2.

    phi*(theta) = B theta exactly, the inner Hessian is the identity (mu_g = 1),
    and V(theta) = alpha ||theta||^2 / 2 + ||B theta - y0||^2 / 2 has a closed
    minimizer.  Gaussian noise of the given scales is added to the stochastic
    first-order oracles; curvature oracles are exact (l_g2 = 0).
    """
    rng = np.random.default_rng(seed)
    b = rng.standard_normal((dim_inner, dim_outer)) / np.sqrt(dim_outer)
    y0 = rng.standard_normal(dim_inner)
    eye = np.eye(dim_inner)

    theta_star = np.linalg.solve(alpha * np.eye(dim_outer) + b.T @ b, b.T @ y0)

    def value(theta):
        resid = b @ theta - y0
        return 0.5 * alpha * float(theta @ theta) + 0.5 * float(resid @ resid)

    def hypergradient(theta):
        return alpha * theta + b.T @ (b @ theta - y0)

    def mean_grad_outer(theta, phi):
        return alpha * theta, phi - y0

    def grad_outer(theta, phi, rng_):
        gt, gp = mean_grad_outer(theta, phi)
        if noise_outer > 0:
            draw = noise_outer * rng_.standard_normal(dim_outer + dim_inner)
            gt = gt + draw[:dim_outer]
            gp = gp + draw[dim_outer:]
        return gt, gp

    def grad_inner(theta, phi, rng_):
        g = phi - b @ theta
        if noise_inner > 0:
            g = g + noise_inner * rng_.standard_normal(dim_inner)
        return g

    # joint Hessian of g over (theta, phi) is [[B^T B, -B^T], [-B, I]]
    joint = np.block([[b.T @ b, -b.T], [-b, eye]])
    l_g1 = float(np.linalg.eigvalsh(joint)[-1])

    probe_radius = 10.0
    # sup over ||theta||, ||phi|| <= R of ||(alpha theta, phi - y0)||
    l_f0 = probe_radius * max(alpha, 1.0) * np.sqrt(2.0) + float(np.linalg.norm(y0))

    return BilevelProblem(
        dim_outer=dim_outer,
        dim_inner=dim_inner,
        grad_outer=grad_outer,
        grad_inner=grad_inner,
        hess_inner=lambda theta, phi, rng_: eye,
        cross=lambda theta, phi, rng_: -b.T,
        mean_grad_outer=mean_grad_outer,
        mean_hess_inner=lambda theta, phi: eye,
        mean_cross=lambda theta, phi: -b.T,
        phi_star=lambda theta: b @ theta,
        hypergradient=hypergradient,
        value=value,
        optimum_value=value(theta_star),
        mu_g=1.0,
        l_g1=l_g1,
        l_g2=0.0,
        l_f0=l_f0,
        l_f1=max(alpha, 1.0),
    )


def scalar_bilevel_toy(a: float = 1.0, neumann_scale: float = 25.0, coupling: float = 1.0, f_slope: float = 1.0) -> BilevelProblem:
    """1-d instance g = a phi^2 / 2 - coupling * theta phi, f = theta^2 / 2 + f_slope * phi.

    The inner Hessian is the constant a, so the only oracle randomness is the
    Neumann truncation index N'; the exact inverse is 1/a and the hypergradient
    bias is |coupling * f_slope| * |E[G_hat] - 1/a| at every (theta, phi).
    `neumann_scale` is the l_g1 bound fed to the estimator (any value >= a is
    a valid Lipschitz bound for the inner gradient in phi).
    """
    if not (0 < a <= neumann_scale):
        raise ValueError(f"need 0 < a <= neumann_scale, got a={a}, scale={neumann_scale}")
    hess = np.array([[a]])
    cross_mat = np.array([[-coupling]])

    def value(theta):
        th = float(np.asarray(theta).reshape(()))
        return 0.5 * th * th + f_slope * coupling / a * th

    ratio = f_slope * coupling / a
    probe_radius = 10.0
    return BilevelProblem(
        dim_outer=1,
        dim_inner=1,
        grad_outer=lambda theta, phi, rng_: (np.asarray(theta, dtype=np.float64), np.array([f_slope])),
        grad_inner=lambda theta, phi, rng_: a * phi - coupling * np.asarray(theta),
        hess_inner=lambda theta, phi, rng_: hess,
        cross=lambda theta, phi, rng_: cross_mat,
        mean_grad_outer=lambda theta, phi: (np.asarray(theta, dtype=np.float64), np.array([f_slope])),
        mean_hess_inner=lambda theta, phi: hess,
        mean_cross=lambda theta, phi: cross_mat,
        phi_star=lambda theta: coupling / a * np.asarray(theta),
        hypergradient=lambda theta: np.asarray(theta) + ratio,
        value=value,
        optimum_value=-0.5 * ratio * ratio,
        mu_g=a,
        l_g1=neumann_scale,
        l_g2=0.0,
        l_f0=float(np.hypot(probe_radius, f_slope)),
        l_f1=1.0,
    )
