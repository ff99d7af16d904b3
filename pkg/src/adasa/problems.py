"""Test objectives with certified constants.

Each Problem carries the constants the convergence bounds consume: a
smoothness constant (exact for quadratics, Gram-matrix bound for logistic),
an optional gradient-domination constant mu with 2*mu*(V - V*) <= ||grad V||^2,
and a gradient bound M certified on a probe ball of radius `probe_radius`.
verify_assumptions probes those claims numerically and is wired into the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class Problem:
    name: str
    dim: int
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    optimum_value: float
    smoothness: float
    pl_constant: float | None = None
    grad_bound: float = np.inf
    probe_radius: float = 10.0
    theta_star: np.ndarray | None = None
    quad_matrix: np.ndarray | None = None  # Q for quadratics; enables the fast kernel
    value_batch: Callable[[np.ndarray], np.ndarray] | None = None  # (k, dim) -> (k,)


def quadratic_problem(a: np.ndarray, name: str = "quadratic") -> Problem:
    """V(theta) = ||A theta||^2 / 2 with exact smoothness, mu, and optimum 0.

    Value and gradient go through Q = A^T A, so V(theta) = theta.Q theta / 2.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("quadratic_problem expects a square matrix")
    q = a.T @ a
    q = 0.5 * (q + q.T)
    dim = q.shape[0]
    eigs = np.linalg.eigvalsh(q)
    lmax = float(eigs[-1])
    lmin = float(eigs[0])
    probe_radius = 10.0

    def value(theta):
        return 0.5 * float(theta @ (q @ theta))

    def gradient(theta):
        return q @ theta

    def value_batch(thetas):
        return 0.5 * np.einsum("ij,ij->i", thetas, thetas @ q)

    return Problem(
        name=name,
        dim=dim,
        value=value,
        gradient=gradient,
        optimum_value=0.0,
        smoothness=lmax,
        pl_constant=lmin if lmin > 0 else None,
        grad_bound=lmax * probe_radius,
        probe_radius=probe_radius,
        theta_star=np.zeros(dim),
        quad_matrix=q,
        value_batch=value_batch,
    )


def default_quadratic(dim: int = 10, seed: int = 0, spectrum: tuple[float, float] = (0.5, 1.5)) -> Problem:
    """Seeded least-squares instance: A = U diag(s) V^T, s = linspace(spectrum).

    The orthogonal factors come from QR of seeded Gaussians, so the smoothness
    max(s)^2 and mu = min(s)^2 are exact and the instance is reproducible.
    """
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    v, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    s = np.linspace(spectrum[0], spectrum[1], dim)
    a = u @ np.diag(s) @ v.T
    return quadratic_problem(a, name=f"quadratic-d{dim}-seed{seed}")


def logistic_problem(x: np.ndarray, y: np.ndarray, ridge: float = 0.0, name: str = "logistic") -> Problem:
    """Ridge-regularized logistic loss over rows of x with labels y in {-1, +1}.

    Smoothness bound lambda_max(X^T X) / (4 n) + ridge.  The reference optimum
    is found by deterministic gradient descent at step 1/smoothness, run to
    sup-norm tolerance 1e-13 and cached on the instance.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("x must be (n, dim) and y must be (n,)")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +/-1")
    n, dim = x.shape
    gram = x.T @ x
    lips = float(np.linalg.eigvalsh(gram)[-1]) / (4.0 * n) + ridge

    def value(theta):
        margins = -y * (x @ theta)
        # log(1 + exp(m)) computed stably for both signs of m
        loss = np.logaddexp(0.0, margins).mean()
        return float(loss + 0.5 * ridge * theta @ theta)

    def gradient(theta):
        margins = -y * (x @ theta)
        sig = 1.0 / (1.0 + np.exp(-margins))
        return -(x.T @ (y * sig)) / n + ridge * theta

    def value_batch(thetas):
        margins = -(thetas @ x.T) * y
        loss = np.logaddexp(0.0, margins).mean(axis=1)
        return loss + 0.5 * ridge * np.einsum("ij,ij->i", thetas, thetas)

    theta_star = np.zeros(dim)
    for _ in range(1_000_000):
        g = gradient(theta_star)
        if float(np.max(np.abs(g))) < 1e-13:
            break
        theta_star = theta_star - g / lips
    optimum = value(theta_star)

    probe_radius = 10.0
    # sup ||grad|| over the ball: data term is bounded by mean row norm, ridge term by ridge * R
    row_bound = float(np.mean(np.linalg.norm(x, axis=1)))
    grad_bound = row_bound + ridge * probe_radius

    return Problem(
        name=name,
        dim=dim,
        value=value,
        gradient=gradient,
        optimum_value=optimum,
        smoothness=lips,
        pl_constant=None,
        grad_bound=grad_bound,
        probe_radius=probe_radius,
        theta_star=theta_star,
        value_batch=value_batch,
    )


def default_logistic(n: int = 40, dim: int = 5, seed: int = 0, ridge: float = 0.1) -> Problem:
    """Seeded synthetic classification instance with a planted direction."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, dim))
    planted = rng.standard_normal(dim)
    y = np.sign(x @ planted + 0.5 * rng.standard_normal(n))
    y[y == 0] = 1.0
    return logistic_problem(x, y, ridge=ridge, name=f"logistic-n{n}-d{dim}-seed{seed}")


def finite_difference_gradient(problem: Problem, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of problem.value along each axis."""
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    theta = np.asarray(theta, dtype=np.float64)
    out = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (problem.value(theta + e) - problem.value(theta - e)) / (2.0 * h)
    return out


@dataclass
class AssumptionReport:
    passed: bool
    lipschitz_ratio_max: float
    lipschitz_ok: bool
    pl_margin_min: float | None
    pl_ok: bool | None
    grad_norm_max: float
    grad_bound_ok: bool
    violations: list[str] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [f"smoothness: max ratio {self.lipschitz_ratio_max:.6g} vs bound -> {'ok' if self.lipschitz_ok else 'VIOLATED'}"]
        if self.pl_ok is None:
            out.append("gradient domination: not claimed")
        else:
            out.append(f"gradient domination: min margin {self.pl_margin_min:.3g} -> {'ok' if self.pl_ok else 'VIOLATED'}")
        out.append(f"gradient bound: max ||grad|| {self.grad_norm_max:.6g} vs M -> {'ok' if self.grad_bound_ok else 'VIOLATED'}")
        out.append(f"assumptions: {'PASS' if self.passed else 'FAIL'}")
        return out


def verify_assumptions(problem: Problem, probes: int = 1000, rng: np.random.Generator | None = None) -> AssumptionReport:
    """Numerically probe the problem's claimed constants on its probe ball.

    Samples point pairs for the smoothness ratio, points for the gradient
    domination inequality and for ||grad|| <= M.  All checks allow a 1e-9
    relative slack for float noise and nothing more.
    """
    if probes < 2:
        raise ValueError(f"need at least 2 probes, got {probes}")
    if rng is None:
        rng = np.random.default_rng(0)
    d = problem.dim
    r = problem.probe_radius
    slack = 1.0 + 1e-9

    def sample_point():
        v = rng.standard_normal(d)
        v *= r * rng.random() ** (1.0 / d) / np.linalg.norm(v)
        return v

    violations: list[str] = []
    ratio_max = 0.0
    for _ in range(probes):
        p, q = sample_point(), sample_point()
        denom = float(np.linalg.norm(p - q))
        if denom == 0.0:
            continue
        ratio = float(np.linalg.norm(problem.gradient(p) - problem.gradient(q))) / denom
        ratio_max = max(ratio_max, ratio)
    lips_ok = ratio_max <= problem.smoothness * slack
    if not lips_ok:
        violations.append(f"gradient Lipschitz ratio {ratio_max:.6g} exceeds claimed {problem.smoothness:.6g}")

    pl_ok = None
    pl_margin = None
    if problem.pl_constant is not None:
        pl_margin = np.inf
        for _ in range(probes):
            p = sample_point()
            gap = problem.value(p) - problem.optimum_value
            lhs = 2.0 * problem.pl_constant * gap
            rhs = float(problem.gradient(p) @ problem.gradient(p))
            pl_margin = min(pl_margin, rhs - lhs)
            if lhs > rhs * slack + 1e-12:
                pl_ok = False
        if pl_ok is None:
            pl_ok = True
        else:
            violations.append(f"gradient domination violated (worst margin {pl_margin:.3g})")

    grad_max = 0.0
    for _ in range(probes):
        grad_max = max(grad_max, float(np.linalg.norm(problem.gradient(sample_point()))))
    grad_ok = grad_max <= problem.grad_bound * slack
    if not grad_ok:
        violations.append(f"max ||grad|| {grad_max:.6g} exceeds M={problem.grad_bound:.6g}")

    return AssumptionReport(
        passed=not violations,
        lipschitz_ratio_max=ratio_max,
        lipschitz_ok=lips_ok,
        pl_margin_min=None if pl_margin is None else float(pl_margin),
        pl_ok=pl_ok,
        grad_norm_max=grad_max,
        grad_bound_ok=grad_ok,
        violations=violations,
    )
