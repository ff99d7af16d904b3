import numpy as np
import pytest

from adasa.bilevel import (
    bilevel_oracle,
    bilevel_quadratic_toy,
    exact_hypergradient,
    inner_sgd,
    neumann_inverse_estimate,
    scalar_bilevel_toy,
)
from adasa.schedules import PowerSchedule


def test_quadratic_toy_structure():
    bp = bilevel_quadratic_toy(seed=0)
    rng = np.random.default_rng(1)
    theta = rng.standard_normal(bp.dim_outer)
    # inner solution and the solve-based hypergradient agree with closed forms
    phi = bp.phi_star(theta)
    assert np.allclose(bp.mean_hess_inner(theta, phi), np.eye(bp.dim_inner))
    np.testing.assert_allclose(exact_hypergradient(bp, theta), bp.hypergradient(theta), rtol=1e-12)


def test_quadratic_toy_hypergradient_fd():
    bp = bilevel_quadratic_toy(seed=3)
    rng = np.random.default_rng(2)
    h = 1e-6
    for _ in range(5):
        theta = rng.standard_normal(bp.dim_outer)
        fd = np.empty(bp.dim_outer)
        for i in range(bp.dim_outer):
            e = np.zeros(bp.dim_outer)
            e[i] = h
            fd[i] = (bp.value(theta + e) - bp.value(theta - e)) / (2 * h)
        g = bp.hypergradient(theta)
        assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-12)


def test_quadratic_toy_optimum():
    bp = bilevel_quadratic_toy(seed=5)
    rng = np.random.default_rng(4)
    for _ in range(10):
        assert bp.value(rng.standard_normal(bp.dim_outer)) >= bp.optimum_value - 1e-12


def test_hypergradient_smoothness_dominates_true_hessian():
    bp = bilevel_quadratic_toy(seed=0, alpha=0.7)
    # V is quadratic with Hessian alpha I + B^T B; recover B^T B from the
    # hypergradient at unit directions
    d = bp.dim_outer
    hess = np.column_stack([bp.hypergradient(e) - bp.hypergradient(np.zeros(d)) for e in np.eye(d)])
    lmax = float(np.linalg.eigvalsh(0.5 * (hess + hess.T))[-1])
    assert bp.hypergradient_smoothness() >= lmax


def test_constants_validation():
    with pytest.raises(ValueError):
        scalar_bilevel_toy(a=2.0, neumann_scale=1.0)


def test_neumann_exact_scale():
    # l = a makes every factor (1 - H/l) vanish, so the estimate is 0
    bp = scalar_bilevel_toy(a=2.0, neumann_scale=2.0)
    g = neumann_inverse_estimate(bp, np.array([0.1]), np.array([0.0]), 4, np.random.default_rng(0))
    assert g[0, 0] == 0.0


def test_neumann_enumerated_mean():
    # constant Hessian: G = (N/l) rho^N', N' uniform on {1..N}, so
    # E[G] = (1/a)(1 - a/l)(1 - (1 - a/l)^N)
    bp = scalar_bilevel_toy(a=1.0, neumann_scale=25.0)
    rho = 1.0 - bp.mu_g / bp.l_g1
    n = 6
    enum = np.mean([(n / bp.l_g1) * rho**k for k in range(1, n + 1)])
    closed = (1.0 / bp.mu_g) * rho * (1.0 - rho**n)
    assert enum == pytest.approx(closed, rel=1e-12)
    with pytest.raises(ValueError):
        neumann_inverse_estimate(bp, np.array([0.0]), np.array([0.0]), 0, np.random.default_rng(0))


def test_neumann_mc_mean():
    bp = scalar_bilevel_toy(a=1.0, neumann_scale=25.0)
    rho = 1.0 - bp.mu_g / bp.l_g1
    rng = np.random.default_rng(17)
    n = 4
    draws = np.array([neumann_inverse_estimate(bp, np.array([0.0]), np.array([0.0]), n, rng)[0, 0] for _ in range(5000)])
    closed = (1.0 / bp.mu_g) * rho * (1.0 - rho**n)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - closed) <= 4 * se


def test_bilevel_oracle_decoupled_is_exact():
    # coupling 0: the phi branch contributes nothing, estimate = grad_theta f
    bp = scalar_bilevel_toy(coupling=0.0)
    theta = np.array([0.7])
    s = bilevel_oracle(bp, theta, np.array([0.3]), 8, np.random.default_rng(0))
    assert np.array_equal(s.estimate, theta)
    assert np.array_equal(s.true_gradient, bp.hypergradient(theta))
    assert 1 <= s.inner_samples <= 8


def test_scalar_toy_optimum():
    bp = scalar_bilevel_toy(a=2.0, neumann_scale=10.0, coupling=1.5, f_slope=0.5)
    ratio = 0.5 * 1.5 / 2.0
    assert bp.hypergradient(np.array([-ratio]))[0] == pytest.approx(0.0, abs=1e-15)
    assert bp.value(np.array([-ratio])) == pytest.approx(bp.optimum_value, rel=1e-15)


def test_inner_sgd_contracts():
    bp = bilevel_quadratic_toy(seed=0)  # noiseless inner gradient
    theta = np.array([0.5, -0.2, 1.0])
    target = bp.phi_star(theta)
    phi0 = np.ones(bp.dim_inner)
    eta = 0.3
    phi = inner_sgd(bp, theta, phi0, 12, PowerSchedule(eta, 0.0), np.random.default_rng(0))
    # identity inner Hessian: error contracts by exactly (1 - eta) per step
    expected = (1 - eta) ** 12 * np.linalg.norm(phi0 - target)
    assert np.linalg.norm(phi - target) == pytest.approx(expected, rel=1e-10)


def test_inner_sgd_zero_steps_copies():
    bp = bilevel_quadratic_toy(seed=0)
    phi0 = np.ones(bp.dim_inner)
    out = inner_sgd(bp, np.zeros(bp.dim_outer), phi0, 0, PowerSchedule(0.1, 0.0), np.random.default_rng(0))
    assert np.array_equal(out, phi0)
    assert out is not phi0
    with pytest.raises(ValueError):
        inner_sgd(bp, np.zeros(bp.dim_outer), phi0, -1, PowerSchedule(0.1, 0.0), np.random.default_rng(0))


def test_inner_sgd_uses_schedule_per_step():
    bp = bilevel_quadratic_toy(seed=0)
    theta = np.zeros(bp.dim_outer)
    phi0 = np.array([1.0, 2.0, 3.0])
    sched = PowerSchedule(0.5, 1.0)  # eta_k = 0.5/k
    out = inner_sgd(bp, theta, phi0, 3, sched, np.random.default_rng(0))
    phi = phi0.copy()
    for k in (1, 2, 3):
        phi = phi - (0.5 / k) * (phi - bp.phi_star(theta))
    np.testing.assert_allclose(out, phi, rtol=1e-15)


def test_noisy_oracles_average_out():
    bp = bilevel_quadratic_toy(seed=1, noise_outer=0.5, noise_inner=0.5)
    rng = np.random.default_rng(6)
    theta = np.array([0.2, -0.4, 0.6])
    phi = bp.phi_star(theta)
    gts = np.array([bp.grad_outer(theta, phi, rng)[0] for _ in range(8000)])
    exact = bp.mean_grad_outer(theta, phi)[0]
    se = gts.std(axis=0, ddof=1) / np.sqrt(gts.shape[0])
    assert np.all(np.abs(gts.mean(axis=0) - exact) <= 4 * se)
