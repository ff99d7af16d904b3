import numpy as np
import pytest

from adasa.problems import (
    default_logistic,
    default_quadratic,
    finite_difference_gradient,
    logistic_problem,
    quadratic_problem,
    verify_assumptions,
)


def test_quadratic_frozen():
    # A = diag(1, 2): Q = diag(1, 4), V(1,1) = 2.5, grad = (1, 4), L = 4, mu = 1
    p = quadratic_problem(np.diag([1.0, 2.0]))
    theta = np.array([1.0, 1.0])
    assert p.value(theta) == 2.5
    assert np.array_equal(p.gradient(theta), [1.0, 4.0])
    assert p.smoothness == 4.0
    assert p.pl_constant == 1.0
    assert p.optimum_value == 0.0
    assert np.array_equal(p.theta_star, [0.0, 0.0])


def test_quadratic_validation():
    with pytest.raises(ValueError):
        quadratic_problem(np.ones((2, 3)))


def test_default_quadratic_spectrum():
    p = default_quadratic(dim=10, seed=0)
    # singular values linspace(0.5, 1.5) through orthogonal factors, so
    # L = 1.5^2 and mu = 0.5^2 up to factorization roundoff
    assert p.smoothness == pytest.approx(2.25, abs=1e-10)
    assert p.pl_constant == pytest.approx(0.25, abs=1e-10)
    assert p.dim == 10
    # reproducible: same seed, same instance
    q = default_quadratic(dim=10, seed=0)
    assert np.array_equal(p.quad_matrix, q.quad_matrix)
    assert not np.array_equal(p.quad_matrix, default_quadratic(dim=10, seed=1).quad_matrix)


def test_value_batch_matches_value():
    rng = np.random.default_rng(1)
    for p in (default_quadratic(6, 2), default_logistic()):
        thetas = rng.standard_normal((20, p.dim))
        batch = p.value_batch(thetas)
        single = np.array([p.value(t) for t in thetas])
        np.testing.assert_allclose(batch, single, rtol=1e-12)


def test_logistic_frozen():
    # one sample x=1, y=+1: V(0) = log 2, grad(0) = -sigma(0) = -1/2
    p = logistic_problem(np.array([[1.0]]), np.array([1.0]), ridge=0.1)
    assert p.value(np.zeros(1)) == pytest.approx(np.log(2.0), rel=1e-15)
    assert p.gradient(np.zeros(1))[0] == -0.5
    # L = x^2/4 + ridge = 0.35
    assert p.smoothness == pytest.approx(0.35, rel=1e-12)


def test_logistic_validation():
    with pytest.raises(ValueError):
        logistic_problem(np.ones((3, 2)), np.ones(2))
    with pytest.raises(ValueError):
        logistic_problem(np.ones((3, 2)), np.array([1.0, 0.0, 1.0]))


def test_logistic_optimum_is_stationary():
    p = default_logistic()
    g = p.gradient(p.theta_star)
    assert float(np.max(np.abs(g))) < 1e-12
    # optimum is a lower bound nearby
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert p.value(p.theta_star + 0.1 * rng.standard_normal(p.dim)) >= p.optimum_value


def test_finite_difference_agrees():
    rng = np.random.default_rng(4)
    for p in (default_quadratic(5, 0), default_logistic()):
        for _ in range(10):
            theta = rng.standard_normal(p.dim)
            fd = finite_difference_gradient(p, theta, h=1e-6)
            g = p.gradient(theta)
            assert np.linalg.norm(fd - g) <= 1e-5 * max(np.linalg.norm(g), 1e-12)


def test_finite_difference_validation():
    with pytest.raises(ValueError):
        finite_difference_gradient(default_quadratic(3, 0), np.zeros(3), h=0.0)


def test_verify_assumptions_passes_shipped():
    for p in (default_quadratic(10, 0), default_logistic()):
        report = verify_assumptions(p, probes=300)
        assert report.passed, report.violations
        assert report.lipschitz_ok
        assert report.grad_bound_ok
        lines = report.lines()
        assert lines[-1].endswith("PASS")


def test_verify_assumptions_flags_understated_smoothness():
    p = default_quadratic(5, 0)
    p.smoothness *= 0.25  # claim less curvature than the instance has
    report = verify_assumptions(p, probes=300)
    assert not report.passed
    assert not report.lipschitz_ok
    assert any("Lipschitz" in v for v in report.violations)
    assert report.lines()[-1].endswith("FAIL")


def test_verify_assumptions_flags_understated_grad_bound():
    p = default_quadratic(5, 0)
    p.grad_bound = 1e-3
    report = verify_assumptions(p, probes=100)
    assert not report.passed
    assert not report.grad_bound_ok


def test_verify_assumptions_flags_bogus_pl_constant():
    p = default_logistic()
    # unregularized-logistic-style claim that cannot hold on the ball
    p.pl_constant = 1e6
    report = verify_assumptions(p, probes=200)
    assert report.pl_ok is False
    assert not report.passed


def test_verify_assumptions_validation():
    with pytest.raises(ValueError):
        verify_assumptions(default_quadratic(3, 0), probes=1)


def test_verify_assumptions_seeded_rng():
    p = default_quadratic(4, 0)
    r1 = verify_assumptions(p, probes=100, rng=np.random.default_rng(7))
    r2 = verify_assumptions(p, probes=100, rng=np.random.default_rng(7))
    assert r1.lipschitz_ratio_max == r2.lipschitz_ratio_max
    assert r1.grad_norm_max == r2.grad_norm_max
