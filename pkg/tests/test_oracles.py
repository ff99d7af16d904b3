import math

import numpy as np
import pytest
from scipy import stats

from adasa.oracles import (
    BIAS_DIRECTIONS,
    MarkovStream,
    bias_direction_vector,
    markov_oracle,
    synthetic_biased_oracle,
    zeroth_order_oracle,
)
from adasa.problems import default_quadratic, quadratic_problem
from adasa.schedules import PowerSchedule


def test_synthetic_noiseless_unbiased_is_exact():
    p = default_quadratic(5, 0)
    theta = np.array([1.0, -2.0, 0.5, 0.0, 3.0])
    s = synthetic_biased_oracle(p, theta, 1, None, 0.0, np.random.default_rng(0))
    assert np.array_equal(s.estimate, p.gradient(theta))
    assert np.array_equal(s.true_gradient, p.gradient(theta))
    assert np.array_equal(s.bias_target, np.zeros(5))
    assert s.inner_samples == 1


def test_synthetic_planted_bias_exact():
    p = default_quadratic(3, 0)
    theta = np.ones(3)
    sched = PowerSchedule(1.0, 0.5)
    # n=4: magnitude 1/2 along the first axis, exactly
    s = synthetic_biased_oracle(p, theta, 4, sched, 0.0, np.random.default_rng(0))
    assert np.array_equal(s.bias_target, [0.5, 0.0, 0.0])
    assert np.array_equal(s.estimate, p.gradient(theta) + s.bias_target)


def test_synthetic_toward_gradient():
    p = quadratic_problem(np.eye(2))
    theta = np.array([3.0, 4.0])  # gradient (3, 4), norm 5
    s = synthetic_biased_oracle(p, theta, 1, PowerSchedule(1.0, 0.0), 0.0, np.random.default_rng(0), "toward_gradient")
    np.testing.assert_allclose(s.bias_target, [0.6, 0.8], rtol=1e-15)
    # zero gradient: no direction, no bias
    s0 = synthetic_biased_oracle(p, np.zeros(2), 1, PowerSchedule(1.0, 0.0), 0.0, np.random.default_rng(0), "toward_gradient")
    assert np.array_equal(s0.bias_target, [0.0, 0.0])


def test_synthetic_inf_schedule_means_unbiased():
    p = default_quadratic(3, 0)
    s = synthetic_biased_oracle(p, np.ones(3), 1, math.inf, 0.0, np.random.default_rng(0))
    assert np.array_equal(s.estimate, p.gradient(np.ones(3)))


def test_synthetic_noise_mean():
    p = default_quadratic(4, 0)
    theta = np.ones(4)
    rng = np.random.default_rng(11)
    reps = 4000
    ests = np.array([synthetic_biased_oracle(p, theta, 1, None, 1.0, rng).estimate for _ in range(reps)])
    err = ests.mean(axis=0) - p.gradient(theta)
    assert np.all(np.abs(err) < 4.0 / math.sqrt(reps))


def test_synthetic_validation():
    p = default_quadratic(2, 0)
    with pytest.raises(ValueError):
        synthetic_biased_oracle(p, np.ones(2), 1, None, -1.0, np.random.default_rng(0))


def test_bias_direction_vectors():
    u = bias_direction_vector("fixed_axis", 4)
    assert np.array_equal(u, [1.0, 0.0, 0.0, 0.0])
    v = bias_direction_vector("fixed_random_unit", 6, seed=3)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(v, bias_direction_vector("fixed_random_unit", 6, seed=3))
    assert bias_direction_vector("toward_gradient", 4) is None
    with pytest.raises(ValueError):
        bias_direction_vector("sideways", 4)
    assert set(BIAS_DIRECTIONS) == {"fixed_axis", "fixed_random_unit", "toward_gradient"}


def test_zeroth_order_replays_formula():
    p = default_quadratic(3, 0)
    theta = np.array([0.5, -1.0, 2.0])
    tau = 0.01
    s = zeroth_order_oracle(p.value, theta, tau, np.random.default_rng(5))
    x = np.random.default_rng(5).standard_normal(3)
    expected = ((p.value(theta + tau * x) - p.value(theta)) / tau) * x
    assert np.array_equal(s.estimate, expected)


def test_zeroth_order_mean_on_quadratic():
    # Gaussian smoothing leaves quadratics unbiased (odd moments vanish)
    p = default_quadratic(3, 0)
    theta = np.array([1.0, 0.0, -1.0])
    rng = np.random.default_rng(2)
    reps = 20000
    ests = np.array([zeroth_order_oracle(p.value, theta, 0.1, rng).estimate for _ in range(reps)])
    err = ests.mean(axis=0) - p.gradient(theta)
    se = ests.std(axis=0, ddof=1) / math.sqrt(reps)
    assert np.all(np.abs(err) <= 5 * se)


def test_zeroth_order_validation():
    p = default_quadratic(2, 0)
    with pytest.raises(ValueError):
        zeroth_order_oracle(p.value, np.ones(2), 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        zeroth_order_oracle(lambda t: math.inf, np.ones(2), 0.1, np.random.default_rng(0))


def test_markov_stream_basics():
    s = MarkovStream(a=0.5, dim=3)
    assert np.array_equal(s.stationary_mean, np.zeros(3))
    assert s.stationary_var == 1.0
    rng = np.random.default_rng(0)
    x1 = s.advance(rng)
    x2 = s.advance(rng)
    assert s.steps_taken == 2
    assert not np.array_equal(x1, x2)
    with pytest.raises(ValueError):
        MarkovStream(a=1.0, dim=2)
    with pytest.raises(ValueError):
        MarkovStream(a=0.5, dim=2, state=np.zeros(3))


def test_markov_stream_recursion_exact():
    state0 = np.array([2.0, -1.0])
    s = MarkovStream(a=0.25, dim=2, state=state0)
    # the constructor copies: mutating the caller's array must not leak in
    state0[0] = 99.0
    rng = np.random.default_rng(9)
    x = s.advance(rng)
    xi = np.random.default_rng(9).standard_normal(2)
    assert np.array_equal(x, 0.25 * np.array([2.0, -1.0]) + math.sqrt(1 - 0.0625) * xi)


def test_markov_iid_case_is_standard_normal():
    s = MarkovStream(a=0.0, dim=1)
    rng = np.random.default_rng(123)
    draws = np.array([s.advance(rng)[0] for _ in range(4000)])
    assert stats.kstest(draws, "norm").pvalue > 0.01


def test_markov_oracle_window_average():
    # deterministic check: with grad_fn returning the state itself, the
    # estimate is the mean of the next T chain states
    rng = np.random.default_rng(7)
    s = MarkovStream(a=0.5, dim=2, state=np.array([1.0, 1.0]))
    sample = markov_oracle(s, lambda th, x: x, np.zeros(2), 3, rng)
    ref = MarkovStream(a=0.5, dim=2, state=np.array([1.0, 1.0]))
    rng2 = np.random.default_rng(7)
    states = np.array([ref.advance(rng2) for _ in range(3)])
    np.testing.assert_allclose(sample.estimate, states.mean(axis=0), rtol=1e-15)
    assert sample.inner_samples == 3
    assert s.steps_taken == 3


def test_markov_oracle_conditional_bias():
    # from state x0 the window mean has conditional expectation
    # x0 * a (1 - a^T) / (T (1 - a)); T=4, a=0.5, x0=2 gives 0.46875
    a, T, x0 = 0.5, 4, 2.0
    expected = x0 * a * (1 - a**T) / (T * (1 - a))
    rng = np.random.default_rng(31)
    reps = 20000
    vals = np.empty(reps)
    for i in range(reps):
        stream = MarkovStream(a=a, dim=1, state=np.array([x0]))
        vals[i] = markov_oracle(stream, lambda th, x: x, np.zeros(1), T, rng).estimate[0]
    se = vals.std(ddof=1) / math.sqrt(reps)
    assert abs(vals.mean() - expected) <= 4 * se
    assert expected == 0.46875


def test_markov_oracle_validation():
    s = MarkovStream(a=0.5, dim=1)
    with pytest.raises(ValueError):
        markov_oracle(s, lambda th, x: x, np.zeros(1), 0, np.random.default_rng(0))
