import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adasa.preconditioners import (
    DiagonalMatrix,
    PreconditionerState,
    bracket_bounds,
    clip_spectral,
    coordinate_select,
    spectral_bounds,
    update_adagrad,
    update_amsgrad,
    update_rmsprop,
)


def test_diagonal_matrix_basics():
    a = DiagonalMatrix([2.0, 0.5, 1.0])
    assert a.norm() == 2.0
    assert a.lambda_min() == 0.5
    assert spectral_bounds(a) == (0.5, 2.0)
    assert np.array_equal(a.apply(np.array([1.0, 2.0, 3.0])), [2.0, 1.0, 3.0])


@pytest.mark.parametrize("entries", [[[1.0]], [-1.0, 2.0], [math.nan], [math.inf]])
def test_diagonal_matrix_validation(entries):
    with pytest.raises(ValueError):
        DiagonalMatrix(entries)


def test_adagrad_frozen():
    # one gradient (3, 4), delta=0: accum = (9, 16), A = (1/3, 1/4) exactly
    st_ = PreconditionerState(kind="adagrad", dim=2, delta=0.0)
    a = update_adagrad(st_, np.array([3.0, 4.0]))
    assert np.array_equal(a.entries, [1.0 / 3.0, 0.25])
    # same gradient again: the running mean does not move
    a = update_adagrad(st_, np.array([3.0, 4.0]))
    assert np.array_equal(a.entries, [1.0 / 3.0, 0.25])
    assert st_.count == 2


def test_adagrad_delta_frozen():
    # delta=1, gradient (1, 0): A = (1/sqrt(2), 1)
    st_ = PreconditionerState(kind="adagrad", dim=2, delta=1.0)
    a = update_adagrad(st_, np.array([1.0, 0.0]))
    assert np.array_equal(a.entries, [1.0 / math.sqrt(2.0), 1.0])


def test_rmsprop_frozen():
    # rho=0.5, grads 2 then 4: V1 = 0.5*4 = 2, V2 = 0.5*2 + 0.5*16 = 9
    st_ = PreconditionerState(kind="rmsprop", dim=1, delta=0.0, rho=0.5)
    a1 = update_rmsprop(st_, np.array([2.0]))
    assert a1.entries[0] == 1.0 / math.sqrt(2.0)
    a2 = update_rmsprop(st_, np.array([4.0]))
    assert a2.entries[0] == pytest.approx(1.0 / 3.0, rel=1e-15)
    assert st_.accum[0] == pytest.approx(9.0, rel=1e-15)


def test_amsgrad_max_never_grows():
    # rho2=0.5, grads 4 then 2: EMA drops from 8 to 6 but vhat holds at 8
    st_ = PreconditionerState(kind="amsgrad", dim=1, delta=0.05, rho2=0.5)
    a1 = update_amsgrad(st_, np.array([4.0]))
    a2 = update_amsgrad(st_, np.array([2.0]))
    assert st_.vhat[0] == 8.0
    assert st_.accum[0] == pytest.approx(6.0, rel=1e-15)
    assert np.array_equal(a1.entries, a2.entries)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.floats(-10, 10), min_size=3, max_size=3), min_size=1, max_size=20))
def test_amsgrad_monotone_property(grads):
    st_ = PreconditionerState(kind="amsgrad", dim=3, delta=0.05)
    prev = np.inf
    for g in grads:
        a = update_amsgrad(st_, np.array(g))
        assert a.lambda_max() <= prev
        prev = a.lambda_max()


@settings(max_examples=60, deadline=None)
@given(
    kind=st.sampled_from(["adagrad", "rmsprop", "amsgrad"]),
    grads=st.lists(st.lists(st.floats(-5, 5), min_size=2, max_size=2), min_size=1, max_size=25),
    delta=st.floats(1e-3, 1.0),
)
def test_spectral_bracket_property(kind, grads, delta):
    # every eigenvalue stays inside ((delta + M^2)^-1/2, delta^-1/2) with M the
    # sup-norm bound over everything seen; the comparison is exact, not approx
    st_ = PreconditionerState(kind=kind, dim=2, delta=delta)
    update = {"adagrad": update_adagrad, "rmsprop": update_rmsprop, "amsgrad": update_amsgrad}[kind]
    m = 0.0
    for g in grads:
        g = np.array(g)
        m = max(m, float(np.max(np.abs(g))))
        a = update(st_, g)
        lo, hi = bracket_bounds(delta, m)
        assert a.lambda_max() <= hi
        assert a.lambda_min() >= lo


def test_bad_gradient_leaves_state_untouched():
    st_ = PreconditionerState(kind="adagrad", dim=2)
    update_adagrad(st_, np.array([1.0, 2.0]))
    accum = st_.accum.copy()
    with pytest.raises(ValueError):
        update_adagrad(st_, np.array([1.0, math.nan]))
    with pytest.raises(ValueError):
        update_adagrad(st_, np.array([1.0, 2.0, 3.0]))
    assert np.array_equal(st_.accum, accum)
    assert st_.count == 1


def test_clip_frozen():
    a = DiagonalMatrix([2.0, 1.0])
    c = clip_spectral(a, 1.0)
    assert np.array_equal(c.entries, [1.0, 0.5])


def test_clip_noop_below_bound():
    a = DiagonalMatrix([0.3, 0.7])
    assert clip_spectral(a, 1.0) is a


def test_clip_validation():
    with pytest.raises(ValueError):
        clip_spectral(DiagonalMatrix([1.0]), 0.0)


@settings(max_examples=100, deadline=None)
@given(
    entries=st.lists(st.floats(1e-8, 1e8), min_size=1, max_size=6),
    bound=st.floats(1e-8, 1e8),
)
def test_clip_exact_and_idempotent(entries, bound):
    a = DiagonalMatrix(entries)
    c = clip_spectral(a, bound)
    # the bound holds exactly (entrywise cap), and clipping twice is bitwise
    # the same as clipping once
    assert c.norm() <= bound
    assert np.array_equal(clip_spectral(c, bound).entries, c.entries)


def test_bracket_bounds_validation():
    with pytest.raises(ValueError):
        bracket_bounds(0.0, 1.0)


def test_state_validation():
    with pytest.raises(ValueError):
        PreconditionerState(kind="adam", dim=2)
    with pytest.raises(ValueError):
        PreconditionerState(kind="adagrad", dim=0)
    with pytest.raises(ValueError):
        PreconditionerState(kind="adagrad", dim=2, delta=-0.1)
    with pytest.raises(ValueError):
        PreconditionerState(kind="rmsprop", dim=2, rho=1.0)
    with pytest.raises(ValueError):
        PreconditionerState(kind="coordinate", dim=2, coord_weights=np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        PreconditionerState(kind="coordinate", dim=2, coord_rule="argmax")


def test_gauss_southwell_rule():
    st_ = PreconditionerState(kind="coordinate", dim=3)
    idx, mask = coordinate_select(st_, np.array([1.0, -3.0, 3.0]))
    assert idx == 1  # ties by magnitude resolve to the lowest index
    assert np.array_equal(mask.entries, [0.0, 1.0, 0.0])
    idx, _ = coordinate_select(st_, np.zeros(3))
    assert idx == 0


def test_randomized_rules():
    st_ = PreconditionerState(kind="coordinate", dim=3, coord_weights=np.array([0.2, 0.3, 0.5]))
    rng = np.random.default_rng(0)
    counts = np.zeros(3)
    for _ in range(3000):
        idx, mask = coordinate_select(st_, np.ones(3), rule="weighted", rng=rng)
        assert mask.entries.sum() == 1.0
        counts[idx] += 1
    assert np.all(np.abs(counts / 3000 - [0.2, 0.3, 0.5]) < 0.05)
    with pytest.raises(ValueError):
        coordinate_select(st_, np.ones(3), rule="uniform")
    with pytest.raises(ValueError):
        coordinate_select(PreconditionerState(kind="coordinate", dim=3), np.ones(3), rule="weighted", rng=rng)
