import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoresync.dtw import dtw_brute_force
from scoresync.errors import InputError
from scoresync.neural.gradcheck import numeric_grad, relative_error
from scoresync.softdtw import (pairwise_cost, soft_dtw, soft_dtw_divergence, soft_dtw_divergence_grad,
                               soft_dtw_grad, soft_min)

seqs = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=8).map(np.array)


def test_soft_min_examples():
    assert soft_min([3.0, 1.0, 2.0], 0) == 1.0
    assert soft_min([0.0], 1.0) == 0.0
    assert soft_min([1.0, 1.0], 1.0) == pytest.approx(1 - np.log(2), abs=1e-12)
    assert np.isfinite(soft_min([1e4, 1e4 + 1], 1e-3))
    with pytest.raises(InputError):
        soft_min([], 1.0)
    with pytest.raises(InputError):
        soft_min([1.0], -0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=6), st.floats(1e-4, 10))
def test_soft_min_lower_bound(values, lam):
    assert soft_min(values, lam) <= min(values) + 1e-12


def test_soft_dtw_examples():
    assert soft_dtw([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0) == 0.0
    assert soft_dtw([0.0, 1.0], [0.0, 2.0], 0) == 1.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.integers(0, 6, 5).astype(float), rng.integers(0, 6, 5).astype(float)
        hard = dtw_brute_force(pairwise_cost(a, b)).total_cost
        assert abs(soft_dtw(a, b, 1e-3) - hard) <= 1e-2
    with pytest.raises(InputError):
        soft_dtw([], [1.0])


@settings(max_examples=60, deadline=None)
@given(seqs, seqs)
def test_hard_limit_matches_oracle(a, b):
    hard = dtw_brute_force(pairwise_cost(a, b)).total_cost
    assert soft_dtw(a, b, 0) == pytest.approx(hard, rel=1e-12, abs=1e-12)
    assert soft_dtw(a, b, 0, metric="abs") == pytest.approx(
        dtw_brute_force(pairwise_cost(a, b, "abs")).total_cost, rel=1e-12, abs=1e-12)


def test_soft_dtw_grad_examples():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    assert np.max(np.abs(soft_dtw_grad(x, x, 1e-3))) <= 1e-6
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b = rng.normal(size=4) * 2, rng.normal(size=4) * 2
        num = numeric_grad(lambda z: soft_dtw(z, b, 0.1), a)
        assert relative_error(soft_dtw_grad(a, b, 0.1), num) < 1e-4
    with pytest.raises(InputError):
        soft_dtw_grad(x, x, 0.0)


def test_divergence_examples():
    y = np.array([0.0, 2.0, 3.0, 5.0])
    assert abs(soft_dtw_divergence(y, y, 0.1)) <= 1e-9
    assert soft_dtw_divergence(y + 0.5, y, 0.1) > 0
    assert soft_dtw_divergence(y, y[::-1], 0.1) == pytest.approx(soft_dtw_divergence(y[::-1], y, 0.1), abs=1e-12)
    assert soft_dtw(y, y, 1.0) < 0  # entropic bias, corrected by the divergence
    assert np.max(np.abs(soft_dtw_divergence_grad(y, y, 0.1))) <= 1e-5


def test_divergence_descent_is_monotone():
    rng = np.random.default_rng(2)
    target = np.cumsum(rng.uniform(0, 2, 5))
    pred = target + rng.normal(0, 0.5, 5)
    values = [soft_dtw_divergence(pred, target, 0.1)]
    for _ in range(50):
        pred = pred - 0.05 * soft_dtw_divergence_grad(pred, target, 0.1)
        values.append(soft_dtw_divergence(pred, target, 0.1))
    assert all(b < a for a, b in zip(values, values[1:]))


@settings(max_examples=100, deadline=None)
@given(st.integers(3, 8), st.integers(3, 8), st.sampled_from([0.05, 0.1, 0.5]), st.integers(0, 2 ** 31))
def test_gradients_match_finite_differences(n, m, lam, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n) * 2, rng.normal(size=m) * 2
    num = numeric_grad(lambda z: soft_dtw(z, b, lam), a)
    assert relative_error(soft_dtw_grad(a, b, lam), num) < 1e-4
    num = numeric_grad(lambda z: soft_dtw_divergence(z, b, lam), a)
    assert relative_error(soft_dtw_divergence_grad(a, b, lam), num) < 1e-4


@settings(max_examples=100, deadline=None)
@given(seqs, seqs, st.sampled_from([0.01, 0.1, 1.0]))
def test_divergence_axioms(a, b, lam):
    assert soft_dtw_divergence(a, b, lam) >= -1e-9
    assert soft_dtw_divergence(a, a, lam) <= 1e-9
    assert soft_dtw_divergence(a, b, lam) == pytest.approx(soft_dtw_divergence(b, a, lam), abs=1e-9)
