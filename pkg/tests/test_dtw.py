import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoresync.dtw import (AlignmentPath, accumulated_cost, dtw_align, dtw_brute_force, path_to_score_indices,
                           read_alignment_csv, write_alignment_csv)
from scoresync.errors import InputError
from scoresync.features import CrossSimilarityMatrix


def cost_of(a, b):
    return np.abs(np.subtract.outer(np.asarray(a, float), np.asarray(b, float)))


def small_matrices(max_sum=16):
    return st.integers(1, 8).flatmap(
        lambda p: st.integers(1, min(8, max_sum - p)).flatmap(
            lambda q: st.integers(0, 2 ** 31).map(lambda s: np.random.default_rng(s).random((p, q)))))


def test_identity_is_diagonal():
    rng = np.random.default_rng(0)
    x = rng.random(6)
    cost = cost_of(x, x)
    path = dtw_align(cost)
    assert path.total_cost == 0.0
    assert [tuple(p) for p in path.points] == [(i, i) for i in range(6)]


def test_hand_example():
    path = dtw_align(cost_of([0, 1, 2], [0, 1, 1, 2]))
    assert [tuple(p) for p in path.points] == [(0, 0), (1, 1), (1, 2), (2, 3)]
    assert path.total_cost == 0.0


def test_single_row():
    cost = np.array([[0.5, 0.25, 1.0, 2.0]])
    path = dtw_align(cost)
    assert [tuple(p) for p in path.points] == [(0, j) for j in range(4)]
    assert path.total_cost == cost.sum()


def test_all_ones_3x3():
    assert dtw_brute_force(np.ones((3, 3))).total_cost == 3.0
    assert dtw_align(np.ones((3, 3))).total_cost == 3.0


def test_accepts_cross_similarity_matrix():
    cost = np.random.default_rng(3).random((4, 5))
    assert dtw_align(CrossSimilarityMatrix(cost)).total_cost == dtw_align(cost).total_cost


def test_errors():
    with pytest.raises(InputError):
        dtw_align(np.zeros((0, 3)))
    with pytest.raises(InputError):
        dtw_align(np.array([[0.0, np.inf]]))
    with pytest.raises(InputError):
        dtw_brute_force(np.zeros((9, 8)))


@settings(max_examples=200, deadline=None)
@given(small_matrices())
def test_matches_brute_force(cost):
    assert dtw_align(cost).total_cost == dtw_brute_force(cost).total_cost


@settings(max_examples=100, deadline=None)
@given(small_matrices(), st.floats(0.1, 10))
def test_path_invariants_and_scaling(cost, lam):
    path = dtw_align(cost)
    p, q = cost.shape
    pts = path.points
    assert tuple(pts[0]) == (0, 0) and tuple(pts[-1]) == (p - 1, q - 1)
    steps = {tuple(s) for s in np.diff(pts, axis=0)}
    assert steps <= {(1, 0), (0, 1), (1, 1)}
    assert max(p, q) <= len(path) <= p + q - 1
    assert path.total_cost == pytest.approx(sum(cost[i, j] for i, j in pts), abs=1e-12)
    scaled = dtw_align(cost * lam)
    assert scaled.total_cost == pytest.approx(lam * path.total_cost, rel=1e-12, abs=1e-12)
    d = accumulated_cost(cost)
    along = [d[i, j] for i, j in pts]
    assert all(b >= a for a, b in zip(along, along[1:]))
    assert d[0, 0] == cost[0, 0] and np.all(d >= cost)


def test_path_to_score_indices():
    diag = AlignmentPath([(0, 0), (1, 1), (2, 2)], 0.0)
    assert path_to_score_indices(diag, 3).tolist() == [0, 1, 2]
    path = AlignmentPath([(0, 0), (1, 1), (1, 2), (2, 3)], 0.0)
    assert path_to_score_indices(path, 3).tolist() == [0, 1, 3]
    row = AlignmentPath([(0, j) for j in range(4)], 0.0)
    assert path_to_score_indices(row, 1).tolist() == [0]
    with pytest.raises(InputError):
        path_to_score_indices(AlignmentPath([(0, 0), (2, 2)], 0.0), 3)


def test_alignment_csv_round_trip(tmp_path):
    path = dtw_align(cost_of([0, 1, 2], [0, 1, 1, 2]))
    write_alignment_csv(tmp_path / "a.csv", path, 0.02, 0.05, comment="x")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[1] == "perf_frame,score_frame,perf_time_s,score_time_s"
    back, ph, sh = read_alignment_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(back.points, path.points)
    assert ph == pytest.approx(0.02) and sh == pytest.approx(0.05)
