import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from scoresync.dtw import AlignmentPath
from scoresync.errors import InputError
from scoresync.evaluation import (GroundTruthMap, accuracy_at_margins, aggregate_reports, alignment_errors,
                                  diebold_mariano, inflection_accuracy, load_ground_truth_csv,
                                  save_ground_truth_csv, write_report_json)
from scoresync.structure import InflectionPointSet

HOP = 0.05


def diagonal(n):
    return AlignmentPath([(i, i) for i in range(n)], 0.0)


def test_accuracy_hand_count():
    rep = accuracy_at_margins([0.03, 0.07, 0.15, 0.30])
    assert rep.accuracy_pct == (0.0, 25.0, 50.0, 75.0)
    assert rep.thresholds_ms == (25, 50, 100, 200) and rep.n_events == 4
    assert accuracy_at_margins(np.zeros(7)).accuracy_pct == (100.0,) * 4


def test_strict_threshold():
    assert accuracy_at_margins([0.05]).accuracy_pct == (0.0, 0.0, 100.0, 100.0)
    assert accuracy_at_margins([-0.02]).accuracy_pct == (100.0,) * 4
    with pytest.raises(InputError):
        accuracy_at_margins([])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=40))
def test_accuracy_monotone(errors):
    acc = accuracy_at_margins(errors).accuracy_pct
    assert all(0 <= a <= 100 for a in acc)
    assert list(acc) == sorted(acc)


def test_alignment_errors_exact_and_offset():
    gt = GroundTruthMap.identity(20, HOP)
    assert np.all(alignment_errors(diagonal(20), gt, HOP, HOP) == 0)
    shifted = AlignmentPath([(i, i + 2) for i in range(20)], 0.0)
    np.testing.assert_allclose(np.abs(alignment_errors(shifted, gt, HOP, HOP)), 0.1, atol=1e-12)


def test_alignment_errors_endpoints_and_span():
    gt = GroundTruthMap([(0.0, 0.0), (0.95, 0.95)])
    assert len(alignment_errors(diagonal(20), gt, HOP, HOP)) == 2
    with pytest.raises(InputError):
        alignment_errors(diagonal(20), GroundTruthMap([(0.0, 0.0), (1.5, 1.5)]), HOP, HOP)


def test_alignment_errors_interpolate_between_frames():
    gt = GroundTruthMap([(0.025, 0.05)])
    # perf frame 0 -> score 0, frame 1 -> score 2; halfway gives score frame 1
    path = AlignmentPath([(0, 0), (1, 2)], 0.0)
    assert alignment_errors(path, gt, HOP, HOP)[0] == pytest.approx(0.0, abs=1e-12)


def test_ground_truth_csv(tmp_path):
    gt = GroundTruthMap([(0.0, 0.1), (0.5, 0.7)])
    save_ground_truth_csv(gt, tmp_path / "g.csv", comment="provenance")
    np.testing.assert_array_equal(load_ground_truth_csv(tmp_path / "g.csv").events, gt.events)
    (tmp_path / "b.csv").write_text("perf_time_s,score_time_s\n0.5,0\n0.2,1\n")
    with pytest.raises(InputError):
        load_ground_truth_csv(tmp_path / "b.csv")


def test_aggregate_per_piece_and_pooled():
    a, b = np.zeros(1), np.array([0.3, 0.3, 0.3])
    ra, rb = accuracy_at_margins(a), accuracy_at_margins(b)
    assert aggregate_reports([ra, rb]).accuracy_pct == (50.0,) * 4
    assert aggregate_reports([ra, rb], [a, b], pool=True).accuracy_pct == (25.0,) * 4


def test_inflection_accuracy():
    gt = InflectionPointSet([(10, 10), (11, 40)])
    assert inflection_accuracy(gt, gt) == 100.0
    assert inflection_accuracy(InflectionPointSet(np.zeros((0, 2))), gt) == 0.0
    assert inflection_accuracy(InflectionPointSet([(12, 9), (30, 5)]), gt) == 50.0
    assert inflection_accuracy(InflectionPointSet([(12, 9), (30, 5)]), gt, tol_frames=1) == 0.0


def _dm_reference(a, b):
    d = a ** 2 - b ** 2
    n = len(d)
    dm = d.mean() / np.sqrt(np.var(d) / n)
    stat = dm * np.sqrt((n + 1 - 2 + 0) / n)
    return stat, 2 * stats.t.sf(abs(stat), n - 1)


def test_diebold_mariano_matches_reference():
    rng = np.random.default_rng(3)
    a, b = rng.normal(0, 1.2, 40), rng.normal(0, 1.0, 40)
    res = diebold_mariano(a, b)
    stat, p = _dm_reference(a, b)
    assert res.statistic == pytest.approx(stat, rel=1e-12)
    assert res.p_value == pytest.approx(p, rel=1e-9)


def test_diebold_mariano_properties():
    rng = np.random.default_rng(4)
    a, b = rng.normal(size=30), rng.normal(size=30)
    assert diebold_mariano(a, b).statistic == pytest.approx(-diebold_mariano(b, a).statistic, rel=1e-12)
    perm = rng.permutation(30)
    assert diebold_mariano(a[perm], b[perm]).statistic == pytest.approx(diebold_mariano(a, b).statistic, rel=1e-12)
    same = diebold_mariano(a, a)
    assert same.degenerate and same.p_value is None
    with pytest.raises(InputError):
        diebold_mariano(a[:5], b[:5])
    with pytest.raises(InputError):
        diebold_mariano(a, b[:10])


def test_diebold_mariano_power():
    # Monte-Carlo: errors of a are twice those of b on every event
    rng = np.random.default_rng(5)
    rejections = 0
    for _ in range(200):
        b = np.abs(rng.normal(0, 0.05, 50))
        rejections += diebold_mariano(2 * b, b).p_value < 0.05
    assert rejections / 200 > 0.95


def test_report_json(tmp_path):
    reps = {"a": accuracy_at_margins([0.0, 0.3]), "b": accuracy_at_margins([0.06])}
    write_report_json(tmp_path / "r.json", reps, aggregate_reports(list(reps.values())), {"seed": 1})
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["columns"] == ["25ms", "50ms", "100ms", "200ms"]
    assert doc["pieces"]["a"] == [50.0, 50.0, 50.0, 50.0] and doc["seed"] == 1
