"""Alignment accuracy at error margins, inflection-detection accuracy and
the Diebold-Mariano paired significance test."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import InputError

THRESHOLDS_MS = (25, 50, 100, 200)


@dataclass(frozen=True, eq=False)
class GroundTruthMap:
    """Reference (perf_time_s, score_time_s) events, strictly increasing in performance time."""

    events: np.ndarray

    def __post_init__(self):
        ev = np.array(self.events, dtype=np.float64).reshape(-1, 2)
        if not np.all(np.isfinite(ev)):
            raise InputError("ground truth contains non-finite times")
        if ev.shape[0] > 1 and np.any(np.diff(ev[:, 0]) <= 0):
            raise InputError("ground-truth performance times must be strictly increasing")
        ev.setflags(write=False)
        object.__setattr__(self, "events", ev)

    def __len__(self):
        return self.events.shape[0]

    @property
    def perf_times(self) -> np.ndarray:
        return self.events[:, 0]

    @property
    def score_times(self) -> np.ndarray:
        return self.events[:, 1]

    @classmethod
    def identity(cls, frames: int, hop_seconds: float) -> "GroundTruthMap":
        t = np.arange(frames) * hop_seconds
        return cls(np.column_stack([t, t]))

    @classmethod
    def from_frames(cls, perf_frames, score_frames, perf_hop: float, score_hop: float) -> "GroundTruthMap":
        return cls(np.column_stack([np.asarray(perf_frames) * perf_hop, np.asarray(score_frames) * score_hop]))

    def score_time_at(self, perf_time):
        """Score time at a performance time by linear interpolation between events."""
        return np.interp(perf_time, self.perf_times, self.score_times)

    def score_frames(self, perf_hop: float, score_hop: float) -> tuple[np.ndarray, np.ndarray]:
        """(perf_frame, score_frame) integer pairs, rounding times to the nearest frame."""
        return (np.rint(self.perf_times / perf_hop).astype(np.int64),
                np.rint(self.score_times / score_hop).astype(np.int64))


def save_ground_truth_csv(gt: GroundTruthMap, path, comment: str | None = None) -> None:
    lines = [] if not comment else ["# " + c for c in comment.splitlines()]
    lines.append("perf_time_s,score_time_s")
    lines.extend(f"{a!r},{b!r}" for a, b in gt.events.tolist())
    Path(path).write_text("\n".join(lines) + "\n")


def load_ground_truth_csv(path) -> GroundTruthMap:
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not lines or lines[0].replace(" ", "") != "perf_time_s,score_time_s":
        raise InputError(f"{path}: expected header 'perf_time_s,score_time_s'")
    rows = []
    for k, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != 2:
            raise InputError(f"{path}: ragged row {k}")
        try:
            rows.append((float(cells[0]), float(cells[1])))
        except ValueError:
            raise InputError(f"{path}: non-numeric cell in row {k}") from None
    if not rows:
        raise InputError(f"{path}: no ground-truth events")
    return GroundTruthMap(rows)


def alignment_errors(path, gt: GroundTruthMap, perf_hop: float, score_hop: float) -> np.ndarray:
    """Signed errors e_i = estimated - reference score time (seconds), one per event.

    Each event's performance time is located on the path by linear
    interpolation between the score times of consecutive performance frames
    (first pairing per frame).
    """
    from .dtw import path_to_score_indices

    if len(gt) == 0:
        raise InputError("ground truth is empty")
    p = int(path.points[:, 0].max()) + 1
    score_idx = path_to_score_indices(path, p)
    perf_t = np.arange(p) * perf_hop
    tol = 1e-9 * max(1.0, perf_t[-1])
    outside = (gt.perf_times < -tol) | (gt.perf_times > perf_t[-1] + tol)
    if outside.any():
        t = gt.perf_times[np.flatnonzero(outside)[0]]
        raise InputError(f"event at {t} s lies outside the path span [0, {perf_t[-1]}] s")
    estimated = np.interp(gt.perf_times, perf_t, score_idx * score_hop)
    return estimated - gt.score_times


@dataclass(frozen=True)
class AccuracyReport:
    thresholds_ms: tuple
    accuracy_pct: tuple
    n_events: int

    def as_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "accuracy_pct": {f"{t}ms": a for t, a in zip(self.thresholds_ms, self.accuracy_pct)},
        }


def accuracy_at_margins(errors, thresholds_ms=THRESHOLDS_MS) -> AccuracyReport:
    """Percentage of events with |e_i| strictly below each threshold."""
    errors = np.abs(np.asarray(errors, dtype=np.float64))
    if errors.size == 0:
        raise InputError("no alignment errors to score")
    acc = tuple(100.0 * np.count_nonzero(errors < t / 1000.0) / errors.size for t in thresholds_ms)
    return AccuracyReport(tuple(thresholds_ms), acc, int(errors.size))


def aggregate_reports(reports, pooled_errors=None, pool: bool = False) -> AccuracyReport:
    """Mean of per-piece accuracies, or one report over pooled events when ``pool``."""
    if not reports:
        raise InputError("no reports to aggregate")
    if pool:
        if pooled_errors is None:
            raise InputError("pooling needs the per-event errors")
        return accuracy_at_margins(np.concatenate([np.ravel(e) for e in pooled_errors]),
                                   reports[0].thresholds_ms)
    acc = np.mean([r.accuracy_pct for r in reports], axis=0)
    return AccuracyReport(reports[0].thresholds_ms, tuple(float(a) for a in acc),
                          sum(r.n_events for r in reports))


def inflection_accuracy(pred, gt, tol_frames: int = 5) -> float:
    """Greedy in-order one-to-one matching; matched / max(|pred|, |gt|) * 100."""
    if tol_frames < 0:
        raise InputError("tol_frames must be non-negative")
    pred_pts = np.asarray(getattr(pred, "points", pred)).reshape(-1, 2)
    gt_pts = np.asarray(getattr(gt, "points", gt)).reshape(-1, 2)
    denom = max(len(pred_pts), len(gt_pts))
    if denom == 0:
        return 100.0
    used = np.zeros(len(gt_pts), dtype=bool)
    matched = 0
    for a, b in pred_pts:
        for k, (ga, gb) in enumerate(gt_pts):
            if not used[k] and abs(a - ga) <= tol_frames and abs(b - gb) <= tol_frames:
                used[k] = True
                matched += 1
                break
    return 100.0 * matched / denom


@dataclass(frozen=True)
class DMResult:
    statistic: float | None
    p_value: float | None
    n: int
    degenerate: bool = False


def diebold_mariano(errors_a, errors_b, horizon: int = 1) -> DMResult:
    """Diebold-Mariano test on squared-error loss with the Harvey small-sample correction.

    The statistic is positive when ``errors_a`` has the larger loss. The
    two-sided p-value uses a t distribution with n-1 degrees of freedom.
    Zero variance of the loss differential yields a degenerate result.
    """
    a = np.asarray(errors_a, dtype=np.float64)
    b = np.asarray(errors_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError("error sequences must be 1-D and paired (equal length)")
    n = a.size
    if n < 8:
        raise InputError(f"need at least 8 paired errors, got {n}")
    d = a ** 2 - b ** 2
    mean = d.mean()
    h = horizon
    # long-run variance from autocovariances up to lag h-1 (lag 0 only at h=1)
    gamma = [np.sum((d[k:] - mean) * (d[:n - k] - mean)) / n for k in range(h)]
    var = gamma[0] + 2.0 * sum(gamma[1:])
    if not var > 1e-300 * max(1.0, float(np.max(np.abs(d)))):
        return DMResult(None, None, n, degenerate=True)
    dm = mean / np.sqrt(var / n)
    correction = np.sqrt((n + 1 - 2 * h + h * (h - 1) / n) / n)
    stat = float(dm * correction)
    p = float(2.0 * stats.t.sf(abs(stat), df=n - 1))
    return DMResult(stat, p, n)


def write_report_json(path, pieces: dict, aggregate: AccuracyReport, meta: dict) -> None:
    """Per-piece and aggregate accuracy tables with thresholds as columns."""
    doc = {
        **meta,
        "columns": [f"{t}ms" for t in aggregate.thresholds_ms],
        "pieces": {name: list(r.accuracy_pct) for name, r in pieces.items()},
        "n_events": {name: r.n_events for name, r in pieces.items()},
        "aggregate": list(aggregate.accuracy_pct),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
