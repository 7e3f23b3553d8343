"""Structure-aware alignment with inflection points and jump edges.

Inflection points alternate between the end of a synchronous subpath
(odd ordinal, 1-based) and the start of the next one (even ordinal). For
each pair, the end cell (a_{i-1}, b_{i-1}) becomes an extra predecessor
of the cells in the window [(a_i - w, b_i - w), (a_i + w, b_i + w)]
(w = 5, inclusive, clipped to the matrix). Because a returned path must
stay monotone in the performance axis and visit every performance frame,
a jump edge lands on performance frame a_{i-1} + 1 only; the window then
selects which score frames it may land on. Jump edges are free: only the
landing cell's cost is paid.

Synthetic structural differences are produced by splitting and joining a
feature sequence (the unperturbed performance, aligned to the score) at
frame level.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .dtw import BRUTE_FORCE_LIMIT, AlignmentPath, _align, _as_cost, dtw_brute_force
from .errors import InputError
from .evaluation import GroundTruthMap
from .features.sequence import FeatureSequence

JUMP_WINDOW = 5
JUMP_BRUTE_FORCE_LIMIT = 14
MIN_SEGMENT = 10
MAX_JUMPS = 4


@dataclass(frozen=True, eq=False)
class InflectionPointSet:
    """Ordered (perf_frame, score_frame) points, strictly increasing in perf_frame."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        if np.any(pts < 0):
            raise InputError("inflection coordinates must be non-negative")
        if len(pts) > 1 and np.any(np.diff(pts[:, 0]) <= 0):
            raise InputError("inflection performance frames must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def pairs(self):
        """(end, start) point pairs, one per jump."""
        return [(tuple(self.points[i - 1]), tuple(self.points[i])) for i in range(1, len(self.points), 2)]

    def to_json(self) -> dict:
        return {"points": self.points.tolist()}

    @classmethod
    def from_json(cls, doc) -> "InflectionPointSet":
        if not isinstance(doc, dict) or "points" not in doc:
            raise InputError('inflection JSON must be an object with a "points" list')
        return cls(np.array(doc["points"], dtype=np.int64).reshape(-1, 2))


def load_inflections_json(path) -> InflectionPointSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg})") from None
    return InflectionPointSet.from_json(doc)


def _jump_tables(infl: InflectionPointSet, shape, window: int):
    p, q = shape
    if len(infl) % 2:
        raise InputError(f"inflection point count must be even, got {len(infl)}")
    if len(infl) and (infl.points[:, 0].max() >= p or infl.points[:, 1].max() >= q):
        raise InputError(f"inflection points out of bounds for a {p}x{q} matrix")
    src_row, src_col, land_row, land_lo, land_hi = [], [], [], [], []
    for (a0, b0), (a1, b1) in infl.pairs():
        row = a0 + 1
        usable = row < p and a1 - window <= row <= a1 + window
        src_row.append(a0)
        src_col.append(b0)
        land_row.append(row)
        land_lo.append(max(0, b1 - window) if usable else 1)
        land_hi.append(min(q - 1, b1 + window) if usable else 0)
    as_arr = lambda v: np.array(v, dtype=np.int64)
    return tuple(map(as_arr, (src_row, src_col, land_row, land_lo, land_hi)))


def jump_dtw_align(sim, infl: InflectionPointSet, window: int = JUMP_WINDOW) -> AlignmentPath:
    """DTW whose recurrence also admits the inflection-pair jump predecessors.

    On ties the unit steps win over jumps, so a jump that saves nothing
    leaves the classic path untouched. A pair can fire at most once on any
    path because its landing frame follows its source frame.
    """
    cost = _as_cost(sim)
    return _align(cost, *_jump_tables(infl, cost.shape, window))


def jump_dtw_brute_force(sim, infl: InflectionPointSet, window: int = JUMP_WINDOW) -> AlignmentPath:
    """Enumerate monotone paths with optional single-use jump edges (p+q <= 14, N <= 2)."""
    cost = _as_cost(sim)
    p, q = cost.shape
    if p + q > JUMP_BRUTE_FORCE_LIMIT or len(infl) > 2:
        raise InputError("instance exceeds the enumeration bound (p+q <= 14, at most 2 points)")
    if len(infl) % 2:
        raise InputError("inflection point count must be even")
    if len(infl) == 0:
        return dtw_brute_force(cost)
    (a0, b0), (a1, b1) = (tuple(map(int, pt)) for pt in infl.points)
    if max(a0, a1) >= p or max(b0, b1) >= q:
        raise InputError("inflection points out of bounds")
    landings = [(a0 + 1, n) for n in range(q)
                if a0 + 1 < p and abs(a0 + 1 - a1) <= window and abs(n - b1) <= window]
    c = cost.tolist()
    best = [np.inf, None]
    path = [(0, 0)]

    def walk(m, n, total, used):
        if m == p - 1 and n == q - 1:
            if total < best[0]:
                best[0], best[1] = total, list(path)
            return
        moves = [(m + 1, n + 1), (m, n + 1), (m + 1, n)]
        if not used and (m, n) == (a0, b0):
            moves += [(cell, True) for cell in landings]
        for move in moves:
            (i, j), jumped = (move if isinstance(move[1], bool) else (move, False))
            if i < p and j < q:
                path.append((i, j))
                walk(i, j, total + c[i][j], used or jumped)
                path.pop()

    walk(0, 0, c[0][0], False)
    return AlignmentPath(best[1], best[0])


@dataclass(frozen=True)
class SpliceOp:
    """One split-join junction, in source-sequence frame indices.

    Playback leaves the source just before ``perf_split_frame`` (the last
    frame played is ``perf_split_frame - 1``) and resumes at
    ``score_target_frame``.
    """

    kind: str
    perf_split_frame: int
    score_target_frame: int

    def __post_init__(self):
        reached = self.perf_split_frame - 1
        if self.kind == "backward_jump":
            ok = self.score_target_frame < reached
        elif self.kind == "forward_jump":
            ok = self.score_target_frame > reached + 1
        else:
            raise InputError(f"unknown splice kind {self.kind!r}")
        if not ok or min(self.perf_split_frame, self.score_target_frame) < 0:
            raise InputError(f"inconsistent splice {self}")

    def to_json(self) -> dict:
        return {"kind": self.kind, "perf_split_frame": self.perf_split_frame,
                "score_target_frame": self.score_target_frame}


def _segments(splices, total=None):
    """Source-frame segments [start, end) played in order; the last is open-ended."""
    starts = [0] + [s.score_target_frame for s in splices]
    ends = [s.perf_split_frame for s in splices] + [np.inf if total is None else total]
    for k, (lo, hi) in enumerate(zip(starts, ends)):
        if hi <= lo:
            raise InputError(f"overlapping splices: segment {k} would be [{lo}, {hi})")
    return list(zip(starts, ends))


def extrapolate_ground_truth(gt: GroundTruthMap, splices, hop_seconds: float) -> GroundTruthMap:
    """Carry annotations through the split-join edits.

    Events inside a repeated span appear once per repetition at shifted
    performance times; events inside a skipped span are dropped.
    """
    segments = _segments(list(splices))
    pos = gt.perf_times / hop_seconds
    out = []
    offset = 0.0
    for lo, hi in segments:
        inside = (pos >= lo - 1e-9) & (pos < hi - 1e-9)
        for f, score_t in zip(pos[inside], gt.score_times[inside]):
            out.append(((offset + f - lo) * hop_seconds, score_t))
        if np.isfinite(hi):
            offset += hi - lo
    if not out:
        raise InputError("no ground-truth events survive the splices")
    return GroundTruthMap(out)


class PerturbResult(NamedTuple):
    features: FeatureSequence
    ground_truth: GroundTruthMap
    inflections: InflectionPointSet
    splices: tuple
    frame_map: np.ndarray  # perturbed frame -> source frame


def splice_frame_map(splices, total: int) -> np.ndarray:
    return np.concatenate([np.arange(lo, hi) for lo, hi in _segments(list(splices), total)])


def _draw_splices(total: int, n_jumps: int, rng: np.random.Generator):
    """One junction per block of the source; every played segment stays >= MIN_SEGMENT frames."""
    bounds = [total * k // n_jumps for k in range(n_jumps + 1)]
    splices = []
    for k in range(n_jumps):
        lo, hi = bounds[k], bounds[k + 1]
        last = k == n_jumps - 1
        resume_max = hi - MIN_SEGMENT if last else hi
        kind = "forward_jump" if rng.random() < 0.5 else "backward_jump"
        if kind == "forward_jump" and resume_max - lo < 2 * MIN_SEGMENT:
            kind = "backward_jump"
        if kind == "forward_jump":
            split = int(rng.integers(lo + MIN_SEGMENT, resume_max - MIN_SEGMENT + 1))
            target = int(rng.integers(split + MIN_SEGMENT, resume_max + 1))
        else:
            split = int(rng.integers(lo + MIN_SEGMENT, hi + 1))
            target = int(rng.integers(0, split - MIN_SEGMENT + 1))
        splices.append(SpliceOp(kind, split, target))
    return splices


def synth_perturb(seq: FeatureSequence, gt: GroundTruthMap | None = None, n_jumps: int = 1,
                  seed: int = 0, splices=None) -> PerturbResult:
    """Split and join ``seq`` at random frame positions to create structural jumps.

    ``gt`` aligns ``seq`` to the score (identity when omitted). Returns the
    perturbed features, the extrapolated ground truth, the exact inflection
    points (two per jump) and the splice log. Passing ``splices`` bypasses
    the random draw.
    """
    total = seq.frames
    if gt is None:
        gt = GroundTruthMap.identity(total, seq.hop_seconds)
    if splices is None:
        if not 1 <= n_jumps <= MAX_JUMPS:
            raise InputError(f"n_jumps must be in [1, {MAX_JUMPS}], got {n_jumps}")
        if total < 2 * MIN_SEGMENT * n_jumps:
            raise InputError(f"sequence of {total} frames is too short for {n_jumps} jumps "
                             f"(needs {2 * MIN_SEGMENT * n_jumps})")
        splices = _draw_splices(total, n_jumps, np.random.default_rng(seed))
    splices = tuple(splices)
    segments = _segments(splices, total)
    frame_map = splice_frame_map(splices, total)
    new_gt = extrapolate_ground_truth(gt, splices, seq.hop_seconds)

    hop = seq.hop_seconds
    score_frame = lambda f: int(np.rint(gt.score_time_at(f * hop) / hop))
    points = []
    offset = 0
    for (lo, hi), (nlo, _) in zip(segments[:-1], segments[1:]):
        offset += hi - lo
        points.append((offset - 1, score_frame(hi - 1)))
        points.append((offset, score_frame(nlo)))
    perturbed = FeatureSequence(seq.data[frame_map], hop, seq.origin)
    return PerturbResult(perturbed, new_gt, InflectionPointSet(points), splices, frame_map)


def splice_log(result: PerturbResult, n_jumps: int, seed: int) -> dict:
    return {
        "seed": seed,
        "n_jumps": n_jumps,
        "splices": [s.to_json() for s in result.splices],
        "output_frames": int(result.features.frames),
    }
