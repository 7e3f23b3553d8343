"""Classic dynamic time warping over a cross-similarity matrix.

The accumulated cost is

    D(m, n) = e(m, n) + min(D(m-1, n-1), D(m, n-1), D(m-1, n))

with D(0, 0) = e(0, 0), unit step weights and no band. Ties are broken in
the order diagonal, score-advance, performance-advance, so paths are
deterministic. The fill is sequential so every D value is the sum of the
path's cells in path order, which makes it bit-comparable to enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import InputError
from .features.sequence import CrossSimilarityMatrix

DIAG, SCORE_STEP, PERF_STEP = 0, 1, 2
BRUTE_FORCE_LIMIT = 16


@dataclass(frozen=True, eq=False)
class AlignmentPath:
    """Ordered (perf_frame, score_frame) pairs plus the summed cell cost.

    ``jumps`` holds the indices k for which points[k] was reached from
    points[k-1] through a structural jump edge rather than a unit step.
    """

    points: np.ndarray
    total_cost: float
    jumps: tuple = field(default=())

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 2)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "total_cost", float(self.total_cost))
        object.__setattr__(self, "jumps", tuple(int(j) for j in self.jumps))

    def __len__(self):
        return len(self.points)

    def cells(self) -> list[tuple[int, int]]:
        return [tuple(map(int, p)) for p in self.points]


def _as_cost(sim) -> np.ndarray:
    if isinstance(sim, CrossSimilarityMatrix):
        return sim.cost
    cost = np.asarray(sim, dtype=np.float64)
    if cost.ndim != 2 or cost.size == 0:
        raise InputError(f"cost matrix must be non-empty 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InputError("cost matrix contains non-finite cells")
    return cost


@numba.njit(cache=True)
def _fill(cost, src_row, src_col, land_row, land_lo, land_hi):
    p, q = cost.shape
    acc = np.empty((p, q))
    step = np.full((p, q), -1, dtype=np.int64)
    acc[0, 0] = cost[0, 0]
    n_jumps = src_row.shape[0]
    for m in range(p):
        for n in range(q):
            if m == 0 and n == 0:
                continue
            best = np.inf
            code = -1
            if m > 0 and n > 0:
                best = acc[m - 1, n - 1]
                code = 0
            if n > 0 and acc[m, n - 1] < best:
                best = acc[m, n - 1]
                code = 1
            if m > 0 and acc[m - 1, n] < best:
                best = acc[m - 1, n]
                code = 2
            for k in range(n_jumps):
                if land_row[k] == m and land_lo[k] <= n <= land_hi[k]:
                    v = acc[src_row[k], src_col[k]]
                    if v < best:
                        best = v
                        code = 3 + k
            acc[m, n] = cost[m, n] + best
            step[m, n] = code
    return acc, step


def _backtrack(step, src_row, src_col):
    m, n = step.shape[0] - 1, step.shape[1] - 1
    points = [(m, n)]
    jump_arrivals = []
    while m or n:
        code = step[m, n]
        if code == DIAG:
            m, n = m - 1, n - 1
        elif code == SCORE_STEP:
            n -= 1
        elif code == PERF_STEP:
            m -= 1
        else:
            jump_arrivals.append(len(points) - 1)
            m, n = int(src_row[code - 3]), int(src_col[code - 3])
        points.append((m, n))
    points.reverse()
    last = len(points) - 1
    return np.array(points, dtype=np.int64), tuple(sorted(last - j for j in jump_arrivals))


def accumulated_cost(sim) -> np.ndarray:
    """The full D(m, n) matrix of the classic recurrence."""
    empty = np.zeros(0, dtype=np.int64)
    acc, _ = _fill(_as_cost(sim), empty, empty, empty, empty, empty)
    return acc


def _align(cost, src_row, src_col, land_row, land_lo, land_hi) -> AlignmentPath:
    acc, step = _fill(cost, src_row, src_col, land_row, land_lo, land_hi)
    points, jumps = _backtrack(step, src_row, src_col)
    return AlignmentPath(points, acc[-1, -1], jumps)


def dtw_align(sim) -> AlignmentPath:
    """Optimal monotone alignment from (0, 0) to (p-1, q-1)."""
    cost = _as_cost(sim)
    empty = np.zeros(0, dtype=np.int64)
    return _align(cost, empty, empty, empty, empty, empty)


def dtw_brute_force(sim) -> AlignmentPath:
    """Enumerate every monotone path; testing oracle for small matrices (p+q <= 16)."""
    cost = _as_cost(sim)
    p, q = cost.shape
    if p + q > BRUTE_FORCE_LIMIT:
        raise InputError(f"{p}x{q} instance exceeds the enumeration bound p+q <= {BRUTE_FORCE_LIMIT}")
    c = cost.tolist()
    best = [np.inf, None]
    path = [(0, 0)]

    def walk(m, n, total):
        if m == p - 1 and n == q - 1:
            if total < best[0]:
                best[0], best[1] = total, list(path)
            return
        for dm, dn in ((1, 1), (0, 1), (1, 0)):
            i, j = m + dm, n + dn
            if i < p and j < q:
                path.append((i, j))
                walk(i, j, total + c[i][j])
                path.pop()

    walk(0, 0, c[0][0])
    return AlignmentPath(best[1], best[0])


def path_to_score_indices(path: AlignmentPath, p: int) -> np.ndarray:
    """For each performance frame, the first score frame the path pairs it with."""
    out = np.full(p, -1, dtype=np.int64)
    for m, n in path.points:
        if 0 <= m < p and out[m] < 0:
            out[m] = n
    missing = np.flatnonzero(out < 0)
    if missing.size:
        raise InputError(f"path does not cover performance frame {int(missing[0])} (of {p})")
    return out


ALIGNMENT_HEADER = "perf_frame,score_frame,perf_time_s,score_time_s"


def write_alignment_csv(path, alignment: AlignmentPath, perf_hop: float, score_hop: float,
                        comment: str | None = None, mark_jumps: bool = False) -> None:
    lines = [] if not comment else ["# " + c for c in comment.splitlines()]
    lines.append(ALIGNMENT_HEADER + (",jump" if mark_jumps else ""))
    jumps = set(alignment.jumps)
    for k, (m, n) in enumerate(alignment.points):
        row = f"{m},{n},{float(m * perf_hop)!r},{float(n * score_hop)!r}"
        if mark_jumps:
            row += ",1" if k in jumps else ",0"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def read_alignment_csv(path):
    """Return (AlignmentPath with cost 0, perf_hop, score_hop) from an alignment CSV."""
    path = Path(path)
    try:
        lines = [ln for ln in path.read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if not lines or not lines[0].startswith(ALIGNMENT_HEADER):
        raise InputError(f"{path}: expected header {ALIGNMENT_HEADER!r}")
    has_jump = lines[0].strip().endswith(",jump")
    points, times, jumps = [], [], []
    for k, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != 4 + has_jump:
            raise InputError(f"{path}: ragged row {k + 2}")
        try:
            points.append((int(cells[0]), int(cells[1])))
            times.append((float(cells[2]), float(cells[3])))
            if has_jump and int(cells[4]):
                jumps.append(k)
        except ValueError:
            raise InputError(f"{path}: non-numeric cell in row {k + 2}") from None
    if not points:
        raise InputError(f"{path}: no alignment rows")
    pts = np.array(points, dtype=np.float64)
    tms = np.array(times)
    perf_hop = _infer_hop(pts[:, 0], tms[:, 0])
    score_hop = _infer_hop(pts[:, 1], tms[:, 1])
    return AlignmentPath(points, 0.0, jumps), perf_hop, score_hop


def _infer_hop(frames, seconds) -> float:
    nz = frames > 0
    if not nz.any():
        return 1.0
    return float(np.median(seconds[nz] / frames[nz]))
