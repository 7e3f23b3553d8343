"""Synthetic toy datasets on a 64x64 grid.

Inflection task: split-join perturbed sequences against their source,
target = inflection coordinates rescaled to the grid, post-padded with a
sentinel. Path task: smoothly time-warped copies of a score, target = the
score index of each of 64 evenly spaced performance positions.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import map_coordinates

from ..features.chroma import cross_similarity
from ..features.sequence import FeatureSequence
from ..structure import synth_perturb
from .model import GRID

SENTINEL = 4.0 * GRID  # padding value for unused inflection slots at toy scale
INFLECTION_SLOTS = 4   # up to two jumps


def random_chroma(frames: int, rng: np.random.Generator, smooth: float = 0.7) -> np.ndarray:
    """Non-negative, L2-normalised 12-bin frames with AR(1) temporal correlation."""
    x = np.empty((frames, 12))
    state = rng.normal(size=12)
    for t in range(frames):
        state = smooth * state + np.sqrt(1 - smooth ** 2) * rng.normal(size=12)
        x[t] = np.abs(state)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def resample_matrix(cost: np.ndarray, size: int = GRID) -> np.ndarray:
    """Bilinear resampling of a p x q matrix onto size x size (corners preserved)."""
    p, q = cost.shape
    rows = np.linspace(0, p - 1, size)
    cols = np.linspace(0, q - 1, size)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(cost, [rr, cc], order=1, mode="nearest")


def standardize(x: np.ndarray) -> np.ndarray:
    """Per-instance zero mean, unit variance (stands in for batch normalisation)."""
    std = x.std()
    return (x - x.mean()) / (std if std > 0 else 1.0)


def _to_input(cost):
    return standardize(resample_matrix(cost))[None]


def inflection_instance(rng: np.random.Generator, max_jumps: int = 2):
    frames = int(rng.integers(48, 81))
    n_jumps = int(rng.integers(1, max_jumps + 1))
    src = FeatureSequence(random_chroma(frames, rng), 0.05)
    res = synth_perturb(src, n_jumps=n_jumps, seed=int(rng.integers(2 ** 31)))
    cost = cross_similarity(res.features, src).cost
    p, q = cost.shape
    pts = res.inflections.points.astype(np.float64)
    pts[:, 0] *= (GRID - 1) / (p - 1)
    pts[:, 1] *= (GRID - 1) / (q - 1)
    target = np.full(2 * INFLECTION_SLOTS, SENTINEL)
    target[:pts.size] = pts.ravel()
    return _to_input(cost), target, cost, res


def make_inflection_dataset(n: int, seed: int, max_jumps: int = 2):
    """(inputs [n,1,64,64], targets [n,8]) with targets in grid frames."""
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(n):
        x, y, _, _ = inflection_instance(rng, max_jumps)
        xs.append(x)
        ys.append(y)
    return np.stack(xs), np.stack(ys)


def monotone_warp(perf_frames: int, score_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth strictly increasing map perf frame -> real score position, endpoints fixed."""
    rate = np.exp(np.convolve(rng.normal(0, 0.6, perf_frames + 8), np.ones(9) / 9, mode="valid"))[:perf_frames]
    pos = np.concatenate([[0.0], np.cumsum(rate[1:])])
    return pos / pos[-1] * (score_frames - 1)


def path_instance(rng: np.random.Generator, noise: float = 0.05):
    score_frames = int(rng.integers(48, 97))
    perf_frames = int(rng.integers(48, 97))
    score = random_chroma(score_frames, rng)
    warp = monotone_warp(perf_frames, score_frames, rng)
    perf = np.abs(score[np.rint(warp).astype(int)] + noise * rng.normal(size=(perf_frames, 12)))
    perf /= np.linalg.norm(perf, axis=1, keepdims=True)
    cost = cross_similarity(FeatureSequence(perf, 0.05), FeatureSequence(score, 0.05)).cost
    at = np.linspace(0, perf_frames - 1, GRID)
    target = np.interp(at, np.arange(perf_frames), warp) * (GRID - 1) / (score_frames - 1)
    return _to_input(cost), target, cost


def make_path_dataset(n: int, seed: int):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(n):
        x, y, _ = path_instance(rng)
        xs.append(x)
        ys.append(y)
    return np.stack(xs), np.stack(ys)
