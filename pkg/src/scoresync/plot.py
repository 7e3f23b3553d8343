"""Alignment plots as binary PPM (P6) images.

Rows are performance frames, columns score frames. Cells are shaded
255 * (1 - cost / max_cost); ground truth is drawn in blue, then the
predicted path in red on top.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvariantError

RED = (255, 0, 0)
BLUE = (0, 0, 255)
MAX_SIDE = 1024


def downsample_factor(shape, max_side: int = MAX_SIDE) -> int:
    return max(1, -(-max(shape) // max_side))


def area_average(cost: np.ndarray, factor: int) -> np.ndarray:
    """Mean over factor x factor blocks; ragged edge blocks average what they cover."""
    if factor == 1:
        return cost.astype(np.float64)
    p, q = cost.shape
    rows, cols = -(-p // factor), -(-q // factor)
    padded = np.zeros((rows * factor, cols * factor))
    counts = np.zeros_like(padded)
    padded[:p, :q] = cost
    counts[:p, :q] = 1.0
    shape = (rows, factor, cols, factor)
    return padded.reshape(shape).sum(axis=(1, 3)) / counts.reshape(shape).sum(axis=(1, 3))


def grayscale(cost: np.ndarray, top: float | None = None) -> np.ndarray:
    if top is None:
        top = float(np.max(cost)) if cost.size else 0.0
    if top <= 0.0:
        return np.zeros(cost.shape, dtype=np.uint8)
    return np.rint(255.0 * (1.0 - cost / top)).astype(np.uint8)


def _points(cells, shape, factor, label):
    pts = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    bad = (pts < 0).any(axis=1) | (pts[:, 0] >= shape[0]) | (pts[:, 1] >= shape[1])
    if bad.any():
        i, j = pts[np.argmax(bad)]
        raise InvariantError(f"{label} point ({i}, {j}) lies outside the {shape[0]}x{shape[1]} matrix")
    return pts // factor


def render(cost: np.ndarray, path_cells, gt_cells=None, max_side: int = MAX_SIDE) -> np.ndarray:
    """RGB uint8 image [H, W, 3]."""
    cost = np.asarray(cost, dtype=np.float64)
    factor = downsample_factor(cost.shape, max_side)
    # shade relative to the full-resolution maximum
    gray = grayscale(area_average(cost, factor), float(np.max(cost)) if cost.size else 0.0)
    img = np.repeat(gray[:, :, None], 3, axis=2)
    if gt_cells is not None:
        pts = _points(gt_cells, cost.shape, factor, "ground-truth")
        img[pts[:, 0], pts[:, 1]] = BLUE
    pts = _points(path_cells, cost.shape, factor, "path")
    img[pts[:, 0], pts[:, 1]] = RED
    return img


def encode_ppm(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def decode_ppm(raw: bytes) -> np.ndarray:
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P6" or len(parts) < 4:
        raise ValueError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def write_ppm(path, img: np.ndarray):
    Path(path).write_bytes(encode_ppm(img))
