"""Losses used by the toy networks, each with its gradient."""

from __future__ import annotations

import numpy as np

from ..errors import InputError
from ..softdtw import DEFAULT_LAMBDA, soft_dtw_divergence_value_and_grad

PADDING_VALUE = 4096.0


def contrastive_loss(d_w: float, label: int, margin: float = 1.0) -> float:
    """(1 - Y) * d^2 / 2 + Y * max(0, m - d)^2 / 2; Y = 0 for matching pairs."""
    if d_w < 0:
        raise InputError(f"distance must be non-negative, got {d_w}")
    if label not in (0, 1):
        raise InputError(f"label must be 0 or 1, got {label}")
    if not margin > 0:
        raise InputError("margin must be positive")
    if label == 0:
        return 0.5 * d_w * d_w
    return 0.5 * max(0.0, margin - d_w) ** 2


def contrastive_loss_grad(d_w: float, label: int, margin: float = 1.0) -> float:
    """d loss / d d_w."""
    if label == 0:
        return d_w
    return -max(0.0, margin - d_w)


def embedding_distance(e1, e2) -> float:
    """Euclidean distance between flattened embeddings."""
    e1, e2 = np.asarray(e1, dtype=np.float64), np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise InputError(f"embedding shapes differ: {e1.shape} vs {e2.shape}")
    return float(np.sqrt(np.sum((e1 - e2) ** 2)))


def embedding_distance_grad(e1, e2):
    """(d dist / d e1, d dist / d e2); zero at coincident embeddings."""
    diff = np.asarray(e1, dtype=np.float64) - np.asarray(e2, dtype=np.float64)
    dist = np.sqrt(np.sum(diff ** 2))
    g = diff / dist if dist > 0 else np.zeros_like(diff)
    return g, -g


def siamese_contrastive(e1, e2, label: int, margin: float = 1.0):
    """Contrastive loss of two embeddings and its gradients with respect to both."""
    d = embedding_distance(e1, e2)
    g1, g2 = embedding_distance_grad(e1, e2)
    s = contrastive_loss_grad(d, label, margin)
    return contrastive_loss(d, label, margin), s * g1, s * g2


def mse_padded_loss(pred, target, padding_value: float = PADDING_VALUE) -> float:
    """Unmasked mean squared error; padded slots are learned as ``padding_value``."""
    return mse_padded_value_and_grad(pred, target, padding_value)[0]


def mse_padded_value_and_grad(pred, target, padding_value: float = PADDING_VALUE):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InputError(f"length mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def pad_targets(rows, length: int, padding_value: float = PADDING_VALUE) -> np.ndarray:
    """Post-pad variable-length target rows with the sentinel."""
    out = np.full((len(rows), length), padding_value, dtype=np.float64)
    for i, row in enumerate(rows):
        row = np.ravel(row)
        if row.size > length:
            raise InputError(f"target of length {row.size} exceeds output length {length}")
        out[i, :row.size] = row
    return out


def divergence_batch_loss(pred, target, lam: float = DEFAULT_LAMBDA):
    """Mean soft-DTW divergence over a batch of index sequences, and its gradient."""
    pred = np.asarray(pred, dtype=np.float64)
    total, grad = 0.0, np.empty_like(pred)
    for i in range(pred.shape[0]):
        v, g = soft_dtw_divergence_value_and_grad(pred[i], target[i], lam)
        total += v
        grad[i] = g
    n = pred.shape[0]
    return total / n, grad / n


def mse_batch_loss(pred, target):
    diff = np.asarray(pred) - np.asarray(target)
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size
