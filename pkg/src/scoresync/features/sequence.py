"""Core value types: audio clips, feature sequences, cross-similarity grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

ORIGINS = ("audio", "midi", "external")


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise InputError("audio clip must be a non-empty 1-D array")
        if not np.all(np.isfinite(samples)):
            raise InputError("audio clip contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InputError(f"sample rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    """Frames x bins feature matrix; frame i spans [i*hop, (i+1)*hop)."""

    data: np.ndarray
    hop_seconds: float
    origin: str = "external"
    bins: int = field(init=False)

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InputError(f"feature data must be frames x bins with frames >= 1, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError("feature data contains non-finite values")
        if not (self.hop_seconds > 0 and np.isfinite(self.hop_seconds)):
            raise InputError(f"hop_seconds must be positive, got {self.hop_seconds}")
        if self.origin not in ORIGINS:
            raise InputError(f"origin must be one of {ORIGINS}, got {self.origin!r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "hop_seconds", float(self.hop_seconds))
        object.__setattr__(self, "bins", data.shape[1])

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    def frame_times(self) -> np.ndarray:
        return np.arange(self.frames) * self.hop_seconds


@dataclass(frozen=True, eq=False)
class CrossSimilarityMatrix:
    """p x q grid of non-negative pairwise costs (performance rows, score columns)."""

    cost: np.ndarray

    def __post_init__(self):
        cost = np.array(self.cost, dtype=np.float64)
        if cost.ndim != 2 or cost.size == 0:
            raise InputError(f"cost matrix must be a non-empty 2-D array, got shape {cost.shape}")
        if not np.all(np.isfinite(cost)):
            raise InputError("cost matrix contains non-finite cells")
        if np.any(cost < 0):
            raise InputError("cost matrix contains negative cells")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape
