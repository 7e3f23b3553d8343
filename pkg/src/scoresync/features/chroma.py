"""Chromagrams from audio and MIDI, and Euclidean cross-similarity."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import get_window
from scipy.spatial.distance import cdist

from ..errors import InputError
from .midi import PERCUSSION_CHANNEL, MidiScore
from .sequence import AudioClip, CrossSimilarityMatrix, FeatureSequence

PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
MIN_FREQ = 32.7  # C1; lower DFT bins are discarded
A4 = 440.0


def _l2_normalize(frames: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(frames, axis=1, keepdims=True)
    out = np.zeros_like(frames)
    voiced = norms[:, 0] > np.finfo(np.float64).tiny
    out[voiced] = frames[voiced] / norms[voiced]
    return out


def pitch_class_of(freqs) -> np.ndarray:
    """Nearest equal-tempered pitch class (C=0) for each frequency in Hz."""
    midi = 69.0 + 12.0 * np.log2(np.asarray(freqs, dtype=np.float64) / A4)
    return np.mod(np.round(midi).astype(int), 12)


def chroma_fold_matrix(frame_length: int, sample_rate: int) -> np.ndarray:
    """(frame_length//2 + 1) x 12 0/1 matrix mapping rfft bins to pitch classes."""
    freqs = np.fft.rfftfreq(frame_length, d=1.0 / sample_rate)
    fold = np.zeros((freqs.size, 12))
    keep = freqs >= MIN_FREQ
    fold[np.flatnonzero(keep), pitch_class_of(freqs[keep])] = 1.0
    return fold


def chromagram(clip: AudioClip, frame_length: int = 2048, hop_length: int = 512,
               window: str = "hann") -> FeatureSequence:
    """12-bin chromagram from the STFT power spectrum, L2-normalised per frame.

    No padding: frame k covers samples [k*hop, k*hop + frame_length).
    """
    if frame_length < 64:
        raise InputError(f"frame_length must be >= 64, got {frame_length}")
    if hop_length < 1:
        raise InputError(f"hop_length must be >= 1, got {hop_length}")
    samples = clip.samples
    if not np.all(np.isfinite(samples)):
        raise InputError("non-finite samples")
    if samples.size < frame_length:
        raise InputError(f"clip has {samples.size} samples, shorter than one frame ({frame_length})")
    frames = np.lib.stride_tricks.sliding_window_view(samples, frame_length)[::hop_length]
    win = get_window(window, frame_length, fftbins=True)
    power = np.abs(np.fft.rfft(frames * win, axis=1)) ** 2
    chroma = power @ chroma_fold_matrix(frame_length, clip.sample_rate)
    return FeatureSequence(_l2_normalize(chroma), hop_length / clip.sample_rate, "audio")


def midi_to_chroma(score: MidiScore, hop_seconds: float) -> FeatureSequence:
    """Render notes straight onto pitch-class bins (no synthesis).

    Each sounding note adds velocity/127 to its pitch class in every frame
    its interval overlaps. Percussion (channel 10) is skipped.
    """
    if not hop_seconds > 0:
        raise InputError(f"hop_seconds must be positive, got {hop_seconds}")
    notes = [n for n in score.notes if n.channel != PERCUSSION_CHANNEL]
    if not notes:
        raise InputError("score has no pitched notes")
    eps = 1e-9
    n_frames = max(1, math.ceil(score.end_time / hop_seconds - eps))
    chroma = np.zeros((n_frames, 12))
    for note in notes:
        first = math.floor(note.onset / hop_seconds + eps)
        last = math.ceil((note.onset + note.duration) / hop_seconds - eps)
        chroma[first:max(last, first + 1), note.pitch % 12] += note.velocity / 127.0
    return FeatureSequence(_l2_normalize(chroma), hop_seconds, "midi")


def cross_similarity(perf: FeatureSequence, score: FeatureSequence) -> CrossSimilarityMatrix:
    """Euclidean distance between every performance frame and every score frame."""
    if perf.bins != score.bins:
        raise InputError(f"bin-count mismatch: performance has {perf.bins}, score has {score.bins}")
    return CrossSimilarityMatrix(cdist(perf.data, score.data, metric="euclidean"))
