"""Minimal RIFF/WAVE reader and writer (PCM16 and IEEE float32)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import InputError
from .sequence import AudioClip

PCM = 1
IEEE_FLOAT = 3


def _chunks(raw: bytes):
    pos = 12
    while pos + 8 <= len(raw):
        cid, size = struct.unpack_from("<4sI", raw, pos)
        yield cid, pos + 8, size
        pos += 8 + size + (size & 1)


def load_wav(path) -> AudioClip:
    """Read a WAV file, downmix to mono by channel mean, scale to [-1, 1].

    16-bit integers are divided by 32768, so -32768 maps exactly to -1.0.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise InputError(f"{path}: malformed RIFF header")

    fmt = None
    data = None
    for cid, start, size in _chunks(raw):
        if cid == b"fmt ":
            if size < 16 or start + 16 > len(raw):
                raise InputError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", raw, start)
        elif cid == b"data":
            if start + size > len(raw):
                raise InputError(
                    f"{path}: truncated data chunk ({len(raw) - start} of {size} bytes present)"
                )
            data = raw[start:start + size]
    if fmt is None:
        raise InputError(f"{path}: missing fmt chunk")
    if data is None:
        raise InputError(f"{path}: missing data chunk")

    code, channels, rate, _, block_align, bits = fmt
    if code == PCM and bits == 16:
        dtype = "<i2"
    elif code == IEEE_FLOAT and bits == 32:
        dtype = "<f4"
    else:
        raise InputError(
            f"{path}: unsupported encoding (format code {code:#06x}, {bits} bits); "
            "only PCM16 (1) and float32 (3) are read"
        )
    if channels not in (1, 2):
        raise InputError(f"{path}: unsupported channel count {channels}")
    frame_bytes = channels * bits // 8
    if len(data) % frame_bytes:
        raise InputError(f"{path}: truncated data chunk (partial sample frame)")
    if len(data) == 0:
        raise InputError(f"{path}: empty data chunk")

    samples = np.frombuffer(data, dtype=dtype).astype(np.float64)
    if code == PCM:
        samples /= 32768.0
    samples = samples.reshape(-1, channels).mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise InputError(f"{path}: non-finite samples")
    return AudioClip(samples, rate)


def save_wav(path, samples, sample_rate: int, encoding: str = "pcm16") -> None:
    """Write mono or (frames, channels) samples as PCM16 or float32 WAV."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    channels = samples.shape[1]
    if encoding == "pcm16":
        payload = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2").tobytes()
        code, bits = PCM, 16
    elif encoding == "float32":
        payload = samples.astype("<f4").tobytes()
        code, bits = IEEE_FLOAT, 32
    else:
        raise InputError(f"unknown WAV encoding {encoding!r}")
    block_align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", code, channels, sample_rate, sample_rate * block_align, block_align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
