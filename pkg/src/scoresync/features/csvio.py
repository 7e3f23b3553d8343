"""Feature CSV: header ``hop_seconds=<real>,bins=<int>,origin=<...>`` then one row per frame.

Lines starting with ``#`` before the header are provenance comments and
are skipped on load.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import InputError
from .sequence import ORIGINS, FeatureSequence


def format_features_csv(seq: FeatureSequence, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend("# " + c for c in comment.splitlines())
    lines.append(f"hop_seconds={seq.hop_seconds!r},bins={seq.bins},origin={seq.origin}")
    lines.extend(",".join(repr(float(v)) for v in row) for row in seq.data)
    return "\n".join(lines) + "\n"


def save_features_csv(seq: FeatureSequence, path, comment: str | None = None) -> None:
    Path(path).write_text(format_features_csv(seq, comment))


def _parse_header(line: str, path):
    fields = {}
    for part in line.strip().split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise InputError(f"{path}: header mismatch, expected key=value fields, got {line.strip()!r}")
        fields[key.strip()] = value.strip()
    if set(fields) != {"hop_seconds", "bins", "origin"}:
        raise InputError(f"{path}: header mismatch, expected hop_seconds, bins, origin; got {sorted(fields)}")
    try:
        hop = float(fields["hop_seconds"])
        bins = int(fields["bins"])
    except ValueError:
        raise InputError(f"{path}: header mismatch, non-numeric hop_seconds or bins") from None
    if fields["origin"] not in ORIGINS:
        raise InputError(f"{path}: header mismatch, unknown origin {fields['origin']!r}")
    return hop, bins, fields["origin"]


def load_features_csv(path) -> FeatureSequence:
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    lines = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise InputError(f"{path}: missing header")
    hop, bins, origin = _parse_header(lines[0], path)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != bins:
            raise InputError(f"{path}: ragged row {lineno}: {len(cells)} values, header says {bins}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise InputError(f"{path}: non-numeric cell in row {lineno}") from None
    if not rows:
        raise InputError(f"{path}: empty data section (at least one frame required)")
    return FeatureSequence(np.array(rows), hop, origin)
