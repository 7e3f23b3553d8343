"""Standard MIDI File (formats 0 and 1) reader producing timed notes.

Tempo meta events (FF 51) from every track are merged into one tempo map,
running status is honoured, and a note-on with velocity 0 counts as a
note-off. SMPTE time division is rejected.
"""

from __future__ import annotations

import bisect
import struct
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

from ..errors import InputError

DEFAULT_TEMPO = 500_000  # microseconds per quarter note (120 bpm)
PERCUSSION_CHANNEL = 9   # channel 10 in 1-based numbering

_DATA_BYTES = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


class Note(NamedTuple):
    onset: float
    duration: float
    pitch: int
    velocity: int
    channel: int = 0


@dataclass(frozen=True)
class MidiScore:
    notes: tuple
    tempo_map: tuple = ((0, DEFAULT_TEMPO),)  # ((tick, microseconds_per_quarter), ...)
    ticks_per_quarter: int = 480

    def __post_init__(self):
        object.__setattr__(self, "notes", tuple(self.notes))
        if self.ticks_per_quarter <= 0:
            raise InputError("ticks_per_quarter must be positive")
        for n in self.notes:
            if n.onset < 0 or n.duration <= 0:
                raise InputError(f"invalid note timing {n}")
            if not (0 <= n.pitch <= 127 and 0 <= n.velocity <= 127):
                raise InputError(f"note pitch/velocity out of range: {n}")

    @property
    def end_time(self) -> float:
        return max((n.onset + n.duration for n in self.notes), default=0.0)


class _TempoMap:
    def __init__(self, changes, tpq):
        changes = sorted(dict(changes).items())
        if not changes or changes[0][0] != 0:
            changes.insert(0, (0, DEFAULT_TEMPO))
        self.ticks = [t for t, _ in changes]
        self.tempi = [u for _, u in changes]
        self.tpq = tpq
        self.seconds = [0.0]
        for k in range(1, len(changes)):
            span = self.ticks[k] - self.ticks[k - 1]
            self.seconds.append(self.seconds[-1] + span * self.tempi[k - 1] / 1e6 / tpq)

    def to_seconds(self, tick):
        k = bisect.bisect_right(self.ticks, tick) - 1
        return self.seconds[k] + (tick - self.ticks[k]) * self.tempi[k] / 1e6 / self.tpq


def _read_vlq(buf, pos):
    value = 0
    for _ in range(4):
        if pos >= len(buf):
            raise InputError("truncated variable-length quantity")
        byte = buf[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise InputError("variable-length quantity longer than 4 bytes")


def _parse_track(buf):
    """Yield (tick, kind, payload) for note and tempo events of one track."""
    pos, tick, status = 0, 0, None
    while pos < len(buf):
        delta, pos = _read_vlq(buf, pos)
        tick += delta
        if pos >= len(buf):
            raise InputError("truncated track event")
        byte = buf[pos]
        if byte == 0xFF:
            if pos + 2 > len(buf):
                raise InputError("truncated meta event")
            mtype = buf[pos + 1]
            length, pos = _read_vlq(buf, pos + 2)
            payload = buf[pos:pos + length]
            if len(payload) < length:
                raise InputError("truncated meta event payload")
            pos += length
            if mtype == 0x51:
                if length != 3:
                    raise InputError("tempo meta event must carry 3 bytes")
                yield tick, "tempo", int.from_bytes(payload, "big")
            elif mtype == 0x2F:
                return
            continue
        if byte in (0xF0, 0xF7):
            length, pos = _read_vlq(buf, pos + 1)
            pos += length
            status = None
            continue
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise InputError("data byte without running status")
        kind = status & 0xF0
        n = _DATA_BYTES.get(kind)
        if n is None:
            raise InputError(f"unsupported status byte {status:#04x}")
        data = buf[pos:pos + n]
        if len(data) < n:
            raise InputError("truncated channel message")
        pos += n
        channel = status & 0x0F
        if kind == 0x90 and data[1] > 0:
            yield tick, "on", (channel, data[0], data[1])
        elif kind == 0x80 or kind == 0x90:
            yield tick, "off", (channel, data[0])


def parse_midi(raw: bytes) -> MidiScore:
    if raw[:4] != b"MThd" or len(raw) < 14:
        raise InputError("not a Standard MIDI File (missing MThd header)")
    hlen, fmt, ntracks, division = struct.unpack(">IHHH", raw[4:14])
    if fmt not in (0, 1):
        raise InputError(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise InputError("SMPTE time division is not supported")
    pos = 8 + hlen
    events = []
    for _ in range(ntracks):
        if raw[pos:pos + 4] != b"MTrk":
            raise InputError("missing MTrk chunk")
        (length,) = struct.unpack(">I", raw[pos + 4:pos + 8])
        body = raw[pos + 8:pos + 8 + length]
        if len(body) < length:
            raise InputError("truncated MTrk chunk")
        events.append(list(_parse_track(body)))
        pos += 8 + length

    tempo = _TempoMap([(t, p) for track in events for t, k, p in track if k == "tempo"], division)
    notes = []
    for track in events:
        open_notes = defaultdict(deque)
        for tick, kind, payload in track:
            if kind == "on":
                channel, pitch, vel = payload
                open_notes[channel, pitch].append((tick, vel))
            elif kind == "off":
                pending = open_notes.get(payload)
                if not pending:
                    continue  # stray note-off
                start, vel = pending.popleft()
                if tick > start:
                    onset = tempo.to_seconds(start)
                    notes.append(Note(onset, tempo.to_seconds(tick) - onset, payload[1], vel, payload[0]))
        dangling = [key for key, q in open_notes.items() if q]
        if dangling:
            raise InputError(f"note-on without matching note-off for (channel, pitch) {dangling[0]}")
    notes.sort(key=lambda n: (n.onset, n.pitch, n.channel))
    return MidiScore(tuple(notes), tuple(zip(tempo.ticks, tempo.tempi)), division)


def load_midi(path) -> MidiScore:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return parse_midi(raw)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from None


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(path, notes, ticks_per_quarter: int = 480, tempo: int = DEFAULT_TEMPO) -> None:
    """Write (onset_s, duration_s, pitch, velocity[, channel]) notes as a format-0 file."""
    sec_per_tick = tempo / 1e6 / ticks_per_quarter
    msgs = []
    for note in notes:
        onset, duration, pitch, velocity = note[:4]
        channel = note[4] if len(note) > 4 else 0
        on = round(onset / sec_per_tick)
        off = round((onset + duration) / sec_per_tick)
        msgs.append((off, 0, bytes([0x80 | channel, pitch, 0])))
        msgs.append((on, 1, bytes([0x90 | channel, pitch, velocity])))
    msgs.sort(key=lambda m: (m[0], m[1]))
    track = _vlq(0) + b"\xff\x51\x03" + tempo.to_bytes(3, "big")
    last = 0
    for tick, _, msg in msgs:
        track += _vlq(tick - last) + msg
        last = tick
    track += _vlq(0) + b"\xff\x2f\x00"
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    Path(path).write_bytes(header + b"MTrk" + struct.pack(">I", len(track)) + track)
