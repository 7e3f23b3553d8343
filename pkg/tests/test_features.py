import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scoresync.errors import InputError
from scoresync.features import (AudioClip, FeatureSequence, MidiScore, Note, chromagram, cross_similarity,
                                load_features_csv, load_midi, load_wav, midi_to_chroma, parse_midi,
                                save_features_csv, save_wav, write_midi)

SR = 22050
A, C, E, G = 9, 0, 4, 7


def sine(freq, seconds=1.0, sr=SR):
    t = np.arange(int(sr * seconds)) / sr
    return 0.5 * np.sin(2 * np.pi * freq * t)


def _wav_bytes(fmt, channels, sr, bits, data: bytes):
    block = channels * bits // 8
    fmt_chunk = struct.pack("<HHIIHH", fmt, channels, sr, sr * block, block, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt_chunk + b"data" + struct.pack("<I", len(data)) + data
    return b"RIFF" + struct.pack("<I", len(body)) + body


# --- WAV ---------------------------------------------------------------------

def test_silence_round_trip(tmp_path):
    save_wav(tmp_path / "z.wav", np.zeros(SR), SR)
    clip = load_wav(tmp_path / "z.wav")
    assert clip.sample_rate == SR
    assert len(clip.samples) == SR and not clip.samples.any()


def test_stereo_downmix(tmp_path):
    frames = np.tile(np.array([16384, -16384], dtype="<i2"), 100)
    (tmp_path / "s.wav").write_bytes(_wav_bytes(1, 2, SR, 16, frames.tobytes()))
    clip = load_wav(tmp_path / "s.wav")
    assert len(clip.samples) == 100
    assert np.all(clip.samples == 0.0)


def test_pcm16_full_scale(tmp_path):
    data = np.array([32767, -32768], dtype="<i2").tobytes()
    (tmp_path / "f.wav").write_bytes(_wav_bytes(1, 1, SR, 16, data))
    clip = load_wav(tmp_path / "f.wav")
    assert clip.samples[0] == 32767 / 32768
    assert clip.samples[1] == -1.0


def test_float32_round_trip(tmp_path):
    x = sine(440, 0.1)
    save_wav(tmp_path / "f.wav", x, SR, encoding="float32")
    np.testing.assert_allclose(load_wav(tmp_path / "f.wav").samples, x, atol=1e-7)


def test_unsupported_encoding_names_code(tmp_path):
    (tmp_path / "u.wav").write_bytes(_wav_bytes(6, 1, SR, 8, b"\x00" * 10))
    with pytest.raises(InputError, match="6"):
        load_wav(tmp_path / "u.wav")


def test_truncated_and_malformed(tmp_path):
    raw = _wav_bytes(1, 1, SR, 16, b"\x00" * 100)
    (tmp_path / "t.wav").write_bytes(raw[:-40])
    with pytest.raises(InputError, match="truncated"):
        load_wav(tmp_path / "t.wav")
    (tmp_path / "m.wav").write_bytes(b"RIFX" + raw[4:])
    with pytest.raises(InputError):
        load_wav(tmp_path / "m.wav")
    with pytest.raises(InputError, match="missing.wav"):
        load_wav(tmp_path / "missing.wav")


def test_wav_sine_frequency_recovered(tmp_path):
    save_wav(tmp_path / "a.wav", sine(1000.0), SR)
    x = load_wav(tmp_path / "a.wav").samples
    spec = np.abs(np.fft.rfft(x))
    peak = np.argmax(spec) * SR / len(x)
    assert abs(peak - 1000.0) <= SR / len(x)


# --- chroma ------------------------------------------------------------------

def _voiced_argmax(seq):
    norms = np.linalg.norm(seq.data, axis=1)
    return np.argmax(seq.data[norms > 0], axis=1)


def test_chroma_a440():
    seq = chromagram(AudioClip(sine(440.0), SR))
    assert seq.bins == 12 and seq.origin == "audio"
    assert seq.hop_seconds == 512 / SR
    assert np.all(_voiced_argmax(seq) == A)


def test_chroma_middle_c():
    seq = chromagram(AudioClip(sine(261.63), SR))
    assert np.all(_voiced_argmax(seq) == C)


def test_chroma_peak_matches_reference_dft():
    # reference: peak DFT bin of each frame, mapped to its nearest pitch class
    x = sine(523.25) + 0.2 * sine(698.46)
    seq = chromagram(AudioClip(x, SR))
    frame = x[:2048] * np.hanning(2050)[1:-1]
    spec = np.abs(np.fft.rfft(frame))
    f = np.argmax(spec) * SR / 2048
    expected = int(round(12 * np.log2(f / 440.0) + 69)) % 12
    assert _voiced_argmax(seq)[0] == expected


def test_chroma_silence_and_norms():
    seq = chromagram(AudioClip(np.zeros(SR), SR))
    assert not seq.data.any()
    rng = np.random.default_rng(0)
    seq = chromagram(AudioClip(rng.uniform(-1, 1, SR), SR))
    norms = np.linalg.norm(seq.data, axis=1)
    assert np.all((norms == 0) | (np.abs(norms - 1) < 1e-6))


def test_chroma_errors():
    with pytest.raises(InputError):
        chromagram(AudioClip(np.zeros(100), SR))
    with pytest.raises(InputError):
        chromagram(AudioClip(np.zeros(SR), SR), frame_length=32)


# --- MIDI --------------------------------------------------------------------

def test_single_note_fold():
    seq = midi_to_chroma(MidiScore([Note(0.0, 1.0, 69, 100)]), 0.5)
    assert seq.frames == 2 and seq.origin == "midi"
    np.testing.assert_allclose(seq.data[:, A], 1.0)
    assert np.count_nonzero(seq.data) == 2


def test_octave_equivalence():
    seq = midi_to_chroma(MidiScore([Note(0.0, 1.0, 60, 90), Note(0.0, 1.0, 72, 90)]), 0.25)
    assert set(np.flatnonzero(seq.data.any(axis=0))) == {C}


def test_triad_normalisation():
    seq = midi_to_chroma(MidiScore([Note(0.0, 1.0, p, 80) for p in (60, 64, 67)]), 0.5)
    for b in (C, E, G):
        np.testing.assert_allclose(seq.data[:, b], 1 / np.sqrt(3))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 3), st.floats(0.05, 1), st.integers(12, 100), st.integers(1, 127)),
                min_size=1, max_size=6),
       st.integers(-1, 2))
def test_midi_octave_invariance(notes, shift):
    base = MidiScore([Note(o, d, p, v) for o, d, p, v in notes])
    moved = MidiScore([Note(o, d, p + 12 * shift, v) for o, d, p, v in notes])
    np.testing.assert_array_equal(midi_to_chroma(base, 0.1).data, midi_to_chroma(moved, 0.1).data)


def test_percussion_ignored():
    seq = midi_to_chroma(MidiScore([Note(0.0, 1.0, 60, 90), Note(0.0, 1.0, 62, 90, channel=9)]), 0.5)
    assert set(np.flatnonzero(seq.data.any(axis=0))) == {C}


def test_midi_file_round_trip(tmp_path):
    notes = [Note(0.0, 0.5, 60, 100), Note(0.5, 0.25, 64, 80), Note(0.5, 1.0, 67, 70)]
    write_midi(tmp_path / "s.mid", notes)
    score = load_midi(tmp_path / "s.mid")
    got = sorted((round(n.onset, 6), round(n.duration, 6), n.pitch, n.velocity) for n in score.notes)
    assert got == sorted((n.onset, n.duration, n.pitch, n.velocity) for n in notes)


def _track(events: bytes) -> bytes:
    return b"MTrk" + struct.pack(">I", len(events)) + events


def test_running_status_tempo_and_zero_velocity_off():
    # format 1: tempo track (60 bpm) + note track using running status and velocity-0 note-off
    tempo = _track(b"\x00\xff\x51\x03\x0f\x42\x40" + b"\x00\xff\x2f\x00")
    notes = _track(b"\x00\x90\x45\x64" + b"\x83\x60\x45\x00" + b"\x00\x3c\x50" + b"\x83\x60\x3c\x00"
                   + b"\x00\xff\x2f\x00")
    raw = b"MThd" + struct.pack(">IHHH", 6, 1, 2, 480) + tempo + notes
    score = parse_midi(raw)
    assert [(n.pitch, n.onset, n.duration, n.velocity) for n in score.notes] == [(69, 0.0, 1.0, 100),
                                                                                   (60, 1.0, 1.0, 80)]


def test_dangling_note_on_rejected():
    raw = b"MThd" + struct.pack(">IHHH", 6, 0, 1, 480) + _track(b"\x00\x90\x45\x64\x00\xff\x2f\x00")
    with pytest.raises(InputError):
        parse_midi(raw)


def test_empty_score_rejected():
    with pytest.raises(InputError):
        midi_to_chroma(MidiScore([]), 0.1)


# --- cross similarity ----------------------------------------------------------

def test_cross_similarity_examples():
    a = FeatureSequence(np.array([[1.0, 0.0]]), 0.1)
    b = FeatureSequence(np.array([[0.0, 1.0]]), 0.1)
    assert cross_similarity(a, b).cost[0, 0] == pytest.approx(np.sqrt(2))
    rng = np.random.default_rng(1)
    x = FeatureSequence(rng.random((3, 12)), 0.1)
    y = FeatureSequence(rng.random((4, 12)), 0.1)
    assert cross_similarity(x, y).shape == (3, 4)
    assert np.all(np.diag(cross_similarity(x, x).cost) == 0)
    with pytest.raises(InputError):
        cross_similarity(x, FeatureSequence(rng.random((3, 5)), 0.1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_cross_similarity_metric_properties(p, q, seed):
    rng = np.random.default_rng(seed)
    x = FeatureSequence(rng.random((p, 12)), 0.1)
    y = FeatureSequence(rng.random((q, 12)), 0.1)
    np.testing.assert_array_equal(cross_similarity(x, y).cost, cross_similarity(y, x).cost.T)
    z = FeatureSequence(rng.random((3, 12)), 0.1)
    d = cross_similarity(z, z).cost
    assert d[0, 2] <= d[0, 1] + d[1, 2] + 1e-12


# --- feature CSV ---------------------------------------------------------------

def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    seq = FeatureSequence(rng.random((7, 12)), 0.0232, "midi")
    save_features_csv(seq, tmp_path / "f.csv", comment="made by a test")
    back = load_features_csv(tmp_path / "f.csv")
    assert back.hop_seconds == seq.hop_seconds and back.origin == "midi" and back.bins == 12
    assert np.max(np.abs(back.data - seq.data)) <= 1e-6


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("hop_seconds=0.1,bins=3,origin=external\n1,2,3,4\n")
    with pytest.raises(InputError, match="ragged"):
        load_features_csv(p)
    p.write_text("hop_seconds=0.1,bins=3,origin=external\n")
    with pytest.raises(InputError):
        load_features_csv(p)
    p.write_text("hop=0.1,bins=3,origin=external\n1,2,3\n")
    with pytest.raises(InputError, match="header"):
        load_features_csv(p)
    p.write_text("hop_seconds=0.1,bins=3,origin=external\n1,x,3\n")
    with pytest.raises(InputError, match="non-numeric"):
        load_features_csv(p)
