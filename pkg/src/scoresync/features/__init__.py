from .chroma import PITCH_CLASSES, chromagram, cross_similarity, midi_to_chroma
from .csvio import load_features_csv, save_features_csv
from .midi import MidiScore, Note, load_midi, parse_midi, write_midi
from .sequence import AudioClip, CrossSimilarityMatrix, FeatureSequence
from .wav import load_wav, save_wav

__all__ = [
    "PITCH_CLASSES", "AudioClip", "CrossSimilarityMatrix", "FeatureSequence", "MidiScore", "Note",
    "chromagram", "cross_similarity", "load_features_csv", "load_midi", "load_wav",
    "midi_to_chroma", "parse_midi", "save_features_csv", "save_wav", "write_midi",
]
