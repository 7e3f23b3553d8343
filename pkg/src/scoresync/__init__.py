"""Performance-score synchronisation toolkit.

Feature extraction, classic and jump-capable DTW, soft-DTW divergence,
toy neural components for inflection detection and path regression,
synthetic structural perturbation and alignment evaluation.
"""

__version__ = "0.1.0"
