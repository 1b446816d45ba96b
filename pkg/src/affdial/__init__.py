"""Emotion-conditioned dialogue language modelling, from scratch.

A small word-level decoder-only transformer whose next-token distribution
can be shifted at every step by learned emotion embeddings (optionally
split by speaker/listener role), plus the surrounding tooling: corpus
loading, training, decoding, automatic metrics, and human-evaluation
statistics.  All gradients come from the in-repo reverse-mode autodiff
in ``affdial.numerics``.
"""

__version__ = "0.1.0"

from .emotions import DEFAULT_EMOTIONS, EmotionLabel, emotion_by_name

__all__ = ["DEFAULT_EMOTIONS", "EmotionLabel", "emotion_by_name", "__version__"]
