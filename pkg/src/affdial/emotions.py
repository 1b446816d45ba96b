"""Emotion label registry.

The default registry carries the 32 labels of the empathetic-dialogue
corpus this package targets, with dense ids 0..31.  Ids are stable: they
index the model's emotion embedding tables, so the order here is part of
the checkpoint format.
"""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_EMOTION_NAMES: tuple[str, ...] = (
    "surprised", "excited", "annoyed", "proud", "angry", "sad", "grateful",
    "lonely", "impressed", "afraid", "disgusted", "confident", "terrified",
    "hopeful", "anxious", "disappointed", "joyful", "prepared", "guilty",
    "furious", "nostalgic", "jealous", "anticipating", "embarrassed",
    "content", "devastated", "sentimental", "caring", "trusting", "ashamed",
    "apprehensive", "faithful",
)


@dataclass(frozen=True)
class EmotionLabel:
    """One emotion class: a dense integer id plus a lowercase name."""

    id: int
    name: str


DEFAULT_EMOTIONS: tuple[EmotionLabel, ...] = tuple(
    EmotionLabel(i, name) for i, name in enumerate(DEFAULT_EMOTION_NAMES)
)

_BY_NAME: dict[str, EmotionLabel] = {e.name: e for e in DEFAULT_EMOTIONS}

N_EMOTIONS = len(DEFAULT_EMOTIONS)

# Dialogue roles: the speaker (user) opens the session, the listener
# (system) responds.  State ids index the model's state embedding table.
ROLE_SPEAKER = "S"
ROLE_LISTENER = "L"
ROLES = (ROLE_SPEAKER, ROLE_LISTENER)
STATE_IDS = {ROLE_SPEAKER: 0, ROLE_LISTENER: 1}


class UnknownEmotionError(ValueError):
    pass


def emotion_by_name(name: str) -> EmotionLabel:
    """Look up a label by (case-insensitive) name."""
    key = name.strip().lower()
    try:
        return _BY_NAME[key]
    except KeyError:
        raise UnknownEmotionError(
            f"unknown emotion {name!r}; expected one of the "
            f"{N_EMOTIONS} registry labels"
        ) from None


def emotion_by_id(idx: int) -> EmotionLabel:
    if not 0 <= idx < N_EMOTIONS:
        raise UnknownEmotionError(f"emotion id {idx} out of range 0..{N_EMOTIONS - 1}")
    return DEFAULT_EMOTIONS[idx]
