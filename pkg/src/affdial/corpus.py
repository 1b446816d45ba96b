"""Emotion-labelled dialogue corpora.

Canonical on-disk format is JSONL, one session per line:

    {"emotion": "joyful", "turns": [{"role": "S", "text": "hi"},
                                    {"role": "L", "text": "hello"}]}

Roles strictly alternate starting with the speaker ``S``.  A converter is
provided for the original empathetic-dialogue CSV layout (one utterance
per row, ``_comma_`` escaping).
"""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .emotions import (
    DEFAULT_EMOTIONS,
    ROLE_LISTENER,
    ROLE_SPEAKER,
    ROLES,
    EmotionLabel,
    emotion_by_name,
)
from .tokenizer import word_tokenize

SPLIT_NAMES = ("train", "validation", "test")


class CorpusFormatError(ValueError):
    """Malformed line or record in a corpus file."""


class SessionInvariantError(ValueError):
    """A session violates the alternation/nonempty-turn invariants."""


@dataclass(frozen=True)
class Utterance:
    role: str  # "S" or "L"
    text: str


@dataclass
class DialogueSession:
    """One conversation under a single emotion label.

    Turns alternate S, L, S, L, ... and every turn is nonempty after
    whitespace trimming.
    """

    emotion: EmotionLabel
    turns: list[Utterance]

    def validate(self, where: str = "session") -> None:
        if not self.turns:
            raise SessionInvariantError(f"{where}: session has no turns")
        for i, turn in enumerate(self.turns):
            if turn.role not in ROLES:
                raise SessionInvariantError(
                    f"{where}: turn {i} has role {turn.role!r}, expected S or L"
                )
            expected = ROLE_SPEAKER if i % 2 == 0 else ROLE_LISTENER
            if turn.role != expected:
                raise SessionInvariantError(
                    f"{where}: turn {i} has role {turn.role}, expected {expected} "
                    "(roles must alternate starting with S)"
                )
            if not turn.text.strip():
                raise SessionInvariantError(f"{where}: turn {i} has empty text")


@dataclass
class CorpusSplit:
    name: str  # train | validation | test
    sessions: list[DialogueSession] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.name not in SPLIT_NAMES:
            raise ValueError(f"split name {self.name!r} not in {SPLIT_NAMES}")


@dataclass
class CorpusStats:
    n_sessions: int
    n_turns: int
    n_tokens: int
    emotion_histogram: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "n_turns": self.n_turns,
            "n_tokens": self.n_tokens,
            "emotion_histogram": dict(self.emotion_histogram),
        }


def session_to_dict(session: DialogueSession) -> dict:
    return {
        "emotion": session.emotion.name,
        "turns": [{"role": t.role, "text": t.text} for t in session.turns],
    }


def session_from_dict(record: dict, where: str = "record") -> DialogueSession:
    if not isinstance(record, dict):
        raise CorpusFormatError(f"{where}: expected a JSON object")
    try:
        emotion_name = record["emotion"]
        raw_turns = record["turns"]
    except KeyError as exc:
        raise CorpusFormatError(f"{where}: missing field {exc.args[0]!r}") from None
    emotion = emotion_by_name(str(emotion_name))
    if not isinstance(raw_turns, list):
        raise CorpusFormatError(f"{where}: 'turns' must be a list")
    turns = []
    for i, raw in enumerate(raw_turns):
        if not isinstance(raw, dict) or "role" not in raw or "text" not in raw:
            raise CorpusFormatError(
                f"{where}: turn {i} must be an object with 'role' and 'text'"
            )
        turns.append(Utterance(role=str(raw["role"]), text=str(raw["text"])))
    session = DialogueSession(emotion=emotion, turns=turns)
    session.validate(where)
    return session


def load_corpus(
    path: str, split: str, drop_trailing_speaker: bool = False
) -> CorpusSplit:
    """Load a JSONL corpus file.

    Every line must parse as a session record; parse errors report the
    line number, invariant violations the session index.  Sessions whose
    final turn is a speaker turn are kept by default (they still carry
    LM training signal); ``drop_trailing_speaker`` removes them.
    """
    sessions: list[DialogueSession] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            session = session_from_dict(
                record, where=f"{path}:{lineno} (session {len(sessions)})"
            )
            if drop_trailing_speaker and session.turns[-1].role == ROLE_SPEAKER:
                continue
            sessions.append(session)
    return CorpusSplit(name=split, sessions=sessions)


def save_corpus(split: CorpusSplit, path: str) -> None:
    """Serialize back to JSONL (UTF-8, LF line endings)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for session in split.sessions:
            fh.write(json.dumps(session_to_dict(session), ensure_ascii=False))
            fh.write("\n")


def corpus_stats(split: CorpusSplit) -> CorpusStats:
    """Exact session/turn/token counts plus the per-emotion histogram."""
    hist: Counter[str] = Counter()
    n_turns = 0
    n_tokens = 0
    for session in split.sessions:
        hist[session.emotion.name] += 1
        n_turns += len(session.turns)
        for turn in session.turns:
            n_tokens += len(word_tokenize(turn.text))
    return CorpusStats(
        n_sessions=len(split.sessions),
        n_turns=n_turns,
        n_tokens=n_tokens,
        emotion_histogram=dict(hist),
    )


# ---------------------------------------------------------------------------
# Synthetic marker corpus
#
# Test fixture: each label's sessions all contain a marker word unique to
# that label, so emotion conditioning is observable as a shift of
# probability mass onto the marker.

_FILLERS = (
    "today", "again", "now", "lately", "somehow", "honestly",
    "still", "often", "really", "anyway",
)

_S_OPENERS = ("i feel {m} {f}", "i feel {m} about it {f}")
_S_FOLLOWUPS = ("yes it is all so {m} {f}", "it has been {m} for me {f}")
_L_TEMPLATES = (
    "you sound {m} {f}", "that seems so {m} to me {f}",
    "i hear how {m} you are {f}",
)


def marker_word(label: EmotionLabel) -> str:
    """The synthetic-corpus marker word for a label."""
    return f"zz{label.name}"


def probe_prefixes() -> list[str]:
    """Speaker-turn prefixes that end right before a marker slot."""
    return ["i feel"]


def make_synthetic_corpus(
    n_emotions: int, sessions_per_emotion: int, seed: int, split: str = "train"
) -> CorpusSplit:
    """Deterministic synthetic corpus over the first ``n_emotions`` labels.

    Labels come from the default registry, so ``n_emotions`` is capped at
    its size.  Every utterance of a session embeds the label's marker
    word; surrounding filler varies per session.
    """
    if n_emotions < 1:
        raise ValueError("n_emotions must be >= 1")
    if n_emotions > len(DEFAULT_EMOTIONS):
        raise ValueError(
            f"n_emotions={n_emotions} exceeds the {len(DEFAULT_EMOTIONS)}-label registry"
        )
    rng = np.random.default_rng(seed)
    sessions = []
    for label in DEFAULT_EMOTIONS[:n_emotions]:
        m = marker_word(label)
        for _ in range(sessions_per_emotion):
            n_pairs = int(rng.integers(1, 3))  # 1 or 2 S/L pairs
            turns = []
            for pair in range(n_pairs):
                s_tpl = _S_OPENERS[0] if pair == 0 else _pick(rng, _S_FOLLOWUPS)
                turns.append(
                    Utterance(ROLE_SPEAKER, s_tpl.format(m=m, f=_pick(rng, _FILLERS)))
                )
                turns.append(
                    Utterance(
                        ROLE_LISTENER,
                        _pick(rng, _L_TEMPLATES).format(m=m, f=_pick(rng, _FILLERS)),
                    )
                )
            sessions.append(DialogueSession(emotion=label, turns=turns))
    return CorpusSplit(name=split, sessions=sessions)


def _pick(rng: np.random.Generator, options: tuple[str, ...]) -> str:
    return options[int(rng.integers(0, len(options)))]


# ---------------------------------------------------------------------------
# Original-CSV ingestion

def convert_empdial_csv(csv_path: str) -> list[DialogueSession]:
    """Convert the original per-utterance CSV layout to sessions.

    Expected columns: conv_id, utterance_idx, context (the emotion label),
    prompt, speaker_idx, utterance, ...  Utterances use ``_comma_`` for
    literal commas.  Rows are grouped by conv_id and ordered by
    utterance_idx; odd indices are speaker turns, even listener turns.
    The situation prompt column is ignored.
    """
    by_conv: dict[str, list[tuple[int, str, str]]] = {}
    order: list[str] = []
    with open(csv_path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CorpusFormatError(f"{csv_path}: empty file")
        cols = {name.strip(): i for i, name in enumerate(header)}
        for need in ("conv_id", "utterance_idx", "context", "utterance"):
            if need not in cols:
                raise CorpusFormatError(f"{csv_path}: missing column {need!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                conv = row[cols["conv_id"]]
                idx = int(row[cols["utterance_idx"]])
                emotion = row[cols["context"]]
                text = row[cols["utterance"]].replace("_comma_", ",")
            except (IndexError, ValueError) as exc:
                raise CorpusFormatError(f"{csv_path}:{lineno}: bad row: {exc}") from None
            if conv not in by_conv:
                by_conv[conv] = []
                order.append(conv)
            by_conv[conv].append((idx, emotion, text))
    sessions = []
    for conv in order:
        rows = sorted(by_conv[conv], key=lambda r: r[0])
        emotion = emotion_by_name(rows[0][1])
        turns = [
            Utterance(ROLE_SPEAKER if i % 2 == 0 else ROLE_LISTENER, text)
            for i, (_, _, text) in enumerate(rows)
        ]
        session = DialogueSession(emotion=emotion, turns=turns)
        session.validate(where=f"conversation {conv!r}")
        sessions.append(session)
    return sessions


def read_corpus_any(path: str, split: str = "train") -> CorpusSplit:
    """Load JSONL, or convert on the fly when given a CSV path."""
    if path.endswith(".csv"):
        return CorpusSplit(name=split, sessions=convert_empdial_csv(path))
    return load_corpus(path, split)
