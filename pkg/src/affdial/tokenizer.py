"""Word-level vocabulary and session linearization.

Text is lowercased and split on whitespace and punctuation; an apostrophe
glues to the letters that follow it, so "I'm happy!" becomes
``["i", "'m", "happy", "!"]``.  A linearized session carries four
equal-length parallel streams: token ids, dialogue-state ids, position
ids, and the loss mask (Fig.-style summed input representation is built
downstream from the first three).

Special ids are fixed: PAD=0, UNK=1, BOS=2, EOU=3, then a reserved block
of one emotion token per registry label (used only by the prepend mode,
but always present so ids are mode-independent).
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .emotions import DEFAULT_EMOTION_NAMES, STATE_IDS

if TYPE_CHECKING:  # pragma: no cover
    from .corpus import CorpusSplit, DialogueSession

_TOKEN_RE = re.compile(r"'[a-z0-9]+|[a-z0-9]+|[^\sa-z0-9]")

PAD, UNK, BOS, EOU = 0, 1, 2, 3
PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOU_TOKEN = "<pad>", "<unk>", "<bos>", "<eou>"


def word_tokenize(text: str) -> list[str]:
    """Lowercase word/punctuation tokenization."""
    return _TOKEN_RE.findall(text.lower())


class TokenizerError(ValueError):
    pass


@dataclass
class Vocab:
    """Token<->id bijection with the reserved special block first."""

    id_to_token: list[str]
    token_to_id: dict[str, int]
    n_emotions: int

    @property
    def n_special(self) -> int:
        return 4 + self.n_emotions

    def __len__(self) -> int:
        return len(self.id_to_token)

    def emo_id(self, emotion_id: int) -> int:
        if not 0 <= emotion_id < self.n_emotions:
            raise TokenizerError(f"emotion id {emotion_id} out of range")
        return 4 + emotion_id

    def encode(self, text: str) -> list[int]:
        return [self.token_to_id.get(tok, UNK) for tok in word_tokenize(text)]

    def decode(self, ids: Iterable[int]) -> str:
        return " ".join(self.id_to_token[i] for i in ids)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for token in self.id_to_token:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path: str) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tokens[:4] != [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOU_TOKEN]:
            raise TokenizerError(f"{path}: special tokens missing or reordered")
        n_emotions = 0
        while 4 + n_emotions < len(tokens) and tokens[4 + n_emotions].startswith("<emo:"):
            n_emotions += 1
        return cls(
            id_to_token=tokens,
            token_to_id={tok: i for i, tok in enumerate(tokens)},
            n_emotions=n_emotions,
        )


def _special_tokens(emotion_names: Iterable[str]) -> list[str]:
    specials = [PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOU_TOKEN]
    specials += [f"<emo:{name}>" for name in emotion_names]
    return specials


def build_vocab(
    split: "CorpusSplit",
    max_size: int | None = None,
    min_freq: int = 1,
    emotion_names: Iterable[str] = DEFAULT_EMOTION_NAMES,
) -> Vocab:
    """Frequency-ordered vocabulary from a training split.

    Content tokens are ordered by descending frequency, ties broken
    lexicographically, and cut at ``max_size`` total entries (specials
    included).  Building is deterministic.
    """
    if not split.sessions:
        raise TokenizerError("cannot build a vocabulary from an empty split")
    counts: Counter[str] = Counter()
    for session in split.sessions:
        for turn in session.turns:
            counts.update(word_tokenize(turn.text))
    specials = _special_tokens(emotion_names)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, freq in ranked if freq >= min_freq and tok not in specials]
    if max_size is not None:
        budget = max_size - len(specials)
        if budget < 0:
            raise TokenizerError(f"max_size={max_size} smaller than the special block")
        kept = kept[:budget]
    id_to_token = specials + kept
    return Vocab(
        id_to_token=id_to_token,
        token_to_id={tok: i for i, tok in enumerate(id_to_token)},
        n_emotions=len(specials) - 4,
    )


@dataclass
class LinearizedSession:
    """Equal-length parallel id streams for one session."""

    token_ids: np.ndarray  # int64 (T,)
    state_ids: np.ndarray  # int64 (T,), 0=S 1=L
    position_ids: np.ndarray  # int64 (T,), 0..T-1
    loss_mask: np.ndarray  # bool (T,)

    def __len__(self) -> int:
        return len(self.token_ids)


def linearize_session(
    session: "DialogueSession",
    vocab: Vocab,
    mode: str,
    max_seq_len: int,
    loss_on: str = "all",
) -> LinearizedSession:
    """Render a session as model input streams.

    Each utterance becomes ``[tokens..., EOU]`` under its role's state id;
    a BOS opens the stream (state of the first kept utterance) and, in
    prepend mode, the session's emotion token sits at position 0 with
    state S.  Too-long sessions lose oldest turns first; the final
    utterance may be front-trimmed but never below one content token.

    ``loss_on`` selects which turns count toward the LM loss: "all"
    (default) or "listener".  BOS, PAD and emotion tokens are never
    maskable; EOU inherits its utterance's maskability.
    """
    if loss_on not in ("all", "listener"):
        raise TokenizerError(f"loss_on must be 'all' or 'listener', got {loss_on!r}")
    blocks = []  # (token ids incl EOU, state id, maskable)
    for turn in session.turns:
        ids = vocab.encode(turn.text) + [EOU]
        state = STATE_IDS[turn.role]
        maskable = loss_on == "all" or turn.role == "L"
        blocks.append((ids, state, maskable))

    prefix_len = 2 if mode == "prepend" else 1  # [EMO?] + BOS
    budget = max_seq_len - prefix_len
    if budget < 2:
        raise TokenizerError(
            f"max_seq_len={max_seq_len} cannot fit one content token plus EOU"
        )

    final_ids, final_state, final_maskable = blocks[-1]
    if len(final_ids) > budget:
        final_ids = final_ids[-budget:]  # keeps EOU; budget >= 2 keeps >= 1 token
        kept = [(final_ids, final_state, final_maskable)]
    else:
        kept = [blocks[-1]]
        used = len(final_ids)
        for block in reversed(blocks[:-1]):
            if used + len(block[0]) > budget:
                break
            kept.insert(0, block)
            used += len(block[0])

    tokens: list[int] = []
    states: list[int] = []
    mask: list[bool] = []
    first_state = kept[0][1]
    if mode == "prepend":
        tokens.append(vocab.emo_id(session.emotion.id))
        states.append(STATE_IDS["S"])
        mask.append(False)
    tokens.append(BOS)
    states.append(first_state)
    mask.append(False)
    for ids, state, maskable in kept:
        tokens.extend(ids)
        states.extend([state] * len(ids))
        mask.extend([maskable] * len(ids))

    return LinearizedSession(
        token_ids=np.asarray(tokens, dtype=np.int64),
        state_ids=np.asarray(states, dtype=np.int64),
        position_ids=np.arange(len(tokens), dtype=np.int64),
        loss_mask=np.asarray(mask, dtype=bool),
    )
