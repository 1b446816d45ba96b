"""Turn-level generation: greedy/top-k/temperature sampling and a REPL.

Generation always works on a linearized stream.  Structural tokens are
never sampled: padding, the stream-start token, and reserved emotion
tokens are masked to -inf at every step, and the end-of-utterance token
additionally at the first step of a turn so utterances are nonempty.
Each turn ends with the end-of-utterance token (sampled or, at the
length cap, forced) so a growing dialogue keeps the block structure the
model was trained on.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

import numpy as np

from .corpus import DialogueSession, Utterance
from .emotions import (
    ROLE_LISTENER,
    ROLE_SPEAKER,
    STATE_IDS,
    EmotionLabel,
    emotion_by_name,
)
from .model import Batch, ModelConfig, forward
from .numerics import Tensor
from .tokenizer import BOS, EOU, PAD, Vocab, linearize_session

STRATEGIES = ("greedy", "top_k", "temperature")


@dataclass(frozen=True)
class DecodeConfig:
    strategy: str = "greedy"
    top_k: int = 40
    temperature: float = 0.9
    max_new_tokens: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}, expected {STRATEGIES}")
        if self.strategy == "top_k" and self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.strategy == "temperature" and self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


def _never_sampled(vocab: Vocab) -> np.ndarray:
    ids = [PAD, BOS] + [vocab.emo_id(e) for e in range(vocab.n_emotions)]
    return np.asarray(ids, dtype=np.int64)


class _Stream:
    """Mutable linearized sequence the sampler extends token by token."""

    def __init__(self, ids, states):
        self.ids = list(ids)
        self.states = list(states)

    def append(self, token_id: int, state: int) -> None:
        self.ids.append(token_id)
        self.states.append(state)

    def __len__(self) -> int:
        return len(self.ids)

    def as_batch(self, emotion_id: int) -> Batch:
        n = len(self.ids)
        return Batch(
            token_ids=np.asarray([self.ids], dtype=np.int64),
            state_ids=np.asarray([self.states], dtype=np.int64),
            position_ids=np.arange(n, dtype=np.int64)[None, :],
            loss_mask=np.zeros((1, n), dtype=bool),
            emotion_ids=np.asarray([emotion_id], dtype=np.int64),
        )


def _empty_stream(vocab: Vocab, mode: str, emotion: EmotionLabel, first_role: str) -> _Stream:
    ids = []
    states = []
    first_state = STATE_IDS[first_role]
    if mode == "prepend":
        ids.append(vocab.emo_id(emotion.id))
        states.append(STATE_IDS[ROLE_SPEAKER])
    ids.append(BOS)
    states.append(first_state)
    return _Stream(ids, states)


def _context_stream(
    context: DialogueSession | None,
    vocab: Vocab,
    config: ModelConfig,
    emotion: EmotionLabel,
    budget: int,
    next_role: str,
) -> _Stream:
    if context is None or not context.turns:
        return _empty_stream(vocab, config.mode, emotion, next_role)
    ls = linearize_session(context, vocab, config.mode, budget)
    return _Stream(list(ls.token_ids), list(ls.state_ids))


def _last_logits(
    params: dict[str, Tensor], config: ModelConfig, stream: _Stream, emotion_id: int
) -> np.ndarray:
    out = forward(params, config, stream.as_batch(emotion_id), train=False)
    return out.logits.data[0, -1].copy()


def next_token_distribution(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    prefix_text: str,
    emotion: EmotionLabel,
    role: str = ROLE_SPEAKER,
) -> np.ndarray:
    """Model distribution over the token following a turn-initial prefix.

    The prefix is placed as the opening words of a turn spoken by
    ``role`` with no prior dialogue.  No sampling masks are applied;
    this is the raw softmax, useful for probing what the conditioning
    makes likely.
    """
    stream = _empty_stream(vocab, config.mode, emotion, role)
    state = STATE_IDS[role]
    for tok in vocab.encode(prefix_text):
        stream.append(tok, state)
    logits = _last_logits(params, config, stream, emotion.id)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def _sample(logits: np.ndarray, cfg: DecodeConfig, rng: np.random.Generator | None) -> int:
    if cfg.strategy == "greedy":
        return int(np.argmax(logits))
    if rng is None:
        raise ValueError("sampling strategies require an rng")
    if cfg.strategy == "top_k":
        k = min(cfg.top_k, int(np.isfinite(logits).sum()))
        keep = np.argpartition(-logits, k - 1)[:k]
        sub = logits[keep]
        p = np.exp(sub - sub.max())
        p /= p.sum()
        return int(keep[rng.choice(k, p=p)])
    scaled = logits / cfg.temperature
    finite = np.isfinite(scaled)
    p = np.zeros_like(scaled)
    p[finite] = np.exp(scaled[finite] - scaled[finite].max())
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def _generate_turn(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    stream: _Stream,
    role: str,
    emotion: EmotionLabel,
    cfg: DecodeConfig,
    rng: np.random.Generator | None,
) -> list[int]:
    """Extend the stream with one generated turn; returns its word ids."""
    state = STATE_IDS[role]
    forbid_always = _never_sampled(vocab)
    new: list[int] = []
    while len(new) < cfg.max_new_tokens and len(stream) < config.max_seq_len:
        logits = _last_logits(params, config, stream, emotion.id)
        logits[forbid_always] = -np.inf
        if not new:
            logits[EOU] = -np.inf
        tok = _sample(logits, cfg, rng)
        if tok == EOU:
            stream.append(EOU, state)
            return new
        stream.append(tok, state)
        new.append(tok)
    if len(stream) < config.max_seq_len:
        stream.append(EOU, state)
    return new


def _next_role(context: DialogueSession | None) -> str:
    if context is None or not context.turns:
        return ROLE_SPEAKER
    return ROLE_LISTENER if context.turns[-1].role == ROLE_SPEAKER else ROLE_SPEAKER


def generate_response(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    context: DialogueSession,
    decode: DecodeConfig | None = None,
    emotion: EmotionLabel | None = None,
    rng: np.random.Generator | None = None,
) -> str:
    """Generate the next turn's text for a dialogue context.

    The context must end with a complete turn; the response takes the
    opposite role.  Enough capacity for max_new_tokens plus the turn
    terminator is reserved when truncating the context.
    """
    cfg = decode or DecodeConfig()
    emo = emotion or context.emotion
    budget = config.max_seq_len - cfg.max_new_tokens - 1
    role = _next_role(context)
    stream = _context_stream(context, vocab, config, emo, budget, role)
    if rng is None and cfg.strategy != "greedy":
        rng = np.random.default_rng(cfg.seed)
    ids = _generate_turn(params, config, vocab, stream, role, emo, cfg, rng)
    return vocab.decode(ids)


def generate_dialogue(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    emotion: EmotionLabel,
    n_turns: int,
    decode: DecodeConfig | None = None,
    opening: str | None = None,
) -> DialogueSession:
    """Self-play a whole session under one emotion, speaker first.

    ``opening`` fixes the first speaker turn instead of sampling it.
    """
    if n_turns < 1:
        raise ValueError("n_turns must be >= 1")
    cfg = decode or DecodeConfig()
    rng = np.random.default_rng(cfg.seed) if cfg.strategy != "greedy" else None
    turns: list[Utterance] = []
    if opening is not None:
        turns.append(Utterance(ROLE_SPEAKER, opening))
    while len(turns) < n_turns:
        context = DialogueSession(emotion, tuple(turns)) if turns else None
        role = _next_role(context)
        budget = config.max_seq_len - cfg.max_new_tokens - 1
        stream = _context_stream(context, vocab, config, emotion, budget, role)
        ids = _generate_turn(params, config, vocab, stream, role, emotion, cfg, rng)
        text = vocab.decode(ids) if ids else "..."
        turns.append(Utterance(role, text))
    return DialogueSession(emotion, tuple(turns))


REPL_HELP = """commands:
  :emotion NAME   switch the conditioning emotion
  :reset          clear the dialogue history
  :help           show this message
  :quit           leave the chat"""


def chat_repl(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    emotion: EmotionLabel,
    decode: DecodeConfig | None = None,
    in_stream=None,
    out_stream=None,
) -> int:
    """Line-oriented chat: the operator speaks, the model answers.

    Streams are injectable for testing.  Returns the exchange count.
    """
    cfg = decode or DecodeConfig()
    fin = in_stream if in_stream is not None else sys.stdin
    fout = out_stream if out_stream is not None else sys.stdout
    rng = np.random.default_rng(cfg.seed) if cfg.strategy != "greedy" else None
    turns: list[Utterance] = []
    exchanges = 0

    def say(text: str) -> None:
        print(text, file=fout)

    say(f"chatting under emotion {emotion.name!r}; :help for commands")
    while True:
        print("you> ", end="", file=fout, flush=True)
        line = fin.readline()
        if not line:
            break
        line = line.strip()
        if not line:
            continue
        if line.startswith(":"):
            cmd, _, arg = line.partition(" ")
            if cmd in (":quit", ":q", ":exit"):
                break
            if cmd == ":reset":
                turns.clear()
                say("(history cleared)")
                continue
            if cmd == ":emotion":
                try:
                    emotion = emotion_by_name(arg.strip())
                except Exception as exc:
                    say(f"(error: {exc})")
                    continue
                say(f"(emotion set to {emotion.name!r})")
                continue
            if cmd == ":help":
                say(REPL_HELP)
                continue
            say(f"(unknown command {cmd!r}; :help lists commands)")
            continue
        turns.append(Utterance(ROLE_SPEAKER, line))
        context = DialogueSession(emotion, tuple(turns))
        reply = generate_response(params, config, vocab, context, cfg,
                                  emotion=emotion, rng=rng)
        if not reply:
            reply = "..."
        turns.append(Utterance(ROLE_LISTENER, reply))
        say(f"model[{emotion.name}]> {reply}")
        exchanges += 1
    return exchanges
