"""Shared fixtures: tiny corpora and session-scoped trained models."""

import numpy as np
import pytest

from affdial.corpus import CorpusSplit, DialogueSession, Utterance, make_synthetic_corpus
from affdial.emotions import DEFAULT_EMOTIONS
from affdial.model import ModelConfig, init_params
from affdial.tokenizer import build_vocab
from affdial.training import TrainConfig, train


def handmade_split(split_name: str = "train") -> CorpusSplit:
    """Two tiny fixed sessions; small vocabulary, short sequences."""
    s0 = DialogueSession(DEFAULT_EMOTIONS[0], [
        Utterance("S", "i feel zzsurprised now"),
        Utterance("L", "you sound zzsurprised today"),
    ])
    s1 = DialogueSession(DEFAULT_EMOTIONS[1], [
        Utterance("S", "i feel zzexcited still"),
        Utterance("L", "you sound zzexcited again"),
    ])
    return CorpusSplit(split_name, [s0, s1])


@pytest.fixture(scope="session")
def tiny_setup():
    split = handmade_split()
    vocab = build_vocab(split, emotion_names=[e.name for e in DEFAULT_EMOTIONS[:2]])
    return split, vocab


@pytest.fixture(scope="session")
def marker_setup():
    split = make_synthetic_corpus(n_emotions=3, sessions_per_emotion=3, seed=2)
    vocab = build_vocab(split, emotion_names=[e.name for e in DEFAULT_EMOTIONS[:3]])
    return split, vocab


def small_config(mode: str, vocab_size: int, n_emotions: int = 3, **over) -> ModelConfig:
    kw = dict(
        mode=mode, vocab_size=vocab_size, n_layers=1, n_heads=2, d_model=32,
        d_ff=64, max_seq_len=64, n_emotions=n_emotions, d_emotion=8, dropout_p=0.0,
    )
    kw.update(over)
    return ModelConfig(**kw)


@pytest.fixture(scope="session")
def trained_ad(marker_setup):
    """A model overfit enough to produce on-topic greedy responses."""
    split, vocab = marker_setup
    mc = small_config("ad", len(vocab))
    tc = TrainConfig(seed=0, max_steps=500, batch_size=9, lr=3e-3, log_every=1000)
    result = train(mc, tc, split, vocab)
    return result.params, mc, vocab, split


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
