"""Generation: sampling strategies, turn boundaries, the chat loop."""

import io

import numpy as np
import pytest

from affdial.corpus import DialogueSession, Utterance, marker_word
from affdial.decoding import (
    STRATEGIES,
    DecodeConfig,
    chat_repl,
    generate_dialogue,
    generate_response,
    next_token_distribution,
)
from affdial.emotions import DEFAULT_EMOTIONS
from affdial.tokenizer import BOS, EOU, PAD


class TestDecodeConfig:
    def test_bad_strategy(self):
        with pytest.raises(ValueError):
            DecodeConfig(strategy="beam")

    def test_bad_top_k(self):
        with pytest.raises(ValueError):
            DecodeConfig(strategy="top_k", top_k=0)

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            DecodeConfig(strategy="temperature", temperature=0.0)

    def test_bad_budget(self):
        with pytest.raises(ValueError):
            DecodeConfig(max_new_tokens=0)


class TestNextTokenDistribution:
    def test_is_a_distribution(self, trained_ad):
        params, config, vocab, _ = trained_ad
        dist = next_token_distribution(
            params, config, vocab, "i feel", DEFAULT_EMOTIONS[0])
        assert dist.shape == (len(vocab),)
        assert (dist >= 0).all()
        assert dist.sum() == pytest.approx(1.0, rel=1e-9)

    def test_conditioning_moves_marker_mass(self, trained_ad):
        params, config, vocab, _ = trained_ad
        m0 = vocab.token_to_id[marker_word(DEFAULT_EMOTIONS[0])]
        own = next_token_distribution(
            params, config, vocab, "i feel", DEFAULT_EMOTIONS[0])[m0]
        other = next_token_distribution(
            params, config, vocab, "i feel", DEFAULT_EMOTIONS[1])[m0]
        assert own > other


class TestGenerateResponse:
    def ctx(self, emotion=DEFAULT_EMOTIONS[0]):
        m = marker_word(emotion)
        return DialogueSession(emotion, [Utterance("S", f"i feel {m} today")])

    def test_returns_nonempty_text(self, trained_ad):
        params, config, vocab, _ = trained_ad
        text = generate_response(params, config, vocab, self.ctx())
        assert isinstance(text, str)
        assert text.strip()

    def test_greedy_is_deterministic(self, trained_ad):
        params, config, vocab, _ = trained_ad
        a = generate_response(params, config, vocab, self.ctx())
        b = generate_response(params, config, vocab, self.ctx())
        assert a == b

    def test_no_special_tokens_leak(self, trained_ad):
        params, config, vocab, _ = trained_ad
        text = generate_response(params, config, vocab, self.ctx())
        for special in ("<pad>", "<bos>", "<eou>", "<emo:"):
            assert special not in text

    def test_overfit_model_echoes_marker(self, trained_ad):
        params, config, vocab, _ = trained_ad
        for emotion in DEFAULT_EMOTIONS[:3]:
            text = generate_response(
                params, config, vocab, self.ctx(emotion), emotion=emotion)
            assert marker_word(emotion) in text.split()

    def test_budget_respected(self, trained_ad):
        params, config, vocab, _ = trained_ad
        cfg = DecodeConfig(strategy="greedy", max_new_tokens=4)
        text = generate_response(params, config, vocab, self.ctx(), decode=cfg)
        assert len(text.split()) <= 4

    def test_sampling_strategies_run(self, trained_ad):
        params, config, vocab, _ = trained_ad
        for strategy in STRATEGIES:
            cfg = DecodeConfig(strategy=strategy, max_new_tokens=8)
            text = generate_response(
                params, config, vocab, self.ctx(), decode=cfg,
                rng=np.random.default_rng(0))
            assert isinstance(text, str)

    def test_seeded_sampling_reproducible(self, trained_ad):
        params, config, vocab, _ = trained_ad
        cfg = DecodeConfig(strategy="temperature", temperature=1.2, max_new_tokens=10)
        a = generate_response(params, config, vocab, self.ctx(), decode=cfg,
                              rng=np.random.default_rng(5))
        b = generate_response(params, config, vocab, self.ctx(), decode=cfg,
                              rng=np.random.default_rng(5))
        assert a == b

    def test_top_k_one_equals_greedy(self, trained_ad):
        params, config, vocab, _ = trained_ad
        greedy = generate_response(params, config, vocab, self.ctx())
        topk1 = generate_response(
            params, config, vocab, self.ctx(),
            decode=DecodeConfig(strategy="top_k", top_k=1),
            rng=np.random.default_rng(0))
        assert greedy == topk1

    def test_emotion_override_takes_effect(self, trained_ad):
        # same context, different conditioning label, different greedy output
        params, config, vocab, _ = trained_ad
        ctx = self.ctx(DEFAULT_EMOTIONS[0])
        default = generate_response(params, config, vocab, ctx)
        forced = generate_response(
            params, config, vocab, ctx, emotion=DEFAULT_EMOTIONS[2])
        assert forced != default
        assert marker_word(DEFAULT_EMOTIONS[0]) not in forced.split()


class TestGenerateDialogue:
    def test_roles_alternate_from_speaker(self, trained_ad):
        params, config, vocab, _ = trained_ad
        session = generate_dialogue(
            params, config, vocab, DEFAULT_EMOTIONS[1], n_turns=4)
        assert [t.role for t in session.turns] == ["S", "L", "S", "L"]
        session.validate()

    def test_opening_is_kept_verbatim(self, trained_ad):
        params, config, vocab, _ = trained_ad
        session = generate_dialogue(
            params, config, vocab, DEFAULT_EMOTIONS[0], n_turns=2,
            opening="i feel strange today")
        assert session.turns[0].text == "i feel strange today"

    def test_emotion_attached(self, trained_ad):
        params, config, vocab, _ = trained_ad
        session = generate_dialogue(
            params, config, vocab, DEFAULT_EMOTIONS[2], n_turns=2)
        assert session.emotion.name == DEFAULT_EMOTIONS[2].name


class TestChatRepl:
    def run_chat(self, trained_ad, script):
        params, config, vocab, _ = trained_ad
        out = io.StringIO()
        n = chat_repl(
            params, config, vocab, DEFAULT_EMOTIONS[0],
            in_stream=io.StringIO(script), out_stream=out)
        return n, out.getvalue()

    def test_exchange_and_quit(self, trained_ad):
        n, transcript = self.run_chat(trained_ad, "i feel odd today\n:quit\n")
        assert n == 1
        assert "model[" in transcript

    def test_eof_terminates(self, trained_ad):
        n, transcript = self.run_chat(trained_ad, "hello there\n")
        assert n == 1

    def test_emotion_switch_command(self, trained_ad):
        name = DEFAULT_EMOTIONS[1].name
        n, transcript = self.run_chat(
            trained_ad, f":emotion {name}\nhello you\n:q\n")
        assert f"model[{name}]>" in transcript

    def test_unknown_emotion_reported(self, trained_ad):
        n, transcript = self.run_chat(trained_ad, ":emotion blissful\n:q\n")
        assert n == 0
        assert "unknown" in transcript.lower()

    def test_reset_clears_context(self, trained_ad):
        n, transcript = self.run_chat(
            trained_ad, "i feel strange\n:reset\ni feel strange\n:q\n")
        assert n == 2

    def test_help_lists_commands(self, trained_ad):
        _, transcript = self.run_chat(trained_ad, ":help\n:q\n")
        for cmd in (":emotion", ":reset", ":quit"):
            assert cmd in transcript
