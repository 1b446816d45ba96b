"""Word tokenizer, vocabulary, and session linearization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affdial.corpus import CorpusSplit, DialogueSession, Utterance
from affdial.emotions import DEFAULT_EMOTIONS
from affdial.tokenizer import (
    BOS,
    EOU,
    PAD,
    UNK,
    TokenizerError,
    Vocab,
    build_vocab,
    linearize_session,
    word_tokenize,
)


class TestWordTokenize:
    def test_lowercases_and_splits_punctuation(self):
        assert word_tokenize("I'm happy! ALL-CAPS 42x") == [
            "i", "'m", "happy", "!", "all", "-", "caps", "42x",
        ]

    def test_contractions_split_at_apostrophe(self):
        assert word_tokenize("don't you're we'll") == [
            "don", "'t", "you", "'re", "we", "'ll",
        ]

    def test_empty_and_whitespace(self):
        assert word_tokenize("") == []
        assert word_tokenize("   \t\n") == []

    def test_numbers_kept_whole(self):
        assert word_tokenize("route 66 again") == ["route", "66", "again"]

    @given(st.text(alphabet="abc '!.,", max_size=40))
    @settings(max_examples=50, deadline=None)
    def test_never_produces_empty_or_spaced_tokens(self, text):
        for tok in word_tokenize(text):
            assert tok
            assert " " not in tok


def two_session_split():
    s0 = DialogueSession(DEFAULT_EMOTIONS[0], [
        Utterance("S", "red red blue"),
        Utterance("L", "red green"),
    ])
    s1 = DialogueSession(DEFAULT_EMOTIONS[1], [
        Utterance("S", "blue yellow"),
    ])
    return CorpusSplit("train", [s0, s1])


class TestVocab:
    def test_special_block_order(self):
        v = build_vocab(two_session_split(), emotion_names=["sad", "proud"])
        assert v.id_to_token[PAD] == "<pad>"
        assert v.id_to_token[UNK] == "<unk>"
        assert v.id_to_token[BOS] == "<bos>"
        assert v.id_to_token[EOU] == "<eou>"
        assert v.id_to_token[4] == "<emo:sad>"
        assert v.id_to_token[5] == "<emo:proud>"
        assert v.n_special == 6
        assert v.n_emotions == 2

    def test_frequency_then_lexicographic_order(self):
        v = build_vocab(two_session_split(), emotion_names=["sad"])
        content = v.id_to_token[v.n_special:]
        # red x3, blue x2, then green/yellow x1 alphabetically
        assert content == ["red", "blue", "green", "yellow"]

    def test_min_freq_cuts_rare_words(self):
        v = build_vocab(two_session_split(), min_freq=2, emotion_names=["sad"])
        content = v.id_to_token[v.n_special:]
        assert content == ["red", "blue"]

    def test_max_size_caps_total(self):
        v = build_vocab(two_session_split(), max_size=6, emotion_names=["sad"])
        assert len(v) == 6
        assert v.id_to_token[-1] == "red"

    def test_max_size_below_specials_rejected(self):
        with pytest.raises(TokenizerError):
            build_vocab(two_session_split(), max_size=3, emotion_names=["sad"])

    def test_empty_split_rejected(self):
        with pytest.raises(TokenizerError):
            build_vocab(CorpusSplit("train", []))

    def test_encode_decode(self):
        v = build_vocab(two_session_split(), emotion_names=["sad"])
        ids = v.encode("red blue zebra")
        assert ids[:2] == [v.token_to_id["red"], v.token_to_id["blue"]]
        assert ids[2] == UNK
        assert v.decode(ids) == "red blue <unk>"

    def test_emo_id_range(self):
        v = build_vocab(two_session_split(), emotion_names=["sad", "proud"])
        assert v.emo_id(0) == 4
        assert v.emo_id(1) == 5
        with pytest.raises(TokenizerError):
            v.emo_id(2)

    def test_save_load_roundtrip(self, tmp_path):
        v = build_vocab(two_session_split(), emotion_names=["sad", "proud"])
        path = tmp_path / "v.vocab"
        v.save(path)
        w = Vocab.load(path)
        assert w.id_to_token == v.id_to_token
        assert w.token_to_id == v.token_to_id
        assert w.n_emotions == v.n_emotions

    def test_load_rejects_reordered_specials(self, tmp_path):
        v = build_vocab(two_session_split(), emotion_names=["sad"])
        path = tmp_path / "v.vocab"
        v.save(path)
        lines = path.read_text(encoding="utf-8").splitlines()
        lines[0], lines[1] = lines[1], lines[0]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        with pytest.raises(TokenizerError):
            Vocab.load(path)


@pytest.fixture(scope="module")
def lin_vocab():
    return build_vocab(two_session_split(), emotion_names=["sad", "proud"])


def ids_of(v, *words):
    return [v.token_to_id[w] for w in words]


class TestLinearize:
    def test_plain_layout(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "red blue"),
            Utterance("L", "green"),
        ])
        ls = linearize_session(s, v, "baseline", 32)
        want = [BOS] + ids_of(v, "red", "blue") + [EOU] + ids_of(v, "green") + [EOU]
        assert ls.token_ids.tolist() == want
        assert ls.state_ids.tolist() == [0, 0, 0, 0, 1, 1]
        assert ls.position_ids.tolist() == list(range(6))

    def test_prepend_layout(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("S", "red")])
        ls = linearize_session(s, v, "prepend", 32)
        assert ls.token_ids.tolist() == [v.emo_id(s.emotion.id), BOS,
                                         v.token_to_id["red"], EOU]
        assert ls.state_ids[0] == 0
        assert not ls.loss_mask[0]
        assert not ls.loss_mask[1]

    def test_loss_mask_all(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "red blue"),
            Utterance("L", "green"),
        ])
        ls = linearize_session(s, v, "ad", 32, loss_on="all")
        # BOS off, every content token and EOU on
        assert ls.loss_mask.tolist() == [False, True, True, True, True, True]

    def test_loss_mask_listener_only(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "red blue"),
            Utterance("L", "green"),
        ])
        ls = linearize_session(s, v, "ad", 32, loss_on="listener")
        assert ls.loss_mask.tolist() == [False, False, False, False, True, True]

    def test_bad_loss_on_rejected(self, lin_vocab):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("S", "red")])
        with pytest.raises(TokenizerError):
            linearize_session(s, lin_vocab, "ad", 32, loss_on="speaker")

    def test_oldest_turns_dropped_first(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "red red red"),
            Utterance("L", "blue blue"),
            Utterance("S", "green"),
            Utterance("L", "yellow"),
        ])
        # full stream is 1 + 4 + 3 + 2 + 2 = 12; cap 8 drops the first turn
        ls = linearize_session(s, v, "baseline", 8)
        want = [BOS] + ids_of(v, "blue", "blue") + [EOU, v.token_to_id["green"],
                                                    EOU, v.token_to_id["yellow"], EOU]
        assert ls.token_ids.tolist() == want
        assert ls.state_ids[0] == 1

    def test_bos_state_follows_first_kept_turn(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "red red red red red"),
            Utterance("L", "blue"),
        ])
        ls = linearize_session(s, v, "baseline", 4)
        # only the listener turn fits, so BOS adopts the listener state
        assert ls.token_ids.tolist() == [BOS, v.token_to_id["blue"], EOU]
        assert ls.state_ids.tolist() == [1, 1, 1]

    def test_final_utterance_front_trimmed(self, lin_vocab):
        v = lin_vocab
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "red blue green yellow"),
        ])
        ls = linearize_session(s, v, "baseline", 4)
        assert ls.token_ids.tolist() == [BOS] + ids_of(v, "green", "yellow") + [EOU]

    def test_tiny_budget_rejected(self, lin_vocab):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("S", "red")])
        with pytest.raises(TokenizerError):
            linearize_session(s, lin_vocab, "prepend", 3)

    def test_parallel_streams_equal_length(self, lin_vocab):
        s = DialogueSession(DEFAULT_EMOTIONS[1], [
            Utterance("S", "red blue green"),
            Utterance("L", "yellow red"),
        ])
        for mode in ("baseline", "prepend", "ad", "ad_de", "mtl", "adm"):
            ls = linearize_session(s, lin_vocab, mode, 16)
            n = len(ls.token_ids)
            assert len(ls.state_ids) == len(ls.position_ids) == len(ls.loss_mask) == n
            assert ls.position_ids.tolist() == list(range(n))

    def test_unknown_words_become_unk_with_loss(self, lin_vocab):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("S", "zebra")])
        ls = linearize_session(s, lin_vocab, "baseline", 8)
        assert ls.token_ids.tolist() == [BOS, UNK, EOU]
        assert ls.loss_mask.tolist() == [False, True, True]

    @given(
        st.lists(
            st.text(alphabet="redblugn ", min_size=1, max_size=12).filter(str.strip),
            min_size=1, max_size=6,
        ),
        st.integers(min_value=6, max_value=24),
    )
    @settings(max_examples=60, deadline=None)
    def test_invariants_hold_for_random_sessions(self, texts, cap):
        v = build_vocab(two_session_split(), emotion_names=["sad", "proud"])
        turns = [Utterance("S" if i % 2 == 0 else "L", t) for i, t in enumerate(texts)]
        s = DialogueSession(DEFAULT_EMOTIONS[0], turns)
        ls = linearize_session(s, v, "prepend", cap)
        assert 2 <= len(ls) <= cap
        assert ls.token_ids[0] == v.emo_id(0)
        assert ls.token_ids[1] == BOS
        assert ls.token_ids[-1] == EOU
        assert not ls.loss_mask[0] and not ls.loss_mask[1]
        assert PAD not in ls.token_ids
        assert set(np.unique(ls.state_ids)) <= {0, 1}
