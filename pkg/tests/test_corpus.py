"""Corpus loading, validation, stats, and the synthetic marker corpus."""

import json

import pytest

from affdial.corpus import (
    CorpusFormatError,
    CorpusSplit,
    DialogueSession,
    SessionInvariantError,
    Utterance,
    convert_empdial_csv,
    corpus_stats,
    load_corpus,
    make_synthetic_corpus,
    marker_word,
    probe_prefixes,
    save_corpus,
    session_from_dict,
    session_to_dict,
)
from affdial.emotions import DEFAULT_EMOTIONS


def sess(*texts, emotion=DEFAULT_EMOTIONS[0]):
    roles = ["S", "L"] * ((len(texts) + 1) // 2)
    return DialogueSession(emotion, [Utterance(r, t) for r, t in zip(roles, texts)])


class TestValidation:
    def test_valid_session_passes(self):
        sess("hello there", "hi yourself").validate()

    def test_trailing_speaker_is_valid(self):
        sess("hello", "hi", "still here").validate()

    def test_empty_session_rejected(self):
        with pytest.raises(SessionInvariantError, match="no turns"):
            DialogueSession(DEFAULT_EMOTIONS[0], []).validate()

    def test_unknown_role_rejected(self):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("X", "hi")])
        with pytest.raises(SessionInvariantError, match="role"):
            s.validate()

    def test_wrong_alternation_rejected(self):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [
            Utterance("S", "a"), Utterance("S", "b"),
        ])
        with pytest.raises(SessionInvariantError, match="alternate"):
            s.validate()

    def test_listener_first_rejected(self):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("L", "hi")])
        with pytest.raises(SessionInvariantError):
            s.validate()

    def test_blank_text_rejected(self):
        s = DialogueSession(DEFAULT_EMOTIONS[0], [Utterance("S", "   ")])
        with pytest.raises(SessionInvariantError, match="empty text"):
            s.validate()

    def test_bad_split_name_rejected(self):
        with pytest.raises(ValueError):
            CorpusSplit("dev", [])


class TestSerialization:
    def test_dict_roundtrip(self):
        s = sess("i am fine", "glad to hear")
        back = session_from_dict(session_to_dict(s))
        assert back.emotion.name == s.emotion.name
        assert [(t.role, t.text) for t in back.turns] == [(t.role, t.text) for t in s.turns]

    def test_unknown_emotion_rejected(self):
        from affdial.emotions import UnknownEmotionError

        rec = {"emotion": "blissful", "turns": [{"role": "S", "text": "hi"}]}
        with pytest.raises(UnknownEmotionError, match="blissful"):
            session_from_dict(rec)

    def test_missing_field_reported(self):
        with pytest.raises(CorpusFormatError, match="missing field"):
            session_from_dict({"turns": []})

    def test_file_roundtrip(self, tmp_path):
        split = make_synthetic_corpus(3, 2, seed=0)
        path = tmp_path / "c.jsonl"
        save_corpus(split, path)
        back = load_corpus(path, "train")
        assert len(back.sessions) == len(split.sessions)
        for a, b in zip(back.sessions, split.sessions):
            assert a.emotion.name == b.emotion.name
            assert [(t.role, t.text) for t in a.turns] == [(t.role, t.text) for t in b.turns]

    def test_load_reports_line_numbers(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        ok = json.dumps(session_to_dict(sess("hi", "yo")))
        path.write_text(ok + "\n{not json\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError, match=":2"):
            load_corpus(path, "train")

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "gap.jsonl"
        ok = json.dumps(session_to_dict(sess("hi", "yo")))
        path.write_text("\n" + ok + "\n\n", encoding="utf-8")
        assert len(load_corpus(path, "train").sessions) == 1

    def test_drop_trailing_speaker_flag(self, tmp_path):
        split = CorpusSplit("train", [sess("a", "b"), sess("a", "b", "c")])
        path = tmp_path / "t.jsonl"
        save_corpus(split, path)
        assert len(load_corpus(path, "train").sessions) == 2
        kept = load_corpus(path, "train", drop_trailing_speaker=True).sessions
        assert len(kept) == 1
        assert kept[0].turns[-1].role == "L"


class TestStats:
    def test_counts_exact(self):
        split = CorpusSplit("train", [
            sess("one two three", "four"),
            sess("five, six!", emotion=DEFAULT_EMOTIONS[1]),
        ])
        st = corpus_stats(split)
        assert st.n_sessions == 2
        assert st.n_turns == 3
        # "five, six!" tokenizes to five , six ! = 4
        assert st.n_tokens == 3 + 1 + 4
        assert st.emotion_histogram == {
            DEFAULT_EMOTIONS[0].name: 1,
            DEFAULT_EMOTIONS[1].name: 1,
        }

    def test_to_dict_keys(self):
        d = corpus_stats(CorpusSplit("train", [sess("hi", "yo")])).to_dict()
        assert set(d) == {"n_sessions", "n_turns", "n_tokens", "emotion_histogram"}


class TestSynthetic:
    def test_deterministic(self):
        a = make_synthetic_corpus(4, 3, seed=7)
        b = make_synthetic_corpus(4, 3, seed=7)
        assert [
            (s.emotion.name, [(t.role, t.text) for t in s.turns]) for s in a.sessions
        ] == [
            (s.emotion.name, [(t.role, t.text) for t in s.turns]) for s in b.sessions
        ]

    def test_seed_changes_content(self):
        a = make_synthetic_corpus(4, 3, seed=7)
        b = make_synthetic_corpus(4, 3, seed=8)
        texts = lambda split: [t.text for s in split.sessions for t in s.turns]
        assert texts(a) != texts(b)

    def test_every_turn_carries_marker(self):
        split = make_synthetic_corpus(5, 4, seed=1)
        for s in split.sessions:
            m = marker_word(s.emotion)
            for t in s.turns:
                assert m in t.text.split()

    def test_first_turn_matches_probe_prefix(self):
        split = make_synthetic_corpus(6, 3, seed=9)
        probes = probe_prefixes()
        for s in split.sessions:
            assert any(s.turns[0].text.startswith(p) for p in probes)
            # marker is the first token after the probe prefix
            assert s.turns[0].text.split()[2] == marker_word(s.emotion)

    def test_sessions_validate(self):
        for s in make_synthetic_corpus(32, 2, seed=3).sessions:
            s.validate()

    def test_label_cap_enforced(self):
        with pytest.raises(ValueError, match="32"):
            make_synthetic_corpus(33, 1, seed=0)

    def test_counts(self):
        split = make_synthetic_corpus(3, 5, seed=0)
        assert len(split.sessions) == 15


class TestCsvImport:
    def test_convert_small_csv(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(
            "conv_id,utterance_idx,context,utterance\n"
            "c1,0,proud,i got the job_comma_ finally\n"
            "c1,1,proud,congrats to you\n"
            "c2,0,sad,my cat ran away\n"
            "c2,1,sad,oh no i am sorry\n",
            encoding="utf-8",
        )
        sessions = convert_empdial_csv(path)
        assert len(sessions) == 2
        assert sessions[0].emotion.name == "proud"
        assert sessions[0].turns[0].text == "i got the job, finally"
        assert sessions[0].turns[0].role == "S"
        assert sessions[0].turns[1].role == "L"

    def test_missing_column_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("conv_id,utterance_idx\nc1,0\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError, match="missing column"):
            convert_empdial_csv(path)
