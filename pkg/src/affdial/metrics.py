"""Automatic response-quality metrics.

Perplexity comes from the model's own masked next-token likelihood.
The reference-based metrics are corpus BLEU with one reference per
hypothesis, three bag-of-words embedding similarities (average, greedy,
extrema), and DIST-n distinct-n-gram ratios.  Pairs where an embedding
metric is undefined (no in-vocabulary words on one side) are skipped
and counted, not zero-filled.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
import numpy as np

from .corpus import CorpusFormatError, DialogueSession, Utterance, session_from_dict, session_to_dict
from .emotions import ROLE_LISTENER
from .tokenizer import word_tokenize
from .training import eval_perplexity  # re-exported: PPL is a metric too

__all__ = [
    "EvalPair", "WordVectors", "MetricReport",
    "bleu", "bow_average", "bow_greedy", "bow_extrema", "dist_n",
    "corpus_bow", "eval_perplexity", "evaluate_pairs",
    "make_eval_pairs", "load_eval_pairs", "save_eval_pairs",
]


# ---------------------------------------------------------------------------
# evaluation pairs


@dataclass(frozen=True)
class EvalPair:
    """A dialogue context (ending on a speaker turn) and the gold reply."""

    context: DialogueSession
    reference: str

    def full_session(self) -> DialogueSession:
        turns = list(self.context.turns) + [Utterance(ROLE_LISTENER, self.reference)]
        return DialogueSession(self.context.emotion, turns)


def make_eval_pairs(sessions) -> list[EvalPair]:
    """One pair per session: context up to the last listener turn.

    Sessions without a listener turn are skipped.
    """
    pairs = []
    for session in sessions:
        last_l = max(
            (i for i, t in enumerate(session.turns) if t.role == ROLE_LISTENER),
            default=None,
        )
        if last_l is None:
            continue
        context = DialogueSession(session.emotion, session.turns[:last_l])
        pairs.append(EvalPair(context=context, reference=session.turns[last_l].text))
    return pairs


def save_eval_pairs(path, pairs: list[EvalPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            rec = session_to_dict(p.context)
            rec["reference"] = p.reference
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_eval_pairs(path) -> list[EvalPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON") from exc
            if "reference" not in rec:
                raise CorpusFormatError(f"{path}:{lineno}: missing 'reference'")
            reference = rec.pop("reference")
            context = session_from_dict(rec, where=f"{path}:{lineno}")
            pairs.append(EvalPair(context=context, reference=str(reference)))
    if not pairs:
        raise CorpusFormatError(f"{path}: no evaluation pairs")
    return pairs


# ---------------------------------------------------------------------------
# corpus BLEU


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: list[str],
    references: list[str],
    max_n: int = 4,
    smoothing: str = "add1",
) -> float:
    """Corpus BLEU, one reference per hypothesis, brevity-penalized.

    smoothing="add1" adds one to the clipped-match and total counts for
    n >= 2 (unigram precision is left raw); "none" uses raw counts, so
    any empty precision zeroes the score.
    """
    if smoothing not in ("add1", "none"):
        raise ValueError(f"smoothing must be 'add1' or 'none', got {smoothing!r}")
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise ValueError("bleu of an empty corpus")
    hyp_len = 0
    ref_len = 0
    matches = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    for hyp, ref in zip(hypotheses, references):
        h = word_tokenize(hyp)
        r = word_tokenize(ref)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            hv = _ngrams(h, n)
            rv = _ngrams(r, n)
            matches[n] += sum(min(c, rv[g]) for g, c in hv.items())
            totals[n] += max(len(h) - n + 1, 0)
    if hyp_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_n + 1):
        m, t = matches[n], totals[n]
        if smoothing == "add1" and n >= 2:
            m, t = m + 1, t + 1
        if m == 0 or t == 0:
            return 0.0
        log_sum += math.log(m / t)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_sum / max_n)


# ---------------------------------------------------------------------------
# bag-of-words embedding metrics


class WordVectors:
    """Fixed word embeddings backing the bag-of-words metrics."""

    def __init__(self, vectors: dict[str, np.ndarray]):
        if not vectors:
            raise ValueError("empty word-vector table")
        dims = {v.shape for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent vector shapes: {sorted(dims)}")
        self.vectors = {w: np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        self.dim = next(iter(vectors.values())).shape[0]

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def lookup(self, tokens: list[str]) -> np.ndarray:
        """Matrix of vectors for the in-vocabulary tokens, (n, dim)."""
        rows = [self.vectors[t] for t in tokens if t in self.vectors]
        if not rows:
            return np.zeros((0, self.dim))
        return np.stack(rows)

    @classmethod
    def load(cls, path) -> "WordVectors":
        """Read whitespace-separated 'word v1 ... vd' lines.

        A leading header line of two integer fields (count, dim) is
        tolerated and skipped.
        """
        vectors: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.rstrip("\n").split(" ")
                if lineno == 1 and len(parts) == 2:
                    continue
                if len(parts) < 2:
                    continue
                word = parts[0]
                try:
                    vec = np.asarray([float(x) for x in parts[1:] if x], dtype=np.float64)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed vector line") from exc
                vectors[word] = vec
        return cls(vectors)

    @classmethod
    def random(cls, words, dim: int = 50, seed: int = 0) -> "WordVectors":
        """Deterministic unit-normal vectors, useful when no trained
        embeddings are on hand; similarity numbers are then only
        self-consistent, not meaningful."""
        rng = np.random.default_rng(seed)
        ordered = sorted(set(words))
        mat = rng.normal(size=(len(ordered), dim))
        return cls({w: mat[i] for i, w in enumerate(ordered)})


def _cosine(a: np.ndarray, b: np.ndarray) -> float | None:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.dot(a, b) / (na * nb))


def _pair_matrices(hyp: str, ref: str, wv: WordVectors):
    h = wv.lookup(word_tokenize(hyp))
    r = wv.lookup(word_tokenize(ref))
    if h.shape[0] == 0 or r.shape[0] == 0:
        return None
    return h, r


def bow_average(hyp: str, ref: str, wv: WordVectors) -> float | None:
    """Cosine of the mean word vectors; None when a side has no vectors."""
    mats = _pair_matrices(hyp, ref, wv)
    if mats is None:
        return None
    h, r = mats
    return _cosine(h.mean(axis=0), r.mean(axis=0))


def _greedy_directed(a: np.ndarray, b: np.ndarray) -> float:
    # mean over rows of a of the best cosine against rows of b
    an = a / np.linalg.norm(a, axis=1, keepdims=True).clip(min=1e-300)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True).clip(min=1e-300)
    return float((an @ bn.T).max(axis=1).mean())


def bow_greedy(hyp: str, ref: str, wv: WordVectors, direction: str = "both") -> float | None:
    """Greedy token matching; "both" symmetrizes the two directions,
    "hyp2ref" scores hypothesis tokens against the reference only."""
    if direction not in ("both", "hyp2ref"):
        raise ValueError(f"direction must be 'both' or 'hyp2ref', got {direction!r}")
    mats = _pair_matrices(hyp, ref, wv)
    if mats is None:
        return None
    h, r = mats
    fwd = _greedy_directed(h, r)
    if direction == "hyp2ref":
        return fwd
    return 0.5 * (fwd + _greedy_directed(r, h))


def _extrema_vector(mat: np.ndarray) -> np.ndarray:
    # per dimension, the entry with the largest magnitude, sign intact
    idx = np.abs(mat).argmax(axis=0)
    return mat[idx, np.arange(mat.shape[1])]


def bow_extrema(hyp: str, ref: str, wv: WordVectors) -> float | None:
    mats = _pair_matrices(hyp, ref, wv)
    if mats is None:
        return None
    h, r = mats
    return _cosine(_extrema_vector(h), _extrema_vector(r))


def corpus_bow(
    hypotheses: list[str],
    references: list[str],
    wv: WordVectors,
    greedy_direction: str = "both",
) -> dict:
    """Mean of each BOW metric over the pairs where it is defined."""
    sums = {"average": 0.0, "greedy": 0.0, "extrema": 0.0}
    counts = {"average": 0, "greedy": 0, "extrema": 0}
    for hyp, ref in zip(hypotheses, references):
        for name, fn in (
            ("average", lambda: bow_average(hyp, ref, wv)),
            ("greedy", lambda: bow_greedy(hyp, ref, wv, greedy_direction)),
            ("extrema", lambda: bow_extrema(hyp, ref, wv)),
        ):
            score = fn()
            if score is not None:
                sums[name] += score
                counts[name] += 1
    out = {}
    for name in sums:
        out[name] = sums[name] / counts[name] if counts[name] else None
        out[f"n_{name}"] = counts[name]
    return out


# ---------------------------------------------------------------------------
# distinct n-grams


def dist_n(texts: list[str], n: int) -> float | None:
    """Corpus-level distinct-n: unique n-grams over total n-grams."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = set()
    total = 0
    for text in texts:
        toks = word_tokenize(text)
        for i in range(len(toks) - n + 1):
            seen.add(tuple(toks[i : i + n]))
            total += 1
    if total == 0:
        return None
    return len(seen) / total


# ---------------------------------------------------------------------------
# whole-report evaluation


@dataclass
class MetricReport:
    n_pairs: int
    ppl: float | None
    bleu: float
    bow_average: float | None
    bow_greedy: float | None
    bow_extrema: float | None
    dist1: float | None
    dist2: float | None
    skipped_bow: int = 0
    hypotheses: list[str] = field(default_factory=list)

    def rows(self) -> list[tuple[str, str]]:
        def fmt(x):
            return "n/a" if x is None else f"{x:.4f}"

        return [
            ("n_pairs", str(self.n_pairs)),
            ("ppl", fmt(self.ppl)),
            ("bleu", fmt(self.bleu)),
            ("bow_average", fmt(self.bow_average)),
            ("bow_greedy", fmt(self.bow_greedy)),
            ("bow_extrema", fmt(self.bow_extrema)),
            ("dist1", fmt(self.dist1)),
            ("dist2", fmt(self.dist2)),
        ]

    def render(self) -> str:
        return "\n".join(f"{k}\t{v}" for k, v in self.rows())

    def to_dict(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "ppl": self.ppl,
            "bleu": self.bleu,
            "bow_average": self.bow_average,
            "bow_greedy": self.bow_greedy,
            "bow_extrema": self.bow_extrema,
            "dist1": self.dist1,
            "dist2": self.dist2,
            "skipped_bow": self.skipped_bow,
        }


def evaluate_pairs(
    params,
    config,
    vocab,
    pairs: list[EvalPair],
    wv: WordVectors,
    decode=None,
    greedy_direction: str = "both",
    with_ppl: bool = True,
    on_pair=None,
) -> MetricReport:
    """Generate a response per pair and score against the references."""
    from .corpus import CorpusSplit
    from .decoding import DecodeConfig, generate_response

    decode = decode or DecodeConfig()
    hypotheses = []
    for i, pair in enumerate(pairs):
        hyp = generate_response(params, config, vocab, pair.context, decode,
                                emotion=pair.context.emotion)
        hypotheses.append(hyp)
        if on_pair is not None:
            on_pair(i, hyp)
    references = [p.reference for p in pairs]
    ppl = None
    if with_ppl:
        split = CorpusSplit("test", [p.full_session() for p in pairs])
        ppl = eval_perplexity(params, config, vocab, split, tokens="listener")
    bow = corpus_bow(hypotheses, references, wv, greedy_direction)
    n_defined = min(bow["n_average"], bow["n_greedy"], bow["n_extrema"])
    return MetricReport(
        n_pairs=len(pairs),
        ppl=ppl,
        bleu=bleu(hypotheses, references),
        bow_average=bow["average"],
        bow_greedy=bow["greedy"],
        bow_extrema=bow["extrema"],
        dist1=dist_n(hypotheses, 1),
        dist2=dist_n(hypotheses, 2),
        skipped_bow=len(pairs) - n_defined,
        hypotheses=hypotheses,
    )
