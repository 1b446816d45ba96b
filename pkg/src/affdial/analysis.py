"""Inspection of what the learned emotion conditioning encodes.

The additive shift assigns every vocabulary word a per-emotion logit
offset, so the words an emotion "likes" can be read directly off the
model: the top of the offset vector is the emotion's nearest-neighbour
word list.  An alternative view ranks words by cosine between the
emotion vector and the word's column of the projection, which ignores
offset magnitude.  For dual-role models both readings exist per role,
and the divergence between the two roles' offsets is itself a finding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emotions import EmotionLabel
from .model import DUAL_MODES, ModelConfig
from .numerics import Tensor
from .tokenizer import Vocab

NEIGHBOR_METRICS = ("offset", "cosine")


def emotion_logit_offset(
    params: dict[str, Tensor],
    config: ModelConfig,
    emotion_id: int,
    role: str = "l",
) -> np.ndarray:
    """The (V,) additive logit vector for one emotion.

    ``role`` ("s" or "l") selects the parameter pair in dual-role
    modes and is ignored for the shared-offset mode.
    """
    if not 0 <= emotion_id < config.n_emotions:
        raise ValueError(f"emotion id {emotion_id} out of range [0, {config.n_emotions})")
    if config.mode == "ad":
        return params["emo.table"].data[emotion_id] @ params["emo.proj"].data
    if config.mode in DUAL_MODES:
        if role not in ("s", "l"):
            raise ValueError(f"role must be 's' or 'l', got {role!r}")
        table = params[f"emo.table_{role}"].data
        proj = params[f"emo.proj_{role}"].data
        return table[emotion_id] @ proj
    raise ValueError(f"mode {config.mode!r} has no emotion offset parameters")


@dataclass(frozen=True)
class Neighbor:
    token: str
    token_id: int
    score: float


def nearest_neighbors(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    emotion: EmotionLabel,
    k: int = 10,
    metric: str = "offset",
    role: str = "l",
) -> list[Neighbor]:
    """Top-k vocabulary words closest to an emotion's conditioning.

    metric="offset" ranks by the additive logit offset (what the shift
    actually boosts); metric="cosine" ranks by direction only, the
    cosine between each word's projection column and the emotion
    vector.  Reserved tokens are excluded.  Ties break toward lower
    token ids.
    """
    if metric not in NEIGHBOR_METRICS:
        raise ValueError(f"metric must be one of {NEIGHBOR_METRICS}, got {metric!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if metric == "offset":
        scores = emotion_logit_offset(params, config, emotion.id, role=role)
    else:
        if config.mode == "ad":
            table = params["emo.table"].data
            proj = params["emo.proj"].data
        elif config.mode in DUAL_MODES:
            if role not in ("s", "l"):
                raise ValueError(f"role must be 's' or 'l', got {role!r}")
            table = params[f"emo.table_{role}"].data
            proj = params[f"emo.proj_{role}"].data
        else:
            raise ValueError(f"mode {config.mode!r} has no emotion offset parameters")
        g = table[emotion.id]
        gn = np.linalg.norm(g)
        cols = np.linalg.norm(proj, axis=0)
        denom = np.maximum(gn * cols, 1e-300)
        scores = (g @ proj) / denom

    first_word = vocab.n_special
    word_scores = scores[first_word:]
    n_words = word_scores.shape[0]
    take = min(k, n_words)
    order = np.argsort(-word_scores, kind="stable")[:take]
    return [
        Neighbor(
            token=vocab.id_to_token[first_word + int(i)],
            token_id=first_word + int(i),
            score=float(word_scores[int(i)]),
        )
        for i in order
    ]


@dataclass(frozen=True)
class RoleDivergence:
    emotion: str
    cosine: float
    l2: float


def offset_divergence(
    params: dict[str, Tensor], config: ModelConfig, emotions
) -> list[RoleDivergence]:
    """Per-emotion disagreement between speaker and listener offsets.

    Cosine near 1 means the two roles boost the same words; a large L2
    with low cosine means the dual parameterization learned genuinely
    different vocabularies per role.
    """
    if config.mode not in DUAL_MODES:
        raise ValueError(f"mode {config.mode!r} has a single offset; no role divergence")
    out = []
    for emo in emotions:
        off_s = emotion_logit_offset(params, config, emo.id, role="s")
        off_l = emotion_logit_offset(params, config, emo.id, role="l")
        ns = np.linalg.norm(off_s)
        nl = np.linalg.norm(off_l)
        cos = float(off_s @ off_l / (ns * nl)) if ns > 0 and nl > 0 else 0.0
        out.append(RoleDivergence(
            emotion=emo.name,
            cosine=cos,
            l2=float(np.linalg.norm(off_s - off_l)),
        ))
    return out


def render_neighbors(emotion: EmotionLabel, neighbors: list[Neighbor]) -> str:
    lines = [f"{emotion.name}:"]
    for nb in neighbors:
        lines.append(f"  {nb.token}\t{nb.score:.4f}")
    return "\n".join(lines)
