"""Decoder-only transformer with additive emotion shifts on the logits.

The base network is a standard pre-norm causal transformer over word
ids, with learned positional and speaker-state embeddings summed into
the input.  Conditioning modes build on it without touching the trunk:

- ``baseline``    no emotion information at all.
- ``prepend``     an emotion token occupies position 0 of the stream.
- ``ad``          every step's logits get + proj(table[e]), a learned
                  per-emotion vocabulary bias.
- ``ad_de``       like ad but with separate table/proj pairs applied at
                  speaker-state and listener-state positions.
- ``mtl``         baseline trunk plus an auxiliary emotion classifier
                  read from the final hidden state, weighted into the
                  training loss.
- ``adm``         ad_de shifts and the mtl classifier together.

The shift enters as ``logits + offset * state_mask`` with {0,1} masks,
so zeroed tables, tied role parameters, or a zero auxiliary weight
reduce one mode to another exactly, not just approximately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict, replace
from pathlib import Path

import numpy as np

from .emotions import STATE_IDS
from .numerics import (
    ShapeError,
    Tensor,
    add,
    causal_mask_fill,
    cross_entropy,
    dropout,
    embedding_lookup,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    scale,
    slice_,
    softmax,
    swapaxes,
)
from .numerics.checkpoint import load_checkpoint, save_checkpoint
from .tokenizer import PAD, LinearizedSession, Vocab

MODES = ("baseline", "prepend", "ad", "ad_de", "mtl", "adm")

#: modes whose logits carry an additive emotion offset
OFFSET_MODES = ("ad", "ad_de", "adm")
#: modes with separate speaker/listener offset parameters
DUAL_MODES = ("ad_de", "adm")
#: modes with the auxiliary emotion classification head
CLF_MODES = ("mtl", "adm")


@dataclass(frozen=True)
class ModelConfig:
    mode: str
    vocab_size: int
    n_layers: int = 2
    n_heads: int = 2
    d_model: int = 64
    d_ff: int = 256
    max_seq_len: int = 128
    n_emotions: int = 32
    d_emotion: int = 32
    dropout_p: float = 0.1
    tie_embeddings: bool = True
    mtl_weight: float = 1.0
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}"
            )
        for name in ("vocab_size", "n_layers", "n_heads", "d_model", "d_ff",
                     "max_seq_len", "n_emotions", "d_emotion"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown model config keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class Batch:
    """Stacked, right-padded linearized sessions."""

    token_ids: np.ndarray     # (B, T) int64
    state_ids: np.ndarray     # (B, T) int64
    position_ids: np.ndarray  # (B, T) int64
    loss_mask: np.ndarray     # (B, T) bool
    emotion_ids: np.ndarray   # (B,) int64

    @property
    def n_sequences(self) -> int:
        return self.token_ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.token_ids.shape[1]


def make_batch(items: list[tuple[LinearizedSession, int]]) -> Batch:
    """Stack (linearized, emotion_id) pairs, padding on the right with PAD.

    Padding positions get state 0, position 0, and a False loss mask, so
    they are inert: causal attention keeps them invisible to every real
    position and the loss never selects them.
    """
    if not items:
        raise ValueError("cannot batch zero sessions")
    t_max = max(len(ls) for ls, _ in items)
    b = len(items)
    token_ids = np.full((b, t_max), PAD, dtype=np.int64)
    state_ids = np.zeros((b, t_max), dtype=np.int64)
    position_ids = np.zeros((b, t_max), dtype=np.int64)
    loss_mask = np.zeros((b, t_max), dtype=bool)
    emotion_ids = np.zeros(b, dtype=np.int64)
    for i, (ls, emo_id) in enumerate(items):
        n = len(ls)
        token_ids[i, :n] = ls.token_ids
        state_ids[i, :n] = ls.state_ids
        position_ids[i, :n] = ls.position_ids
        loss_mask[i, :n] = ls.loss_mask
        emotion_ids[i] = emo_id
    return Batch(token_ids, state_ids, position_ids, loss_mask, emotion_ids)


# ---------------------------------------------------------------------------
# initialization


def _xavier(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-limit, limit, size=(n_in, n_out))


def init_params(config: ModelConfig, seed: int) -> dict[str, Tensor]:
    """Fresh parameters as an ordered name -> Tensor dict.

    Draw order is fixed: trunk first, then mode extras, so two modes
    sharing a trunk and a seed start from identical trunk weights.
    """
    rng = np.random.default_rng(seed)
    c = config
    p: dict[str, np.ndarray] = {}

    p["wte"] = rng.normal(0.0, 0.02, size=(c.vocab_size, c.d_model))
    p["wpe"] = rng.normal(0.0, 0.02, size=(c.max_seq_len, c.d_model))
    p["wse"] = rng.normal(0.0, 0.02, size=(len(STATE_IDS), c.d_model))
    for i in range(c.n_layers):
        p[f"h{i}.ln1.g"] = np.ones(c.d_model)
        p[f"h{i}.ln1.b"] = np.zeros(c.d_model)
        for w in ("wq", "wk", "wv", "wo"):
            p[f"h{i}.attn.{w}"] = _xavier(rng, c.d_model, c.d_model)
        for bname in ("bq", "bk", "bv", "bo"):
            p[f"h{i}.attn.{bname}"] = np.zeros(c.d_model)
        p[f"h{i}.ln2.g"] = np.ones(c.d_model)
        p[f"h{i}.ln2.b"] = np.zeros(c.d_model)
        p[f"h{i}.mlp.wi"] = _xavier(rng, c.d_model, c.d_ff)
        p[f"h{i}.mlp.bi"] = np.zeros(c.d_ff)
        p[f"h{i}.mlp.wo"] = _xavier(rng, c.d_ff, c.d_model)
        p[f"h{i}.mlp.bo"] = np.zeros(c.d_model)
    p["lnf.g"] = np.ones(c.d_model)
    p["lnf.b"] = np.zeros(c.d_model)
    if not c.tie_embeddings:
        p["head.w"] = _xavier(rng, c.d_model, c.vocab_size)

    if c.mode == "ad":
        p["emo.table"] = rng.normal(0.0, 0.02, size=(c.n_emotions, c.d_emotion))
        p["emo.proj"] = _xavier(rng, c.d_emotion, c.vocab_size)
    elif c.mode in DUAL_MODES:
        p["emo.table_s"] = rng.normal(0.0, 0.02, size=(c.n_emotions, c.d_emotion))
        p["emo.table_l"] = rng.normal(0.0, 0.02, size=(c.n_emotions, c.d_emotion))
        p["emo.proj_s"] = _xavier(rng, c.d_emotion, c.vocab_size)
        p["emo.proj_l"] = _xavier(rng, c.d_emotion, c.vocab_size)
    if c.mode in CLF_MODES:
        p["clf.w"] = _xavier(rng, c.d_model, c.n_emotions)

    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}


def count_params(params: dict[str, Tensor]) -> int:
    return sum(p.data.size for p in params.values())


# ---------------------------------------------------------------------------
# forward


@dataclass
class ModelOutput:
    logits: Tensor             # (B, T, V), emotion shift already applied
    hidden: Tensor             # (B, T, D) final-norm hidden states
    emo_logits: Tensor | None  # (B, n_emotions) for classifier modes


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def emotion_offsets(
    params: dict[str, Tensor], config: ModelConfig, emotion_ids: np.ndarray
) -> dict[str, Tensor]:
    """Per-sample additive vocabulary offsets, keyed by role suffix.

    Returns {} for modes without offsets, {"": off} for the shared
    offset, or {"s": ..., "l": ...} for dual-role modes; each value has
    shape (B, 1, V).
    """
    b = len(emotion_ids)
    v = config.vocab_size
    if config.mode == "ad":
        g = embedding_lookup(params["emo.table"], emotion_ids)
        off = reshape(matmul(g, params["emo.proj"]), (b, 1, v))
        return {"": off}
    if config.mode in DUAL_MODES:
        out = {}
        for role in ("s", "l"):
            g = embedding_lookup(params[f"emo.table_{role}"], emotion_ids)
            out[role] = reshape(matmul(g, params[f"emo.proj_{role}"]), (b, 1, v))
        return out
    return {}


def forward(
    params: dict[str, Tensor],
    config: ModelConfig,
    batch: Batch,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> ModelOutput:
    """Full forward pass; dropout is active only when train=True."""
    c = config
    bsz, t = batch.token_ids.shape
    if t > c.max_seq_len:
        raise ShapeError(f"sequence length {t} exceeds max_seq_len {c.max_seq_len}")
    head_dim = c.d_model // c.n_heads

    x = add(
        add(
            embedding_lookup(params["wte"], batch.token_ids),
            embedding_lookup(params["wpe"], batch.position_ids),
        ),
        embedding_lookup(params["wse"], batch.state_ids),
    )
    x = dropout(x, c.dropout_p, train, rng)

    for i in range(c.n_layers):
        a = layer_norm(x, params[f"h{i}.ln1.g"], params[f"h{i}.ln1.b"], c.layer_norm_eps)
        q = _linear(a, params[f"h{i}.attn.wq"], params[f"h{i}.attn.bq"])
        k = _linear(a, params[f"h{i}.attn.wk"], params[f"h{i}.attn.bk"])
        v = _linear(a, params[f"h{i}.attn.wv"], params[f"h{i}.attn.bv"])
        # (B, T, D) -> (B, H, T, head_dim)
        q = swapaxes(reshape(q, (bsz, t, c.n_heads, head_dim)), 1, 2)
        k = swapaxes(reshape(k, (bsz, t, c.n_heads, head_dim)), 1, 2)
        v = swapaxes(reshape(v, (bsz, t, c.n_heads, head_dim)), 1, 2)
        scores = scale(matmul(q, swapaxes(k, 2, 3)), 1.0 / np.sqrt(head_dim))
        att = softmax(causal_mask_fill(scores), axis=-1)
        att = dropout(att, c.dropout_p, train, rng)
        o = reshape(swapaxes(matmul(att, v), 1, 2), (bsz, t, c.d_model))
        o = dropout(_linear(o, params[f"h{i}.attn.wo"], params[f"h{i}.attn.bo"]),
                    c.dropout_p, train, rng)
        x = add(x, o)

        m = layer_norm(x, params[f"h{i}.ln2.g"], params[f"h{i}.ln2.b"], c.layer_norm_eps)
        m = gelu(_linear(m, params[f"h{i}.mlp.wi"], params[f"h{i}.mlp.bi"]))
        m = _linear(m, params[f"h{i}.mlp.wo"], params[f"h{i}.mlp.bo"])
        m = dropout(m, c.dropout_p, train, rng)
        x = add(x, m)

    hidden = layer_norm(x, params["lnf.g"], params["lnf.b"], c.layer_norm_eps)
    if c.tie_embeddings:
        logits = matmul(hidden, swapaxes(params["wte"], 0, 1))
    else:
        logits = matmul(hidden, params["head.w"])

    offsets = emotion_offsets(params, c, batch.emotion_ids)
    if "" in offsets:
        logits = add(logits, offsets[""])
    elif offsets:
        state = batch.state_ids[..., None].astype(np.float64)
        mask_s = Tensor(1.0 - state)
        mask_l = Tensor(state)
        logits = add(logits, mul(offsets["s"], mask_s))
        logits = add(logits, mul(offsets["l"], mask_l))

    emo_logits = None
    if c.mode in CLF_MODES:
        last = _last_real_position(batch.token_ids)
        h_last = slice_(hidden, (np.arange(bsz), last))
        emo_logits = matmul(h_last, params["clf.w"])

    return ModelOutput(logits=logits, hidden=hidden, emo_logits=emo_logits)


def _last_real_position(token_ids: np.ndarray) -> np.ndarray:
    """Index of the final non-PAD token per row (row of all PAD is an error)."""
    real = token_ids != PAD
    if not real.any(axis=1).all():
        raise ShapeError("batch row contains only padding")
    t = token_ids.shape[1]
    return t - 1 - np.argmax(real[:, ::-1], axis=1)


@dataclass
class LossParts:
    total: Tensor
    lm: float
    aux: float | None = None


def compute_loss(
    params: dict[str, Tensor],
    config: ModelConfig,
    batch: Batch,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> LossParts:
    """Next-token cross-entropy, plus the weighted classifier term.

    Prediction at position t is scored against the token at t+1, so the
    mask is the loss mask shifted left by one.  When mtl_weight is zero
    the auxiliary term is skipped entirely, leaving the total
    bit-identical to the pure language-model loss.
    """
    out = forward(params, config, batch, train=train, rng=rng)
    t = batch.seq_len
    pred = slice_(out.logits, (slice(None), slice(0, t - 1), slice(None)))
    targets = batch.token_ids[:, 1:]
    mask = batch.loss_mask[:, 1:]
    lm = cross_entropy(pred, targets, mask)

    if config.mode in CLF_MODES and config.mtl_weight != 0.0:
        aux = cross_entropy(
            out.emo_logits,
            batch.emotion_ids,
            np.ones(batch.n_sequences, dtype=bool),
        )
        total = add(lm, scale(aux, config.mtl_weight))
        return LossParts(total=total, lm=float(lm.data), aux=float(aux.data))
    return LossParts(total=lm, lm=float(lm.data), aux=None)


def classify_emotion(
    params: dict[str, Tensor], config: ModelConfig, batch: Batch
) -> np.ndarray:
    """Posterior over emotion labels from the classifier head, (B, E)."""
    if config.mode not in CLF_MODES:
        raise ValueError(f"mode {config.mode!r} has no emotion classifier")
    out = forward(params, config, batch, train=False)
    return softmax(out.emo_logits, axis=-1).data


# ---------------------------------------------------------------------------
# persistence: <prefix>.ckpt (binary weights), <prefix>.json (config sidecar),
# <prefix>.vocab (token list)


def save_model(prefix, params: dict[str, Tensor], config: ModelConfig, vocab: Vocab) -> None:
    """Write weights, config sidecar, and vocabulary under a path prefix.

    The byte content is a pure function of (params, config, vocab), so
    identically trained models produce identical files.
    """
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    vocab_file = prefix.parent / (prefix.name + ".vocab")
    vocab.save(vocab_file)
    save_checkpoint(prefix.parent / (prefix.name + ".ckpt"), params,
                    meta={"model": config.to_dict()})
    sidecar = {
        "format_version": 1,
        "model": config.to_dict(),
        "vocab_file": vocab_file.name,
        "n_params": count_params(params),
    }
    with open(prefix.parent / (prefix.name + ".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(prefix) -> tuple[dict[str, Tensor], ModelConfig, Vocab]:
    """Load a saved model; shapes are validated against a fresh init."""
    prefix = Path(prefix)
    with open(prefix.parent / (prefix.name + ".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    config = ModelConfig.from_dict(sidecar["model"])
    vocab = Vocab.load(prefix.parent / sidecar["vocab_file"])
    if len(vocab.id_to_token) != config.vocab_size:
        raise ValueError(
            f"{prefix}: vocab file holds {len(vocab.id_to_token)} tokens "
            f"but config says {config.vocab_size}"
        )
    arrays, _ = load_checkpoint(prefix.parent / (prefix.name + ".ckpt"))
    expected = init_params(config, seed=0)
    if set(arrays) != set(expected):
        missing = sorted(set(expected) - set(arrays))
        surplus = sorted(set(arrays) - set(expected))
        raise ValueError(
            f"{prefix}: checkpoint parameter names do not match mode "
            f"{config.mode!r} (missing {missing}, unexpected {surplus})"
        )
    params: dict[str, Tensor] = {}
    for name, ref in expected.items():
        arr = arrays[name]
        if arr.shape != ref.data.shape:
            raise ValueError(
                f"{prefix}: parameter {name!r} has shape {arr.shape}, "
                f"expected {ref.data.shape}"
            )
        params[name] = Tensor(arr, requires_grad=True)
    return params, config, vocab


def tied_dual_params(params: dict[str, Tensor]) -> dict[str, Tensor]:
    """Copy of dual-role parameters with listener tied to speaker."""
    out = {k: Tensor(v.data.copy(), requires_grad=v.requires_grad) for k, v in params.items()}
    out["emo.table_l"] = Tensor(out["emo.table_s"].data.copy(), requires_grad=True)
    out["emo.proj_l"] = Tensor(out["emo.proj_s"].data.copy(), requires_grad=True)
    return out


def with_mode(config: ModelConfig, mode: str) -> ModelConfig:
    return replace(config, mode=mode)
