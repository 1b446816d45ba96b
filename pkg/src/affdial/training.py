"""Mini-batch Adam training with deterministic shuffling and early stop.

All randomness is derived from the seed: a fresh epoch shuffle rng is
spawned as default_rng([seed, epoch]) and one dropout rng as
default_rng([seed, 1 << 20]), so two runs with equal seeds take
identical steps and finish with bitwise-identical parameters.

Validation uses listener-token perplexity; the best snapshot is kept
and restored when patience runs out.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusSplit
from .model import Batch, ModelConfig, compute_loss, init_params, make_batch
from .numerics import AdamState, Tensor, adam_step, backward, clip_global_norm, zero_grads
from .tokenizer import Vocab, linearize_session


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; learning rate or data is pathological."""


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    max_steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float = 1.0
    eval_every: int = 200
    patience: int = 5
    loss_on: str = "all"  # which turns carry LM loss: "all" | "listener"
    log_every: int = 50

    def __post_init__(self):
        if self.loss_on not in ("all", "listener"):
            raise ValueError(f"loss_on must be 'all' or 'listener', got {self.loss_on!r}")
        if self.max_steps <= 0 or self.batch_size <= 0:
            raise ValueError("max_steps and batch_size must be positive")


@dataclass
class HistoryRow:
    step: int
    train_loss: float
    valid_ppl: float | None = None


@dataclass
class TrainResult:
    params: dict[str, Tensor]
    history: list[HistoryRow] = field(default_factory=list)
    steps_run: int = 0
    best_valid_ppl: float | None = None
    stopped_early: bool = False
    final_train_loss: float | None = None
    wall_seconds: float = 0.0


def linearize_split(
    split: CorpusSplit, vocab: Vocab, mode: str, max_seq_len: int, loss_on: str = "all"
) -> list:
    return [
        (linearize_session(s, vocab, mode, max_seq_len, loss_on=loss_on), s.emotion.id)
        for s in split.sessions
    ]


def iter_batches(items: list, batch_size: int, rng: np.random.Generator | None):
    """Yield Batches over a shuffled copy of items; None rng keeps order."""
    order = np.arange(len(items))
    if rng is not None:
        order = rng.permutation(len(items))
    for start in range(0, len(items), batch_size):
        chunk = [items[i] for i in order[start : start + batch_size]]
        yield make_batch(chunk)


def masked_nll(
    params: dict[str, Tensor],
    config: ModelConfig,
    items: list,
    batch_size: int = 16,
) -> tuple[float, int]:
    """Total next-token negative log-likelihood and token count."""
    total = 0.0
    count = 0
    for batch in iter_batches(items, batch_size, rng=None):
        n = int(batch.loss_mask[:, 1:].sum())
        if n == 0:
            continue
        parts = compute_loss(params, config, batch, train=False)
        total += parts.lm * n
        count += n
    return total, count


def eval_perplexity(
    params: dict[str, Tensor],
    config: ModelConfig,
    vocab: Vocab,
    split: CorpusSplit,
    tokens: str = "listener",
    batch_size: int = 16,
) -> float:
    """exp(mean NLL) over the selected turns of a corpus split."""
    items = linearize_split(split, vocab, config.mode, config.max_seq_len, loss_on=tokens)
    total, count = masked_nll(params, config, items, batch_size=batch_size)
    if count == 0:
        raise ValueError(f"no {tokens} tokens to score in split {split.name!r}")
    return float(np.exp(total / count))


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_split: CorpusSplit,
    vocab: Vocab,
    valid_split: CorpusSplit | None = None,
    params: dict[str, Tensor] | None = None,
    on_step=None,
) -> TrainResult:
    """Run up to max_steps of Adam; returns the best-validation snapshot.

    Without a validation split the loop just runs max_steps.  on_step,
    when given, is called as on_step(step, loss) after each update.
    """
    tc = train_config
    mc = model_config
    if params is None:
        params = init_params(mc, seed=tc.seed)
    opt = AdamState(params)
    drop_rng = np.random.default_rng([tc.seed, 1 << 20])
    items = linearize_split(train_split, vocab, mc.mode, mc.max_seq_len, loss_on=tc.loss_on)
    if not items:
        raise ValueError("training split has no sessions")

    result = TrainResult(params=params)
    best: dict[str, np.ndarray] | None = None
    best_ppl = np.inf
    stale = 0
    step = 0
    epoch = 0
    t0 = time.time()
    done = False

    while not done:
        shuffle_rng = np.random.default_rng([tc.seed, epoch])
        for batch in iter_batches(items, tc.batch_size, shuffle_rng):
            zero_grads(params)
            parts = compute_loss(params, mc, batch, train=True, rng=drop_rng)
            loss = float(parts.total.data)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss {loss} at step {step}")
            backward(parts.total)
            if tc.clip_norm > 0:
                clip_global_norm(params, tc.clip_norm)
            adam_step(params, opt, lr=tc.lr, beta1=tc.beta1, beta2=tc.beta2)
            step += 1
            result.final_train_loss = loss
            if on_step is not None:
                on_step(step, loss)

            record_valid: float | None = None
            if valid_split is not None and step % tc.eval_every == 0:
                record_valid = eval_perplexity(params, mc, vocab, valid_split,
                                               tokens="listener", batch_size=tc.batch_size)
                if record_valid < best_ppl:
                    best_ppl = record_valid
                    best = {k: p.data.copy() for k, p in params.items()}
                    stale = 0
                else:
                    stale += 1
                if stale > tc.patience:
                    result.stopped_early = True
                    done = True
            if step % tc.log_every == 0 or record_valid is not None or step == tc.max_steps:
                result.history.append(HistoryRow(step, loss, record_valid))
            if step >= tc.max_steps:
                done = True
            if done:
                break
        epoch += 1

    if best is not None:
        for k, p in params.items():
            p.data = best[k]
        result.best_valid_ppl = float(best_ppl)
    result.steps_run = step
    result.wall_seconds = time.time() - t0
    return result


def write_history(path, history: list[HistoryRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "train_loss", "valid_ppl"])
        for row in history:
            w.writerow([row.step, f"{row.train_loss:.6f}",
                        "" if row.valid_ppl is None else f"{row.valid_ppl:.6f}"])


def read_history(path) -> list[HistoryRow]:
    out: list[HistoryRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.append(HistoryRow(
                step=int(rec["step"]),
                train_loss=float(rec["train_loss"]),
                valid_ppl=float(rec["valid_ppl"]) if rec["valid_ppl"] else None,
            ))
    return out
