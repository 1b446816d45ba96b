"""Fast built-in consistency checks, runnable from the CLI.

These are smaller versions of the repository's test suite: sampled
gradient verification, exact mode reductions, causality spot checks,
and the frozen statistics values.  The whole battery is meant to run
in seconds on any machine to confirm an installation behaves.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import make_synthetic_corpus
from .evalstats import paired_t_test, two_proportion_z_test
from .metrics import bleu
from .model import (
    Batch,
    ModelConfig,
    compute_loss,
    forward,
    init_params,
    make_batch,
    tied_dual_params,
)
from .numerics import Tensor, grad_check, load_checkpoint, save_checkpoint
from .tokenizer import build_vocab, linearize_session, word_tokenize


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _tiny_setup(mode: str, seed: int = 0):
    split = make_synthetic_corpus(n_emotions=2, sessions_per_emotion=1, seed=seed)
    vocab = build_vocab(split)
    config = ModelConfig(
        mode=mode, vocab_size=len(vocab), n_layers=1, n_heads=2, d_model=8,
        d_ff=16, max_seq_len=48, n_emotions=2, d_emotion=4, dropout_p=0.0,
    )
    params = init_params(config, seed=seed + 1)
    items = [
        (linearize_session(s, vocab, mode, config.max_seq_len), s.emotion.id)
        for s in split.sessions
    ]
    return vocab, config, params, make_batch(items)


def check_tokenizer() -> CheckResult:
    toks = word_tokenize("I'm happy! ALL-CAPS 42x")
    want = ["i", "'m", "happy", "!", "all", "-", "caps", "42x"]
    ok = toks == want
    return CheckResult("tokenizer", ok, f"{toks}")


def check_gradients() -> CheckResult:
    _, config, params, batch = _tiny_setup("adm")
    fn = lambda: compute_loss(params, config, batch).total
    rep = grad_check(fn, params, eps=1e-5, tol=1e-4, max_entries_per_param=8, seed=0)
    return CheckResult(
        "gradients", rep.ok(1e-4),
        f"max rel err {rep.max_rel_err:.2e} over {rep.n_checked} sampled entries",
    )


def check_mode_reduction() -> CheckResult:
    _, config_de, params_de, batch = _tiny_setup("ad_de")
    params_de = tied_dual_params(params_de)
    from .model import with_mode

    config_ad = with_mode(config_de, "ad")
    params_ad = {k: v for k, v in params_de.items()
                 if not k.startswith("emo.")}
    params_ad["emo.table"] = Tensor(params_de["emo.table_s"].data.copy(), requires_grad=True)
    params_ad["emo.proj"] = Tensor(params_de["emo.proj_s"].data.copy(), requires_grad=True)
    l_de = forward(params_de, config_de, batch).logits.data
    l_ad = forward(params_ad, config_ad, batch).logits.data
    ok = np.array_equal(l_de, l_ad)
    return CheckResult("mode-reduction", ok,
                       "tied dual offsets reproduce the shared offset exactly"
                       if ok else "tied dual offsets DIVERGED from shared offset")


def check_causality(n_trials: int = 20) -> CheckResult:
    _, config, params, batch = _tiny_setup("ad")
    base = forward(params, config, batch).logits.data
    rng = np.random.default_rng(7)
    t = batch.seq_len
    for _ in range(n_trials):
        j = int(rng.integers(1, t))
        mutated = Batch(
            token_ids=batch.token_ids.copy(),
            state_ids=batch.state_ids,
            position_ids=batch.position_ids,
            loss_mask=batch.loss_mask,
            emotion_ids=batch.emotion_ids,
        )
        mutated.token_ids[0, j] = (mutated.token_ids[0, j] + 1) % config.vocab_size
        got = forward(params, config, mutated).logits.data
        if not np.array_equal(got[0, :j], base[0, :j]):
            return CheckResult("causality", False,
                               f"perturbing position {j} changed earlier logits")
    return CheckResult("causality", True, f"{n_trials} perturbation trials clean")


def check_metrics() -> CheckResult:
    b1 = bleu(["the cat sat"], ["the cat sat down"])
    ident = bleu(["hello world now"], ["hello world now"])
    ok = abs(b1 - 0.7165313105737893) < 1e-12 and ident == 1.0
    return CheckResult("metrics", ok, f"bleu probe {b1:.6f}, identity {ident:.1f}")


def check_stats() -> CheckResult:
    z = two_proportion_z_test(40, 100, 20, 100)
    t = paired_t_test([1, 0, 1, 0, 1], [0, 0, 0, 0, 0])
    ok = (
        abs(z.z - 3.0151134457776365) < 1e-9
        and abs(z.p - 0.002568831527022717) < 1e-9
        and abs(t.t - 2.449489742783178) < 1e-9
        and abs(t.p - 0.07048399691021993) < 1e-9
    )
    return CheckResult("stats", ok, f"z={z.z:.4f} p={z.p:.5f}; t={t.t:.4f} p={t.p:.5f}")


def check_checkpoint() -> CheckResult:
    _, config, params, _ = _tiny_setup("ad")
    with tempfile.TemporaryDirectory() as td:
        path = Path(td) / "probe.ckpt"
        save_checkpoint(path, params, meta={"model": config.to_dict()})
        arrays, meta = load_checkpoint(path)
    ok = all(np.array_equal(arrays[k], p.data) for k, p in params.items())
    ok = ok and meta["model"]["mode"] == "ad"
    return CheckResult("checkpoint", ok, f"{len(arrays)} tensors round-tripped")


ALL_CHECKS = (
    check_tokenizer,
    check_gradients,
    check_mode_reduction,
    check_causality,
    check_metrics,
    check_stats,
    check_checkpoint,
)


def run_selftest() -> list[CheckResult]:
    return [fn() for fn in ALL_CHECKS]
