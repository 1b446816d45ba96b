"""Command-line interface.

One executable, subcommand per stage of the workflow:

  ingest      convert or synthesize a dialogue corpus (JSONL out)
  stats       corpus summary, optional histogram figure
  train       fit a model, write checkpoint + history + curve figure
  respond     one reply for a context file
  generate    self-play a whole dialogue under an emotion
  chat        interactive REPL
  evaluate    automatic metrics over an evaluation-pair file
  eval-stats  significance tests over human study CSVs
  neighbors   per-emotion nearest-word lists from the learned shift
  selftest    quick internal consistency battery

Any subcommand accepts --config FILE with a flat JSON object of
defaults; explicit flags win over the file.  Usage errors exit 2,
operational failures print one diagnostic line and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    CorpusFormatError,
    CorpusSplit,
    SessionInvariantError,
    convert_empdial_csv,
    corpus_stats,
    load_corpus,
    make_synthetic_corpus,
    read_corpus_any,
    save_corpus,
    session_from_dict,
)
from .decoding import (
    STRATEGIES,
    DecodeConfig,
    chat_repl,
    generate_dialogue,
    generate_response,
)
from .emotions import DEFAULT_EMOTIONS, emotion_by_name
from .evalstats import (
    compare_likert,
    compare_preferences,
    read_likert_csv,
    read_preference_csv,
    render_likert_table,
    render_preference_table,
    summarize_likert,
)
from .metrics import (
    MetricReport,
    WordVectors,
    evaluate_pairs,
    load_eval_pairs,
    make_eval_pairs,
    save_eval_pairs,
)
from .model import ModelConfig, count_params, load_model, save_model
from .analysis import NEIGHBOR_METRICS, nearest_neighbors, render_neighbors
from .tokenizer import TokenizerError, build_vocab
from .training import TrainConfig, train, write_history


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="base random seed")
    p.add_argument("--config", metavar="FILE",
                   help="JSON object of option defaults for this subcommand")
    return p


def _decode_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--strategy", choices=STRATEGIES, default="greedy")
    p.add_argument("--top-k", type=int, default=40)
    p.add_argument("--temperature", type=float, default=0.9)
    p.add_argument("--max-new-tokens", type=int, default=30)
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    decode = _decode_parent()
    parser = argparse.ArgumentParser(
        prog="affdial",
        description="emotion-conditioned dialogue models, end to end",
    )
    parser.add_argument("--version", action="version", version=f"affdial {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common],
                       help="convert a CSV/JSONL corpus or synthesize one")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", metavar="FILE", help="source corpus (.csv or .jsonl)")
    src.add_argument("--synthetic", action="store_true",
                     help="generate the marker-word fixture corpus instead")
    p.add_argument("--output", required=True, metavar="FILE", help="JSONL destination")
    p.add_argument("--split", choices=("train", "validation", "test"), default="train")
    p.add_argument("--n-emotions", type=int, default=4,
                   help="labels in the synthetic corpus")
    p.add_argument("--sessions-per-emotion", type=int, default=10)
    p.add_argument("--drop-trailing-speaker", action="store_true",
                   help="drop a final speaker turn instead of failing")
    p.add_argument("--eval-pairs", metavar="FILE",
                   help="also write context/reference pairs for `evaluate`")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", parents=[common], help="summarize a corpus")
    p.add_argument("--input", required=True, metavar="FILE")
    p.add_argument("--json", action="store_true", help="print JSON instead of rows")
    p.add_argument("--fig", metavar="FILE", help="write the emotion histogram PNG")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--train", required=True, dest="train_path", metavar="FILE")
    p.add_argument("--valid", dest="valid_path", metavar="FILE",
                   help="validation corpus enabling early stopping")
    p.add_argument("--mode", required=True,
                   choices=("baseline", "prepend", "ad", "ad_de", "mtl", "adm"))
    p.add_argument("--out", required=True, metavar="PREFIX",
                   help="checkpoint path prefix (writes PREFIX.ckpt/.json/.vocab)")
    p.add_argument("--n-layers", type=int, default=2)
    p.add_argument("--n-heads", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--d-ff", type=int, default=256)
    p.add_argument("--max-seq-len", type=int, default=128)
    p.add_argument("--d-emotion", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--mtl-weight", type=float, default=1.0)
    p.add_argument("--no-tie", action="store_true",
                   help="untie the output head from the input embeddings")
    p.add_argument("--max-vocab", type=int, default=None)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--clip-norm", type=float, default=1.0)
    p.add_argument("--eval-every", type=int, default=200)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--loss-on", choices=("all", "listener"), default="all",
                   help="turns that carry language-model loss")
    p.add_argument("--log-every", type=int, default=50)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("respond", parents=[common, decode],
                       help="reply to a dialogue context file")
    p.add_argument("--model", required=True, metavar="PREFIX")
    p.add_argument("--context", required=True, metavar="FILE",
                   help="JSON file with one session object")
    p.add_argument("--emotion", help="override the context's emotion label")
    p.set_defaults(func=cmd_respond)

    p = sub.add_parser("generate", parents=[common, decode],
                       help="self-play a dialogue from scratch")
    p.add_argument("--model", required=True, metavar="PREFIX")
    p.add_argument("--emotion", required=True)
    p.add_argument("--turns", type=int, default=4)
    p.add_argument("--opening", help="fixed first speaker turn")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("chat", parents=[common, decode], help="interactive chat")
    p.add_argument("--model", required=True, metavar="PREFIX")
    p.add_argument("--emotion", required=True)
    p.set_defaults(func=cmd_chat)

    p = sub.add_parser("evaluate", parents=[common, decode],
                       help="automatic metrics against references")
    p.add_argument("--model", required=True, metavar="PREFIX")
    p.add_argument("--pairs", required=True, metavar="FILE",
                   help="evaluation pairs JSONL (see `ingest --eval-pairs`)")
    vec = p.add_mutually_exclusive_group()
    vec.add_argument("--vectors", metavar="FILE",
                     help="word vectors, text format: word v1 ... vd")
    vec.add_argument("--random-vectors", action="store_true",
                     help="seeded random vectors (self-consistent only)")
    p.add_argument("--vector-dim", type=int, default=50)
    p.add_argument("--greedy-direction", choices=("both", "hyp2ref"), default="both")
    p.add_argument("--no-ppl", action="store_true")
    p.add_argument("--out", metavar="FILE", help="also write the report rows here")
    p.add_argument("--figdir", metavar="DIR", help="write the metric bar chart here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("eval-stats", parents=[common],
                       help="significance tests for human studies")
    p.add_argument("--preferences", metavar="FILE",
                   help="CSV: context_id,system_a,system_b,choice")
    p.add_argument("--likert", metavar="FILE",
                   help="CSV: item_id,system,aspect,rating")
    p.add_argument("--compare", nargs=2, metavar=("SYS_X", "SYS_Y"),
                   help="systems for the paired rating test")
    p.add_argument("--figdir", metavar="DIR")
    p.set_defaults(func=cmd_eval_stats)

    p = sub.add_parser("neighbors", parents=[common],
                       help="nearest vocabulary words per emotion")
    p.add_argument("--model", required=True, metavar="PREFIX")
    p.add_argument("--emotion", help="one label (default: all the model knows)")
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--metric", choices=NEIGHBOR_METRICS, default="offset")
    p.add_argument("--role", choices=("s", "l"), default="l",
                   help="offset side for dual-role modes")
    p.add_argument("--figdir", metavar="DIR")
    p.set_defaults(func=cmd_neighbors)

    p = sub.add_parser("selftest", parents=[common],
                       help="run the built-in consistency checks")
    p.set_defaults(func=cmd_selftest)

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies


def cmd_ingest(args) -> int:
    if args.synthetic:
        split = make_synthetic_corpus(
            n_emotions=args.n_emotions,
            sessions_per_emotion=args.sessions_per_emotion,
            seed=args.seed,
            split=args.split,
        )
    else:
        path = Path(args.input)
        if path.suffix.lower() == ".csv":
            sessions = convert_empdial_csv(str(path))
            if args.drop_trailing_speaker:
                sessions = [s for s in sessions if s.turns[-1].role != "S"]
            split = CorpusSplit(name=args.split, sessions=sessions)
        else:
            split = load_corpus(str(path), args.split,
                                drop_trailing_speaker=args.drop_trailing_speaker)
    save_corpus(split, args.output)
    print(f"wrote {len(split.sessions)} sessions to {args.output}")
    if args.eval_pairs:
        pairs = make_eval_pairs(split.sessions)
        if not pairs:
            raise CorpusFormatError("no sessions with a listener turn; cannot build pairs")
        save_eval_pairs(args.eval_pairs, pairs)
        print(f"wrote {len(pairs)} evaluation pairs to {args.eval_pairs}")
    return 0


def cmd_stats(args) -> int:
    split = read_corpus_any(args.input)
    st = corpus_stats(split)
    if args.json:
        print(json.dumps(st.to_dict(), indent=2, sort_keys=True))
    else:
        d = st.to_dict()
        hist = d.pop("emotion_histogram")
        for k, v in d.items():
            print(f"{k}\t{v}")
        for name, n in sorted(hist.items(), key=lambda kv: (-kv[1], kv[0])):
            print(f"emotion.{name}\t{n}")
    if args.fig:
        from .plots import plot_emotion_histogram

        out = plot_emotion_histogram(st.emotion_histogram, args.fig)
        print(f"figure: {out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    train_split = read_corpus_any(args.train_path)
    valid_split = read_corpus_any(args.valid_path) if args.valid_path else None
    vocab = build_vocab(train_split, max_size=args.max_vocab, min_freq=args.min_freq)
    mc = ModelConfig(
        mode=args.mode,
        vocab_size=len(vocab),
        n_layers=args.n_layers,
        n_heads=args.n_heads,
        d_model=args.d_model,
        d_ff=args.d_ff,
        max_seq_len=args.max_seq_len,
        n_emotions=vocab.n_emotions,
        d_emotion=args.d_emotion,
        dropout_p=args.dropout,
        tie_embeddings=not args.no_tie,
        mtl_weight=args.mtl_weight,
    )
    tc = TrainConfig(
        seed=args.seed,
        max_steps=args.steps,
        batch_size=args.batch_size,
        lr=args.lr,
        clip_norm=args.clip_norm,
        eval_every=args.eval_every,
        patience=args.patience,
        loss_on=args.loss_on,
        log_every=args.log_every,
    )
    on_step = None
    if not args.quiet:
        def on_step(step, loss):
            if step % args.log_every == 0:
                print(f"step {step}  loss {loss:.4f}", file=sys.stderr)
    result = train(mc, tc, train_split, vocab, valid_split=valid_split, on_step=on_step)
    prefix = Path(args.out)
    save_model(prefix, result.params, mc, vocab)
    write_history(prefix.parent / (prefix.name + ".history.csv"), result.history)
    from .plots import plot_history

    if result.history:
        plot_history(result.history, prefix.parent / (prefix.name + ".history.png"))
    print(f"model\t{prefix}")
    print(f"params\t{count_params(result.params)}")
    print(f"steps\t{result.steps_run}")
    print(f"final_train_loss\t{result.final_train_loss:.4f}")
    if result.best_valid_ppl is not None:
        print(f"best_valid_ppl\t{result.best_valid_ppl:.4f}")
    if result.stopped_early:
        print("stopped_early\ttrue")
    return 0


def _decode_config(args) -> DecodeConfig:
    return DecodeConfig(
        strategy=args.strategy,
        top_k=args.top_k,
        temperature=args.temperature,
        max_new_tokens=args.max_new_tokens,
        seed=args.seed,
    )


def cmd_respond(args) -> int:
    params, config, vocab = load_model(args.model)
    with open(args.context, encoding="utf-8") as fh:
        session = session_from_dict(json.load(fh), where=args.context)
    emotion = emotion_by_name(args.emotion) if args.emotion else None
    text = generate_response(params, config, vocab, session,
                             _decode_config(args), emotion=emotion)
    print(text)
    return 0


def cmd_generate(args) -> int:
    params, config, vocab = load_model(args.model)
    emotion = emotion_by_name(args.emotion)
    dlg = generate_dialogue(params, config, vocab, emotion, args.turns,
                            _decode_config(args), opening=args.opening)
    print(f"# emotion: {emotion.name}")
    for turn in dlg.turns:
        print(f"{turn.role}: {turn.text}")
    return 0


def cmd_chat(args) -> int:
    params, config, vocab = load_model(args.model)
    emotion = emotion_by_name(args.emotion)
    chat_repl(params, config, vocab, emotion, _decode_config(args))
    return 0


def cmd_evaluate(args) -> int:
    params, config, vocab = load_model(args.model)
    pairs = load_eval_pairs(args.pairs)
    if args.vectors:
        wv = WordVectors.load(args.vectors)
    else:
        words = set(vocab.id_to_token[vocab.n_special:])
        for p in pairs:
            words.update(p.reference.lower().split())
        wv = WordVectors.random(words, dim=args.vector_dim, seed=args.seed)
        if not args.random_vectors:
            print("note: no --vectors given; using seeded random vectors",
                  file=sys.stderr)
    report = evaluate_pairs(
        params, config, vocab, pairs, wv,
        decode=_decode_config(args),
        greedy_direction=args.greedy_direction,
        with_ppl=not args.no_ppl,
    )
    text = report.render()
    print(text)
    if report.skipped_bow:
        print(f"note: {report.skipped_bow} pairs lacked vectors for some "
              f"bag-of-words metric", file=sys.stderr)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.figdir:
        from .plots import plot_metric_bars

        out = plot_metric_bars(report, Path(args.figdir) / "metrics.png")
        print(f"figure: {out}", file=sys.stderr)
    return 0


def cmd_eval_stats(args) -> int:
    if not args.preferences and not args.likert:
        raise ValueError("nothing to do: pass --preferences and/or --likert")
    figdir = Path(args.figdir) if args.figdir else None
    if args.preferences:
        comparisons = compare_preferences(read_preference_csv(args.preferences))
        print(render_preference_table(comparisons))
        if figdir:
            from .plots import plot_preference_matrix

            out = plot_preference_matrix(comparisons, figdir / "preferences.png")
            print(f"figure: {out}", file=sys.stderr)
    if args.likert:
        records = read_likert_csv(args.likert)
        summary = summarize_likert(records)
        tests = None
        if args.compare:
            tests = compare_likert(records, args.compare[0], args.compare[1])
        elif len(summary.systems) == 2:
            tests = compare_likert(records, summary.systems[0], summary.systems[1])
        if args.preferences:
            print()
        print(render_likert_table(summary, tests))
        if tests:
            for aspect, res in sorted(tests.items()):
                print(f"t[{aspect}]\t{res.t:.4f}\tp\t{res.p:.5f}\tdf\t{res.df}")
        if figdir:
            from .plots import plot_likert

            out = plot_likert(summary, figdir / "ratings.png")
            print(f"figure: {out}", file=sys.stderr)
    return 0


def cmd_neighbors(args) -> int:
    params, config, vocab = load_model(args.model)
    if args.emotion:
        emotions = [emotion_by_name(args.emotion)]
    else:
        emotions = [e for e in DEFAULT_EMOTIONS if e.id < config.n_emotions]
    figdir = Path(args.figdir) if args.figdir else None
    for emo in emotions:
        nbs = nearest_neighbors(params, config, vocab, emo, k=args.k,
                                metric=args.metric, role=args.role)
        print(render_neighbors(emo, nbs))
        if figdir:
            from .plots import plot_neighbors

            out = plot_neighbors(emo.name, nbs, figdir / f"neighbors_{emo.name}.png")
            print(f"figure: {out}", file=sys.stderr)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    results = run_selftest()
    failed = 0
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"[{status}] {r.name}: {r.detail}")
        if not r.ok:
            failed += 1
    if failed:
        print(f"{failed} of {len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


# ---------------------------------------------------------------------------
# entry point


def parse_args(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Parse twice when --config is present so flags beat file values."""
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    if not config_path:
        return args
    with open(config_path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ValueError(f"{config_path}: config must be a JSON object")
    bad = [k for k in overrides if not hasattr(args, k)]
    if bad:
        raise ValueError(f"{config_path}: unknown option keys {bad}")
    # the subcommand parses into its own namespace, so the defaults must
    # land on the selected subparser, not just the root parser
    command_action = next(a for a in parser._actions if a.dest == "command")
    command_action.choices[args.command].set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parse_args(parser, argv)
        return args.func(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except (OSError, ValueError, KeyError, RuntimeError, CorpusFormatError,
            SessionInvariantError, TokenizerError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
