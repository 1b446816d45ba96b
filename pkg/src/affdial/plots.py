"""Figure rendering for reports.  Every function writes a PNG and
returns its path; nothing is ever shown interactively."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_DPI = 150


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_history(history, path) -> Path:
    """Training loss and validation perplexity over steps."""
    steps = [h.step for h in history]
    losses = [h.train_loss for h in history]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, losses, lw=1.2, label="train loss")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    valid = [(h.step, h.valid_ppl) for h in history if h.valid_ppl is not None]
    if valid:
        ax2 = ax.twinx()
        ax2.plot(*zip(*valid), "o-", color="tab:orange", ms=3, lw=1.0,
                 label="valid ppl")
        ax2.set_ylabel("validation perplexity")
        lines, labels = ax.get_legend_handles_labels()
        l2, lab2 = ax2.get_legend_handles_labels()
        ax.legend(lines + l2, labels + lab2, fontsize=8)
    else:
        ax.legend(fontsize=8)
    ax.set_title("training")
    return _save(fig, path)


def plot_metric_bars(report, path) -> Path:
    """Bar chart of the scalar metrics in a MetricReport."""
    pairs = [(k, v) for k, v in (
        ("bleu", report.bleu),
        ("bow_avg", report.bow_average),
        ("bow_greedy", report.bow_greedy),
        ("bow_extrema", report.bow_extrema),
        ("dist1", report.dist1),
        ("dist2", report.dist2),
    ) if v is not None]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar([k for k, _ in pairs], [v for _, v in pairs], color="tab:blue")
    for i, (_, v) in enumerate(pairs):
        ax.text(i, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    title = "response metrics"
    if report.ppl is not None:
        title += f"  (ppl {report.ppl:.2f})"
    ax.set_title(title)
    ax.set_ylabel("score")
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    return _save(fig, path)


def plot_preference_matrix(comparisons, path) -> Path:
    """One row per system pair: win/tie/win shares, dagger on
    significant winners."""
    fig, ax = plt.subplots(figsize=(7, 0.8 + 0.55 * len(comparisons)))
    labels = []
    for row, c in enumerate(reversed(comparisons)):
        left = c.pct_a
        mid = c.pct_tie
        right = c.pct_b
        ax.barh(row, left, color="tab:blue")
        ax.barh(row, mid, left=left, color="lightgray")
        ax.barh(row, right, left=left + mid, color="tab:red")
        mark_a = "†" if c.significant and c.wins_a > c.wins_b else ""
        mark_b = "†" if c.significant and c.wins_b > c.wins_a else ""
        ax.text(1, row, f"{c.pct_a:.0f}%{mark_a}", va="center", fontsize=8, color="white")
        ax.text(99, row, f"{c.pct_b:.0f}%{mark_b}", va="center", ha="right",
                fontsize=8, color="white")
        labels.append(f"{c.system_a} | {c.system_b}")
    ax.set_yticks(range(len(comparisons)))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_xlim(0, 100)
    ax.set_xlabel("% of judgments (left wins | tie | right wins)")
    ax.set_title("pairwise preference")
    return _save(fig, path)


def plot_likert(summary, path) -> Path:
    """Grouped mean-rating bars with sd whiskers."""
    fig, ax = plt.subplots(figsize=(7, 4))
    n_sys = len(summary.systems)
    width = 0.8 / max(n_sys, 1)
    for si, system in enumerate(summary.systems):
        xs = []
        means = []
        errs = []
        for ai, aspect in enumerate(summary.aspects):
            key = (system, aspect)
            if key not in summary.means:
                continue
            xs.append(ai + si * width)
            means.append(summary.means[key])
            errs.append(summary.sds[key])
        ax.bar(xs, means, width=width, yerr=errs, capsize=3, label=system)
    ax.set_xticks([i + width * (n_sys - 1) / 2 for i in range(len(summary.aspects))])
    ax.set_xticklabels(summary.aspects)
    ax.set_ylabel("mean rating")
    ax.set_title("human ratings")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_neighbors(emotion_name: str, neighbors, path) -> Path:
    """Horizontal score bars for one emotion's nearest words."""
    fig, ax = plt.subplots(figsize=(6, 0.6 + 0.35 * len(neighbors)))
    names = [n.token for n in neighbors][::-1]
    scores = [n.score for n in neighbors][::-1]
    ax.barh(range(len(names)), scores, color="tab:green")
    ax.set_yticks(range(len(names)))
    ax.set_yticklabels(names, fontsize=9)
    ax.set_xlabel("score")
    ax.set_title(f"nearest words: {emotion_name}")
    return _save(fig, path)


def plot_emotion_histogram(counts: dict, path) -> Path:
    """Sessions per emotion label, descending."""
    items = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    fig, ax = plt.subplots(figsize=(max(6, 0.28 * len(items)), 4))
    ax.bar([k for k, _ in items], [v for _, v in items], color="tab:purple")
    ax.set_ylabel("sessions")
    ax.set_title("emotion distribution")
    plt.setp(ax.get_xticklabels(), rotation=60, ha="right", fontsize=7)
    return _save(fig, path)
