"""Statistics for human preference and rating studies.

Pairwise A/B preferences (with ties) are compared by a two-proportion
z test of win rates over all judgments for the pair, ties included in
the denominators.  Likert-style ratings are compared by a paired t
test.  Both tail probabilities are computed from first principles: the
normal tail via ``math.erfc`` and the t tail via the regularized
incomplete beta function (continued-fraction evaluation), so results
carry no dependency on a stats package.

Significance markers: a dagger on the winning side when p < 0.05.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

SIGNIFICANCE_LEVEL = 0.05
DAGGER = "†"


# ---------------------------------------------------------------------------
# special functions


def normal_sf(x: float) -> float:
    """Upper-tail probability of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    raise RuntimeError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) for a, b > 0, x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError(f"beta parameters must be positive, got a={a}, b={b}")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log(1.0 - x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided tail probability of Student's t with df degrees."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


# ---------------------------------------------------------------------------
# two-proportion z test


@dataclass(frozen=True)
class ZTestResult:
    z: float
    p: float
    p1: float
    p2: float


def two_proportion_z_test(k1: int, n1: int, k2: int, n2: int) -> ZTestResult:
    """Two-sided z test comparing success rates k1/n1 and k2/n2.

    The standard error uses the cross-product form

        se^2 = p1 (1 - p2) / n1 + p2 (1 - p1) / n2

    which reduces to the familiar unpooled estimate when p1 = p2.  A
    degenerate comparison (zero standard error, e.g. both rates 0 or
    both 1) reports z = 0, p = 1.
    """
    for k, n, side in ((k1, n1, "first"), (k2, n2, "second")):
        if n <= 0:
            raise ValueError(f"{side} sample size must be positive, got {n}")
        if not 0 <= k <= n:
            raise ValueError(f"{side} successes {k} outside [0, {n}]")
    p1 = k1 / n1
    p2 = k2 / n2
    var = p1 * (1.0 - p2) / n1 + p2 * (1.0 - p1) / n2
    if var <= 0.0:
        return ZTestResult(z=0.0, p=1.0, p1=p1, p2=p2)
    z = (p1 - p2) / math.sqrt(var)
    p = 2.0 * normal_sf(abs(z))
    return ZTestResult(z=z, p=min(p, 1.0), p1=p1, p2=p2)


# ---------------------------------------------------------------------------
# paired t test


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int
    mean_diff: float


def paired_t_test(xs, ys) -> TTestResult:
    """Two-sided paired t test on matched samples.

    Identical samples (all differences zero) give t = 0, p = 1; a
    nonzero constant difference has zero variance and reports an
    infinite statistic with p = 0.
    """
    xs = list(map(float, xs))
    ys = list(map(float, ys))
    if len(xs) != len(ys):
        raise ValueError(f"paired samples differ in length: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValueError("paired t test needs at least 2 pairs")
    diffs = [x - y for x, y in zip(xs, ys)]
    mean = sum(diffs) / n
    ss = sum((d - mean) ** 2 for d in diffs)
    df = n - 1
    if ss == 0.0:
        if mean == 0.0:
            return TTestResult(t=0.0, p=1.0, df=df, mean_diff=0.0)
        return TTestResult(t=math.copysign(math.inf, mean), p=0.0, df=df, mean_diff=mean)
    sd = math.sqrt(ss / df)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t=t, p=t_sf_two_sided(t, df), df=df, mean_diff=mean)


# ---------------------------------------------------------------------------
# preference study


VALID_CHOICES = ("a", "b", "tie")


@dataclass(frozen=True)
class PreferenceJudgment:
    context_id: str
    system_a: str
    system_b: str
    choice: str  # "a" | "b" | "tie"

    def __post_init__(self):
        if self.choice not in VALID_CHOICES:
            raise ValueError(f"choice must be one of {VALID_CHOICES}, got {self.choice!r}")


@dataclass
class PairComparison:
    system_a: str
    system_b: str
    n: int
    wins_a: int
    wins_b: int
    ties: int
    z: float
    p: float

    @property
    def pct_a(self) -> float:
        return 100.0 * self.wins_a / self.n

    @property
    def pct_b(self) -> float:
        return 100.0 * self.wins_b / self.n

    @property
    def pct_tie(self) -> float:
        return 100.0 * self.ties / self.n

    @property
    def significant(self) -> bool:
        return self.p < SIGNIFICANCE_LEVEL

    @property
    def winner(self) -> str | None:
        if self.wins_a == self.wins_b:
            return None
        return self.system_a if self.wins_a > self.wins_b else self.system_b


def read_preference_csv(path) -> list[PreferenceJudgment]:
    required = {"context_id", "system_a", "system_b", "choice"}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"{path}: preference CSV needs columns {sorted(required)}, "
                f"found {reader.fieldnames}"
            )
        for i, rec in enumerate(reader, start=2):
            try:
                out.append(PreferenceJudgment(
                    context_id=rec["context_id"],
                    system_a=rec["system_a"],
                    system_b=rec["system_b"],
                    choice=rec["choice"].strip().lower(),
                ))
            except ValueError as exc:
                raise ValueError(f"{path}:{i}: {exc}") from exc
    if not out:
        raise ValueError(f"{path}: no judgments")
    return out


def compare_preferences(judgments: list[PreferenceJudgment]) -> list[PairComparison]:
    """Aggregate judgments per system pair and test win-rate difference.

    Ties stay in the denominator: each side's win rate is wins over all
    judgments for that pair.
    """
    buckets: dict[tuple[str, str], list[str]] = defaultdict(list)
    for j in judgments:
        key = tuple(sorted((j.system_a, j.system_b)))
        choice = j.choice
        if key != (j.system_a, j.system_b):
            choice = {"a": "b", "b": "a", "tie": "tie"}[choice]
        buckets[key].append(choice)
    out = []
    for (sys_a, sys_b), choices in sorted(buckets.items()):
        n = len(choices)
        wins_a = sum(1 for c in choices if c == "a")
        wins_b = sum(1 for c in choices if c == "b")
        ties = n - wins_a - wins_b
        res = two_proportion_z_test(wins_a, n, wins_b, n)
        out.append(PairComparison(
            system_a=sys_a, system_b=sys_b, n=n,
            wins_a=wins_a, wins_b=wins_b, ties=ties,
            z=res.z, p=res.p,
        ))
    return out


def render_preference_table(comparisons: list[PairComparison]) -> str:
    """Tab-delimited comparison table; the dagger marks significant wins."""
    lines = ["pair\twin_a%\twin_b%\ttie%\tz\tp\tn"]
    for c in comparisons:
        mark_a = DAGGER if c.significant and c.wins_a > c.wins_b else ""
        mark_b = DAGGER if c.significant and c.wins_b > c.wins_a else ""
        lines.append(
            f"{c.system_a} vs {c.system_b}\t"
            f"{c.pct_a:.1f}{mark_a}\t{c.pct_b:.1f}{mark_b}\t{c.pct_tie:.1f}\t"
            f"{c.z:.4f}\t{c.p:.5f}\t{c.n}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# rating study


@dataclass(frozen=True)
class LikertRecord:
    item_id: str
    system: str
    aspect: str
    rating: float


def read_likert_csv(path) -> list[LikertRecord]:
    required = {"item_id", "system", "aspect", "rating"}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(
                f"{path}: rating CSV needs columns {sorted(required)}, "
                f"found {reader.fieldnames}"
            )
        for i, rec in enumerate(reader, start=2):
            try:
                rating = float(rec["rating"])
            except ValueError as exc:
                raise ValueError(f"{path}:{i}: rating {rec['rating']!r} is not a number") from exc
            out.append(LikertRecord(
                item_id=rec["item_id"], system=rec["system"],
                aspect=rec["aspect"], rating=rating,
            ))
    if not out:
        raise ValueError(f"{path}: no ratings")
    return out


@dataclass
class LikertSummary:
    means: dict  # (system, aspect) -> mean
    sds: dict    # (system, aspect) -> sample sd (0 for n=1)
    counts: dict
    systems: list[str]
    aspects: list[str]


def summarize_likert(records: list[LikertRecord]) -> LikertSummary:
    groups: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in records:
        groups[(r.system, r.aspect)].append(r.rating)
    means, sds, counts = {}, {}, {}
    for key, vals in groups.items():
        n = len(vals)
        m = sum(vals) / n
        means[key] = m
        sds[key] = math.sqrt(sum((v - m) ** 2 for v in vals) / (n - 1)) if n > 1 else 0.0
        counts[key] = n
    systems = sorted({s for s, _ in groups})
    aspects = sorted({a for _, a in groups})
    return LikertSummary(means=means, sds=sds, counts=counts,
                         systems=systems, aspects=aspects)


def compare_likert(
    records: list[LikertRecord], system_x: str, system_y: str
) -> dict[str, TTestResult]:
    """Paired t per aspect over items rated for both systems."""
    by_key: dict[tuple[str, str, str], float] = {}
    for r in records:
        by_key[(r.system, r.aspect, r.item_id)] = r.rating
    aspects = sorted({r.aspect for r in records})
    out = {}
    for aspect in aspects:
        items = sorted(
            item for (s, a, item) in by_key
            if s == system_x and a == aspect and (system_y, aspect, item) in by_key
        )
        if len(items) < 2:
            continue
        xs = [by_key[(system_x, aspect, i)] for i in items]
        ys = [by_key[(system_y, aspect, i)] for i in items]
        out[aspect] = paired_t_test(xs, ys)
    return out


def render_likert_table(summary: LikertSummary, tests: dict | None = None) -> str:
    """Mean (sd) per system and aspect; dagger on significant paired wins.

    ``tests`` maps aspect -> TTestResult comparing the first two systems
    in the summary, as produced by compare_likert.
    """
    lines = ["system\t" + "\t".join(summary.aspects)]
    for system in summary.systems:
        cells = []
        for aspect in summary.aspects:
            key = (system, aspect)
            if key not in summary.means:
                cells.append("n/a")
                continue
            mark = ""
            if tests and aspect in tests and len(summary.systems) >= 2:
                res = tests[aspect]
                if res.p < SIGNIFICANCE_LEVEL:
                    better_first = res.mean_diff > 0
                    if (system == summary.systems[0]) == better_first:
                        mark = DAGGER
            cells.append(f"{summary.means[key]:.2f} ({summary.sds[key]:.2f}){mark}")
        lines.append(system + "\t" + "\t".join(cells))
    return "\n".join(lines)
