"""Evaluation protocol: confusion matrices, neutral-excluding F1, MCC.

macroF1*/microF1* follow the ERC community convention: per-label scores
are computed for the emotional labels only, while errors involving
neutral still count as false positives/negatives of the emotional label
involved (`attribute` policy). A `drop` policy that discards
gold-neutral utterances first is also provided for comparison. The
multiclass MCC is computed over the full label space, neutral included.

Degenerate 0/0 cases are defined as 0 throughout (per-label F1 and both
MCC forms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySequence, LengthMismatch, NoNeutralInSpace, UnknownLabel

NEUTRAL = "neutral"

# Reserved prefix for pseudo-labels (e.g. the LLM harness's unparsable
# bucket): they live in the matrix but are never scored as emotions.
_PSEUDO_PREFIX = "__"


def _is_pseudo(name: str) -> bool:
    return name.startswith(_PSEUDO_PREFIX)


@dataclass(frozen=True)
class ConfusionMatrix:
    """K x K counts, rows = gold, columns = predicted."""

    counts: np.ndarray
    label_space: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.label_space)
        if counts.shape != (k, k):
            raise LengthMismatch(f"counts shape {counts.shape} != ({k}, {k})")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, name: str) -> int:
        try:
            return self.label_space.index(name)
        except ValueError:
            raise UnknownLabel(f"label {name!r} not in space {self.label_space}") from None

    def emotional_labels(self) -> tuple[str, ...]:
        return tuple(l for l in self.label_space if l != NEUTRAL and not _is_pseudo(l))


def confusion(
    preds: list[str], golds: list[str], label_space: tuple[str, ...]
) -> ConfusionMatrix:
    """Tally (gold, predicted) pairs into a matrix over `label_space`.

    Raises:
        LengthMismatch: sequences differ in length.
        UnknownLabel: a label outside the space.
    """
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    idx = {name: i for i, name in enumerate(label_space)}
    counts = np.zeros((len(label_space), len(label_space)), dtype=np.int64)
    for gold, pred in zip(golds, preds):
        if gold not in idx:
            raise UnknownLabel(f"gold label {gold!r} not in space")
        if pred not in idx:
            raise UnknownLabel(f"predicted label {pred!r} not in space")
        counts[idx[gold], idx[pred]] += 1
    return ConfusionMatrix(counts=counts, label_space=tuple(label_space))


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom > 0 else 0.0


def _tp_fp_fn(counts: np.ndarray, i: int) -> tuple[int, int, int]:
    tp = int(counts[i, i])
    fp = int(counts[:, i].sum() - counts[i, i])
    fn = int(counts[i, :].sum() - counts[i, i])
    return tp, fp, fn


def _apply_neutral_policy(m: ConfusionMatrix, neutral_policy: str) -> np.ndarray:
    if neutral_policy == "attribute":
        return m.counts
    if neutral_policy == "drop":
        counts = m.counts.copy()
        counts[m.index(NEUTRAL), :] = 0
        return counts
    raise ValueError(f"neutral_policy must be 'attribute' or 'drop', got {neutral_policy!r}")


def f1_excluding_neutral(
    m: ConfusionMatrix, mode: str, neutral_policy: str = "attribute"
) -> float:
    """macro or micro F1 over the emotional labels, neutral excluded.

    `attribute` (default): neutral-involving errors count as FP/FN of
    the emotional labels involved, neutral contributes no TP. `drop`:
    gold-neutral utterances are discarded first.

    Raises:
        NoNeutralInSpace: the matrix has no neutral label.
    """
    if NEUTRAL not in m.label_space:
        raise NoNeutralInSpace(f"label space {m.label_space} lacks {NEUTRAL!r}")
    counts = _apply_neutral_policy(m, neutral_policy)
    indices = [m.index(name) for name in m.emotional_labels()]
    if mode == "macro":
        return float(np.mean([_f1(*_tp_fp_fn(counts, i)) for i in indices]))
    if mode == "micro":
        tp = sum(_tp_fp_fn(counts, i)[0] for i in indices)
        fp = sum(_tp_fp_fn(counts, i)[1] for i in indices)
        fn = sum(_tp_fp_fn(counts, i)[2] for i in indices)
        return _f1(tp, fp, fn)
    raise ValueError(f"mode must be 'macro' or 'micro', got {mode!r}")


def f1_all_labels(m: ConfusionMatrix, mode: str) -> float:
    """Plain macro/micro F1 over every non-pseudo label in the space.

    Used for 6-label ablation models whose space has no neutral.
    """
    indices = [i for i, name in enumerate(m.label_space) if not _is_pseudo(name)]
    if mode == "macro":
        return float(np.mean([_f1(*_tp_fp_fn(m.counts, i)) for i in indices]))
    if mode == "micro":
        tp = sum(_tp_fp_fn(m.counts, i)[0] for i in indices)
        fp = sum(_tp_fp_fn(m.counts, i)[1] for i in indices)
        fn = sum(_tp_fp_fn(m.counts, i)[2] for i in indices)
        return _f1(tp, fp, fn)
    raise ValueError(f"mode must be 'macro' or 'micro', got {mode!r}")


@dataclass(frozen=True)
class BinaryCounts:
    """TP/TN/FP/FN bundle for the original two-class MCC definition."""

    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @property
    def s(self) -> float:
        return (self.tp + self.fn) / self.n

    @property
    def p(self) -> float:
        return (self.tp + self.fp) / self.n


def mcc_binary(c: BinaryCounts) -> float:
    """(TP/N - S*P) / sqrt(P*S*(1-S)*(1-P)); 0 on a zero denominator."""
    if c.n == 0:
        return 0.0
    s, p = c.s, c.p
    denom = math.sqrt(p * s * (1.0 - s) * (1.0 - p))
    if denom == 0.0:
        return 0.0
    return (c.tp / c.n - s * p) / denom


def mcc_multiclass(m: ConfusionMatrix) -> float:
    """K-class correlation generalization over the full label space.

    (c*s - sum_k p_k*t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2)),
    with c the correct count, s the total, t_k/p_k the gold/predicted
    counts of class k; 0 when either factor under the root vanishes.
    """
    counts = m.counts.astype(float)
    s = counts.sum()
    if s == 0:
        return 0.0
    c = np.trace(counts)
    t = counts.sum(axis=1)
    p = counts.sum(axis=0)
    cov_tp = c * s - float(p @ t)
    var_p = s * s - float(p @ p)
    var_t = s * s - float(t @ t)
    if var_p <= 0.0 or var_t <= 0.0:
        return 0.0
    return float(cov_tp / math.sqrt(var_p * var_t))


@dataclass(frozen=True)
class PerLabelScore:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    """The run-level metric bundle serialized by the CLI."""

    macro_f1_star: float
    micro_f1_star: float
    mcc: float
    per_label: tuple[PerLabelScore, ...]
    confusion: ConfusionMatrix
    n_scored: int
    neutral_policy: str = "attribute"
    extras: dict = field(default_factory=dict)

    def to_dict(self, config_echo: dict | None = None) -> dict:
        doc = {
            "macro_f1_star": self.macro_f1_star,
            "micro_f1_star": self.micro_f1_star,
            "mcc": self.mcc,
            "per_label": [
                {
                    "label": s.label,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "support": s.support,
                }
                for s in self.per_label
            ],
            "confusion": self.confusion.counts.tolist(),
            "label_space": list(self.confusion.label_space),
            "n_scored": self.n_scored,
            "neutral_policy": self.neutral_policy,
            "config_echo": config_echo or {},
        }
        doc.update(self.extras)
        return doc


def report_from_confusion(
    m: ConfusionMatrix,
    neutral_policy: str = "attribute",
    extras: dict | None = None,
    score_all_labels: bool = False,
) -> MetricsReport:
    """All metrics for one confusion matrix.

    F1* uses neutral exclusion when neutral is in the space; for spaces
    without neutral (6-label ablation) plain macro/micro F1 over the
    space is reported under the same field names. MCC always covers the
    full space. `score_all_labels` is the diagnostics-only mode keeping
    neutral in the F1s and the per-label list; such reports are not
    comparable to the community convention.
    """
    if score_all_labels or NEUTRAL not in m.label_space:
        counts = m.counts
        macro = f1_all_labels(m, "macro")
        micro = f1_all_labels(m, "micro")
        scored_names = tuple(l for l in m.label_space if not _is_pseudo(l))
    else:
        counts = _apply_neutral_policy(m, neutral_policy)
        macro = f1_excluding_neutral(m, "macro", neutral_policy)
        micro = f1_excluding_neutral(m, "micro", neutral_policy)
        scored_names = m.emotional_labels()
    per_label = []
    for name in scored_names:
        i = m.index(name)
        tp, fp, fn = _tp_fp_fn(counts, i)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        per_label.append(
            PerLabelScore(
                label=name,
                precision=precision,
                recall=recall,
                f1=_f1(tp, fp, fn),
                support=int(m.counts[i, :].sum()),
            )
        )
    report_extras = dict(extras or {})
    if score_all_labels:
        report_extras.setdefault("includes_neutral", True)
    return MetricsReport(
        macro_f1_star=macro,
        micro_f1_star=micro,
        mcc=mcc_multiclass(m),
        per_label=tuple(per_label),
        confusion=m,
        n_scored=m.total,
        neutral_policy=neutral_policy,
        extras=report_extras,
    )


def report_from_predictions(
    preds: list[str],
    golds: list[str],
    label_space: tuple[str, ...],
    neutral_policy: str = "attribute",
    extras: dict | None = None,
) -> MetricsReport:
    return report_from_confusion(
        confusion(preds, golds, label_space), neutral_policy, extras
    )


@dataclass(frozen=True)
class RunSummary:
    """Mean and sample standard deviation per metric over repeated runs."""

    n_runs: int
    mean: dict[str, float]
    std: dict[str, float]

    def to_dict(self) -> dict:
        return {"n_runs": self.n_runs, "mean": self.mean, "std": self.std}


def aggregate_runs(reports: list[MetricsReport]) -> RunSummary:
    """Per-metric mean and (n-1) standard deviation; std 0 for one run.

    Raises:
        EmptySequence: no reports given.
    """
    if not reports:
        raise EmptySequence("aggregate_runs needs at least one report")
    metrics = {
        "macro_f1_star": [r.macro_f1_star for r in reports],
        "micro_f1_star": [r.micro_f1_star for r in reports],
        "mcc": [r.mcc for r in reports],
    }
    mean = {k: float(np.mean(v)) for k, v in metrics.items()}
    std = {}
    for k, values in metrics.items():
        if len(values) < 2 or min(values) == max(values):
            std[k] = 0.0  # exact zero for identical runs, no roundoff
        else:
            std[k] = float(np.std(values, ddof=1))
    return RunSummary(n_runs=len(reports), mean=mean, std=std)


def format_report(report: MetricsReport) -> str:
    """Human-readable block; F1/MCC printed as Table-style percentages."""
    lines = [
        f"macroF1* = {100.0 * report.macro_f1_star:.2f}",
        f"microF1* = {100.0 * report.micro_f1_star:.2f}",
        f"MCC      = {report.mcc:.2f}",
        f"n_scored = {report.n_scored}",
    ]
    for s in report.per_label:
        lines.append(
            f"  {s.label:<10} P={100.0 * s.precision:6.2f} R={100.0 * s.recall:6.2f} "
            f"F1={100.0 * s.f1:6.2f} support={s.support}"
        )
    return "\n".join(lines) + "\n"
