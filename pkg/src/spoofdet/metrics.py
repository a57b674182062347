"""Binary classification metrics with genuine speech as the positive class."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

from .data.labels import Label
from .tensor.core import UsageError


class UndefinedMetricError(ValueError):
    """A metric needs both classes present in the ground truth."""


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class ClassMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float
    support: int


class CurvePoint(NamedTuple):
    threshold: float
    x: float
    y: float


def _arrays(*arrays) -> list[np.ndarray]:
    out = [np.asarray(a).reshape(-1) for a in arrays]
    if any(a.size != out[0].size for a in out):
        raise UsageError("prediction arrays differ in length")
    if out[0].size == 0:
        raise UsageError("no predictions")
    return out


def confusion(truth: Sequence[int], predicted: Sequence[int]) -> ConfusionCounts:
    y, p = _arrays(truth, predicted)
    pos_t, pos_p = y == Label.GENUINE, p == Label.GENUINE
    return ConfusionCounts(
        tp=int((pos_t & pos_p).sum()),
        fp=int((~pos_t & pos_p).sum()),
        tn=int((~pos_t & ~pos_p).sum()),
        fn=int((pos_t & ~pos_p).sum()),
    )


def _ratio(num: int, den: int) -> float:
    # a class that is never predicted gets precision 0, not NaN
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r else 0.0


def per_class(c: ConfusionCounts) -> dict[Label, ClassMetrics]:
    gp, gr = _ratio(c.tp, c.tp + c.fp), _ratio(c.tp, c.tp + c.fn)
    sp, sr = _ratio(c.tn, c.tn + c.fn), _ratio(c.tn, c.tn + c.fp)
    return {
        Label.GENUINE: ClassMetrics(gp, gr, _f1(gp, gr), c.tp + c.fn),
        Label.SYNTHESIZED: ClassMetrics(sp, sr, _f1(sp, sr), c.tn + c.fp),
    }


def weighted_metrics(c: ConfusionCounts) -> tuple[float, float, float, dict[Label, ClassMetrics]]:
    """Prevalence-weighted precision, recall and F-1, plus the per-class values."""
    if c.total == 0:
        raise ValueError("no predictions")
    pc = per_class(c)
    w = {lab: m.support / c.total for lab, m in pc.items()}
    precision = sum(w[lab] * m.precision for lab, m in pc.items())
    recall = sum(w[lab] * m.recall for lab, m in pc.items())
    f1 = sum(w[lab] * m.f1 for lab, m in pc.items())
    return precision, recall, f1, pc


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total


def balanced_accuracy(c: ConfusionCounts) -> float:
    if c.tp + c.fn == 0 or c.tn + c.fp == 0:
        raise UndefinedMetricError("balanced accuracy needs both classes in the ground truth")
    return 0.5 * (c.tp / (c.tp + c.fn) + c.tn / (c.tn + c.fp))


def _sweep(truth, scores):
    """Cumulative (tp, fp) at each distinct score, thresholds descending."""
    y, s = _arrays(truth, scores)
    s = s.astype(np.float64)
    pos = (y == Label.GENUINE).astype(np.int64)
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("curve metrics need both classes in the ground truth")
    order = np.argsort(-s, kind="stable")
    s, pos = s[order], pos[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(pos)[last]
    fps = (last + 1) - tps
    return s[last], tps, fps, n_pos, n_neg


def roc_auc(truth: Sequence[int], scores: Sequence[float]) -> tuple[float, list[CurvePoint]]:
    """Trapezoidal area under TPR vs FPR with one vertex per distinct score.

    Returns the area and (threshold, fpr, tpr) points starting at (inf, 0, 0).
    """
    thr, tps, fps, n_pos, n_neg = _sweep(truth, scores)
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    area = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    points = [CurvePoint(t, float(x), float(y)) for t, x, y in zip(np.r_[np.inf, thr], fpr, tpr)]
    return area, points


def pr_auc(truth: Sequence[int], scores: Sequence[float]) -> tuple[float, list[CurvePoint]]:
    """Average precision: sum over thresholds of precision times recall increment.

    Step integration, no interpolation between PR points. Returns the area and
    (threshold, recall, precision) points, highest threshold first.
    """
    thr, tps, fps, n_pos, _ = _sweep(truth, scores)
    precision = tps / (tps + fps)
    recall = tps / n_pos
    area = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    points = [CurvePoint(float(t), float(r), float(p)) for t, r, p in zip(thr, recall, precision)]
    return area, points


def percent(x: float, digits: int = 2) -> str:
    """Percentage string rounded half away from zero, e.g. 0.103245 -> '10.32%'."""
    q = Decimal(repr(x * 100)).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_UP)
    return f"{q}%"


@dataclass
class MetricsReport:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    balanced_accuracy: float
    roc_auc: float
    pr_auc: float
    per_class: dict[str, dict[str, float]]
    confusion: ConfusionCounts
    roc_curve: list[CurvePoint] = field(repr=False, default_factory=list)
    pr_curve: list[CurvePoint] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision_weighted": self.precision_weighted,
            "recall_weighted": self.recall_weighted,
            "f1_weighted": self.f1_weighted,
            "balanced_accuracy": self.balanced_accuracy,
            "roc_auc": self.roc_auc,
            "pr_auc": self.pr_auc,
            "per_class": self.per_class,
            "confusion": self.confusion._asdict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def table_row(self) -> dict[str, str]:
        """Values formatted the way the results table prints them."""
        return {
            "accuracy": percent(self.accuracy),
            "precision": percent(self.precision_weighted),
            "recall": percent(self.recall_weighted),
            "f1": percent(self.f1_weighted),
            "balanced_accuracy": percent(self.balanced_accuracy),
            "roc_auc": f"{Decimal(repr(self.roc_auc)).quantize(Decimal('0.0001'), rounding=ROUND_HALF_UP)}",
            "pr_auc": f"{Decimal(repr(self.pr_auc)).quantize(Decimal('0.0001'), rounding=ROUND_HALF_UP)}",
        }


def evaluate(truth: Sequence[int], predicted: Sequence[int], scores: Sequence[float]) -> MetricsReport:
    """Every reported metric for one run; ``scores`` grow with P(genuine)."""
    c = confusion(truth, predicted)
    precision, recall, f1, pc = weighted_metrics(c)
    roc, roc_pts = roc_auc(truth, scores)
    pr, pr_pts = pr_auc(truth, scores)
    return MetricsReport(
        accuracy=accuracy(c),
        precision_weighted=precision,
        recall_weighted=recall,
        f1_weighted=f1,
        balanced_accuracy=balanced_accuracy(c),
        roc_auc=roc,
        pr_auc=pr,
        per_class={str(lab): m._asdict() for lab, m in pc.items()},
        confusion=c,
        roc_curve=roc_pts,
        pr_curve=pr_pts,
    )


def write_curve(points: Sequence[CurvePoint], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["threshold", "x", "y"])
        for p in points:
            w.writerow([repr(float(p.threshold)), repr(float(p.x)), repr(float(p.y))])
