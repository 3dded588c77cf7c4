"""Confusion matrices and the multiclass metric family built on them.

Every per-class quantity comes from the one-vs-rest reduction of the confusion
matrix (rows = true class, columns = predicted class). Ratios whose denominator is
zero are reported as 0.0 and flagged undefined via :class:`Ratio`.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np


class Ratio(float):
    """A float carrying a ``defined`` flag; undefined ratios hold 0.0."""

    defined: bool

    def __new__(cls, value: float, defined: bool = True):
        obj = super().__new__(cls, value)
        obj.defined = defined
        return obj

    def __repr__(self) -> str:
        return float.__repr__(self) if self.defined else f"{float.__repr__(self)} (undefined)"


def ratio(num: float, den: float) -> Ratio:
    return Ratio(num / den) if den > 0 else Ratio(0.0, defined=False)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if counts.shape != (k, k):
            raise ValueError(f"counts shape {counts.shape} does not match {k} classes")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def supports(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def confusion_matrix(
    y_true: Sequence[int], y_pred: Sequence[int], n_classes: int, class_names: Sequence[str] | None = None
) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D and of equal length")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"label outside [0, {n_classes})")
    counts = np.bincount(y_true * n_classes + y_pred, minlength=n_classes * n_classes)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(n_classes))
    return ConfusionMatrix(counts.reshape(n_classes, n_classes), names)


def one_vs_rest(cm: ConfusionMatrix, c: int) -> tuple[int, int, int, int]:
    """``(TP, FP, FN, TN)`` for class ``c`` against all others."""
    if not 0 <= c < cm.n_classes:
        raise ValueError(f"class index {c} out of range")
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[:, c].sum()) - tp
    fn = int(cm.counts[c, :].sum()) - tp
    return tp, fp, fn, cm.total - tp - fp - fn


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[Ratio, Ratio, Ratio]:
    # 2TP/(2TP+FP+FN) is the harmonic mean of precision and recall where both exist.
    return ratio(tp, tp + fp), ratio(tp, tp + fn), ratio(2 * tp, 2 * tp + fp + fn)


def accuracy(cm: ConfusionMatrix) -> float:
    """Trace over total: the share of correctly classified samples."""
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix is undefined")
    return int(np.trace(cm.counts)) / cm.total


def mcc(tp: int, fp: int, fn: int, tn: int) -> Ratio:
    """Matthews correlation; products are exact Python integers before the square root."""
    tp, fp, fn, tn = int(tp), int(fp), int(fn), int(tn)
    num = tp * tn - fp * fn
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return Ratio(0.0, defined=False)
    return Ratio(num / math.sqrt(den))


def stability_metrics(tp: int, fp: int, fn: int, tn: int) -> tuple[Ratio, Ratio, Ratio, Ratio, Ratio, Ratio]:
    """``(TNR, NPV, FPR, FDR, FOR, FNR)``."""
    return (
        ratio(tn, tn + fp),
        ratio(tn, tn + fn),
        ratio(fp, fp + tn),
        ratio(fp, fp + tp),
        ratio(fn, fn + tn),
        ratio(fn, fn + tp),
    )


PER_CLASS_FIELDS = ("precision", "recall", "f1", "mcc", "tnr", "npv", "fpr", "fdr", "for_rate", "fnr")


@dataclass(frozen=True)
class PerClassMetrics:
    name: str
    support: int
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    mcc: float
    tnr: float
    npv: float
    fpr: float
    fdr: float
    for_rate: float
    fnr: float
    undefined: tuple[str, ...] = ()

    @classmethod
    def from_counts(cls, name: str, tp: int, fp: int, fn: int, tn: int) -> PerClassMetrics:
        values = (*precision_recall_f1(tp, fp, fn), mcc(tp, fp, fn, tn), *stability_metrics(tp, fp, fn, tn))
        undefined = tuple(f for f, v in zip(PER_CLASS_FIELDS, values) if not v.defined)
        return cls(name, tp + fn, tp, fp, fn, tn, *(float(v) for v in values), undefined=undefined)

    def to_dict(self) -> dict:
        d = {"name": self.name, "support": self.support, "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}
        d.update({f: getattr(self, f) for f in PER_CLASS_FIELDS})
        d["undefined"] = list(self.undefined)
        return d


def per_class_metrics(cm: ConfusionMatrix) -> list[PerClassMetrics]:
    return [PerClassMetrics.from_counts(name, *one_vs_rest(cm, c)) for c, name in enumerate(cm.class_names)]


def averages(per_class: Sequence[PerClassMetrics]) -> dict[str, dict[str, float]]:
    """Macro (unweighted), micro (pooled counts) and support-weighted P/R/F1."""
    keys = ("precision", "recall", "f1")
    table = np.array([[getattr(m, k) for k in keys] for m in per_class], dtype=np.float64)
    supports = np.array([m.support for m in per_class], dtype=np.float64)
    macro = table.mean(axis=0)
    weighted = (supports @ table) / supports.sum() if supports.sum() > 0 else np.zeros(3)
    tp = sum(m.tp for m in per_class)
    fp = sum(m.fp for m in per_class)
    fn = sum(m.fn for m in per_class)
    micro = [float(v) for v in precision_recall_f1(tp, fp, fn)]
    return {
        "macro": dict(zip(keys, map(float, macro))),
        "micro": dict(zip(keys, micro)),
        "weighted": dict(zip(keys, map(float, weighted))),
    }


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """ROC points ``(fpr, tpr, thresholds)`` from a descending sweep over distinct scores.

    Tied scores move together, so each tie group contributes one diagonal segment.
    The curve starts at (0, 0) with threshold +inf.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and of equal length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tps = np.cumsum(y)[last_of_group]
    fps = (last_of_group + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thresholds = np.r_[np.inf, s[last_of_group]]
    return fpr, tpr, thresholds


def trapezoid_area(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum((x[1:] - x[:-1]) * (y[1:] + y[:-1])) / 2.0)


def roc_auc(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, float]:
    """ROC points as an ``(M, 2)`` array of (FPR, TPR) and the trapezoidal AUC."""
    fpr, tpr, _ = roc_curve(scores, labels)
    return np.column_stack([fpr, tpr]), trapezoid_area(fpr, tpr)


@dataclass(frozen=True)
class MetricsReport:
    confusion: ConfusionMatrix
    accuracy: float
    per_class: list[PerClassMetrics]
    averages: dict[str, dict[str, float]]
    macro_mcc: float
    auc: list[float | None] = field(default_factory=list)
    roc: dict[str, np.ndarray] = field(default_factory=dict, compare=False)
    loss: float | None = None
    timing: dict[str, float] | None = field(default=None, compare=False)

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.confusion.class_names

    @property
    def macro_auc(self) -> float | None:
        vals = [a for a in self.auc if a is not None]
        return float(np.mean(vals)) if vals else None

    def scalars(self) -> dict:
        """Every scalar derived from the confusion matrix (AUC and loss excluded)."""
        out: dict = {"accuracy": self.accuracy, "macro_mcc": self.macro_mcc}
        for avg, vals in self.averages.items():
            for k, v in vals.items():
                out[f"{avg}_{k}"] = v
        for m in self.per_class:
            for f in PER_CLASS_FIELDS:
                out[f"{m.name}.{f}"] = getattr(m, f)
        return out

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "class_names": list(self.class_names),
            "n_samples": self.confusion.total,
            "accuracy": self.accuracy,
            "loss": self.loss,
            "macro_mcc": self.macro_mcc,
            "averages": self.averages,
            "auc": dict(zip(self.class_names, self.auc)) if self.auc else {},
            "macro_auc": self.macro_auc,
            "per_class": [m.to_dict() for m in self.per_class],
            "confusion_matrix": self.confusion.counts.tolist(),
        }
        if include_timing and self.timing is not None:
            d["timing"] = self.timing
        return d


def report_from_confusion(
    cm: ConfusionMatrix,
    auc: list[float | None] | None = None,
    roc: dict[str, np.ndarray] | None = None,
    loss: float | None = None,
    timing: dict[str, float] | None = None,
) -> MetricsReport:
    per_class = per_class_metrics(cm)
    return MetricsReport(
        confusion=cm,
        accuracy=accuracy(cm),
        per_class=per_class,
        averages=averages(per_class),
        macro_mcc=float(np.mean([m.mcc for m in per_class])),
        auc=list(auc) if auc is not None else [],
        roc=dict(roc) if roc is not None else {},
        loss=loss,
        timing=timing,
    )


def full_report(
    y_true: Sequence[int],
    y_pred: Sequence[int],
    probabilities: np.ndarray | None,
    class_names: Sequence[str],
    timing: dict[str, float] | None = None,
    loss: float | None = None,
) -> MetricsReport:
    """Confusion matrix, per-class and averaged metrics, and one-vs-rest ROC/AUC.

    A class's AUC is None when it is absent from ``y_true`` or is the only class present.
    """
    k = len(class_names)
    cm = confusion_matrix(y_true, y_pred, k, class_names)
    auc: list[float | None] = []
    roc: dict[str, np.ndarray] = {}
    if probabilities is not None:
        probabilities = np.asarray(probabilities, dtype=np.float64)
        if probabilities.shape != (len(y_true), k):
            raise ValueError(f"probabilities shape {probabilities.shape}, expected {(len(y_true), k)}")
        y_true = np.asarray(y_true)
        for c, name in enumerate(class_names):
            positive = y_true == c
            if positive.all() or not positive.any():
                auc.append(None)
                continue
            points, area = roc_auc(probabilities[:, c], positive)
            auc.append(area)
            roc[name] = points
    return report_from_confusion(cm, auc, roc, loss, timing)
