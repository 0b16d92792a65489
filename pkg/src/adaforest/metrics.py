"""Multi-class evaluation: confusion matrix, OvR counts, macro P/R/F1, ROC/AUC.

Zero-denominator conventions: precision/recall/F all report 0 when their
denominator is 0 (tiny test splits make empty classes a real case).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class ConfusionMatrix:
    """counts[i, j] = rows with true class i predicted as class j."""

    counts: np.ndarray
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class BinaryCounts:
    tp: int
    fp: int
    fn: int
    tn: int


@dataclass
class RocCurve:
    """(fpr, tpr) points from (0,0) to (1,1), one per distinct score block."""

    points: list[tuple[float, float]]
    thresholds: list[float]


@dataclass
class MetricsReport:
    class_names: list[str]
    per_class_precision: list[float]
    per_class_recall: list[float]
    per_class_f1: list[float]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class_auc: list[float | None] | None = None
    macro_auc: float | None = None
    fbeta_parameter: float = 1.0

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "per_class_precision": self.per_class_precision,
            "per_class_recall": self.per_class_recall,
            "per_class_f1": self.per_class_f1,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class_auc": self.per_class_auc,
            "macro_auc": self.macro_auc,
            "fbeta_parameter": self.fbeta_parameter,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        auc = "" if self.macro_auc is None else f"{self.macro_auc:.5f}"
        header = f"{'':24s} {'macro-P':>9s} {'macro-R':>9s} {'macro-F1':>9s} {'AUC':>9s}"
        row = (
            f"{'overall':24s} {self.macro_precision:9.5f} "
            f"{self.macro_recall:9.5f} {self.macro_f1:9.5f} {auc:>9s}"
        )
        return header + "\n" + row + "\n"


def confusion(y_true, y_pred, class_names: list[str]) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred lengths differ")
    k = len(class_names)
    for arr, name in ((y_true, "y_true"), (y_pred, "y_pred")):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise ValueError(f"{name} contains labels outside the class table")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts=counts, class_names=list(class_names))


def ovr_counts(cm: ConfusionMatrix, c: int) -> BinaryCounts:
    """One-vs-rest binary counts for class c."""
    if not 0 <= c < cm.n_classes:
        raise ValueError(f"class id {c} out of range")
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[:, c].sum()) - tp
    fn = int(cm.counts[c, :].sum()) - tp
    tn = cm.total - tp - fp - fn
    return BinaryCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision(b: BinaryCounts) -> float:
    denom = b.tp + b.fp
    return b.tp / denom if denom else 0.0


def recall(b: BinaryCounts) -> float:
    denom = b.tp + b.fn
    return b.tp / denom if denom else 0.0


def f_measure(b: BinaryCounts, beta: float = 1.0) -> float:
    p = precision(b)
    r = recall(b)
    denom = beta * beta * p + r
    return (beta * beta + 1.0) * p * r / denom if denom else 0.0


def f1(b: BinaryCounts) -> float:
    return f_measure(b, beta=1.0)


def macro_metrics(cm: ConfusionMatrix, fbeta: float = 1.0) -> MetricsReport:
    """Unweighted per-class means over every class in the class table."""
    if cm.n_classes < 1:
        raise ValueError("confusion matrix has no classes")
    ps, rs, fs = [], [], []
    for c in range(cm.n_classes):
        b = ovr_counts(cm, c)
        ps.append(precision(b))
        rs.append(recall(b))
        fs.append(f_measure(b, beta=fbeta))
    return MetricsReport(
        class_names=list(cm.class_names),
        per_class_precision=ps,
        per_class_recall=rs,
        per_class_f1=fs,
        macro_precision=float(np.mean(ps)),
        macro_recall=float(np.mean(rs)),
        macro_f1=float(np.mean(fs)),
        fbeta_parameter=fbeta,
    )


def roc_curve(scores, positives) -> RocCurve:
    """Threshold sweep in descending score order; tied scores move as one block."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=np.int64)
    if scores.shape != positives.shape:
        raise ValueError("scores and positives lengths differ")
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_curve needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    points = [(0.0, 0.0)]
    thresholds: list[float] = []
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        block_pos = int(sorted_pos[i:j].sum())
        tp += block_pos
        fp += (j - i) - block_pos
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(float(sorted_scores[i]))
        i = j
    return RocCurve(points=points, thresholds=thresholds)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the ROC curve."""
    xs = np.array([p[0] for p in curve.points])
    ys = np.array([p[1] for p in curve.points])
    return float(np.trapezoid(ys, xs))


def ovr_macro_auc(proba: np.ndarray, y_true) -> float:
    """Uniformly-weighted mean of per-class one-vs-rest AUCs.

    Classes with no positive or no negative row in y_true are excluded from
    the mean with a warning.
    """
    proba = np.asarray(proba, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64)
    if proba.ndim != 2 or proba.shape[0] != y_true.shape[0]:
        raise ValueError("proba must be (n_rows, n_classes) aligned with y_true")
    values = []
    for c in range(proba.shape[1]):
        positives = (y_true == c).astype(np.int64)
        n_pos = int(positives.sum())
        if n_pos == 0 or n_pos == positives.size:
            warnings.warn(f"class {c} has no positives or no negatives; excluded from macro AUC")
            continue
        values.append(auc(roc_curve(proba[:, c], positives)))
    if not values:
        raise ValueError("no class is scorable for macro AUC")
    return float(np.mean(values))


def evaluate(y_true, y_pred, proba, class_names: list[str], fbeta: float = 1.0) -> MetricsReport:
    """Full report: macro P/R/F from the confusion matrix plus OvR AUCs."""
    cm = confusion(y_true, y_pred, class_names)
    report = macro_metrics(cm, fbeta=fbeta)
    proba = np.asarray(proba, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64)
    per_auc: list[float | None] = []
    scored = []
    for c in range(len(class_names)):
        positives = (y_true == c).astype(np.int64)
        n_pos = int(positives.sum())
        if n_pos == 0 or n_pos == positives.size:
            per_auc.append(None)
            continue
        value = auc(roc_curve(proba[:, c], positives))
        per_auc.append(value)
        scored.append(value)
    report.per_class_auc = per_auc
    report.macro_auc = float(np.mean(scored)) if scored else None
    return report
