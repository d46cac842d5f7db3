"""Confusion-matrix metrics with macro averaging, and fold aggregation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import MogkanError

__all__ = [
    "ConfusionMatrix",
    "MetricsReport",
    "CVSummary",
    "confusion",
    "accuracy",
    "per_class_metrics",
    "macro_metrics",
    "evaluate",
    "cv_aggregate",
    "format_table",
]

METRICS = ("accuracy", "macro_precision", "macro_recall", "macro_f1")

ACCURACY_NOTE = (
    "accuracy = trace / total; the per-class TP+TN+FP+FN sum over all classes "
    "equals C * total and is not used as the denominator"
)


@dataclass
class ConfusionMatrix:
    """``counts[t, p]`` = number of samples of true class ``t`` predicted as ``p``."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise MogkanError("shape-mismatch", "confusion matrix must be square")
        if (self.counts < 0).any():
            raise MogkanError("negative-count", "counts must be non-negative")

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self) -> np.ndarray:
        return np.diag(self.counts)

    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=0) - self.tp()

    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp()

    def tn(self) -> np.ndarray:
        return self.total - self.tp() - self.fp() - self.fn()


def confusion(y_true, y_pred, num_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=int).ravel()
    y_pred = np.asarray(y_pred, dtype=int).ravel()
    if y_true.shape != y_pred.shape:
        raise MogkanError("length-mismatch", f"{len(y_true)} true labels vs {len(y_pred)} predictions")
    for arr in (y_true, y_pred):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise MogkanError("label-out-of-range", f"labels must lie in [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise MogkanError("empty-matrix", "accuracy of an empty confusion matrix")
    return float(cm.tp().sum() / cm.total)


def _ratio(num: np.ndarray, den: np.ndarray):
    undefined = den == 0
    out = np.divide(num, den, out=np.zeros(len(num)), where=~undefined)
    return out, undefined


def per_class_metrics(cm: ConfusionMatrix) -> dict:
    """Per-class precision, recall and F1; 0/0 ratios become 0 and are flagged."""
    tp, fp, fn = (a.astype(float) for a in (cm.tp(), cm.fp(), cm.fn()))
    precision, p_undef = _ratio(tp, tp + fp)
    recall, r_undef = _ratio(tp, tp + fn)
    f1, f_undef = _ratio(2 * precision * recall, precision + recall)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "precision_undefined": p_undef,
        "recall_undefined": r_undef,
        "f1_undefined": f_undef,
    }


def macro_metrics(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Unweighted class means of precision, recall and per-class F1."""
    if cm.total == 0:
        raise MogkanError("empty-matrix", "macro metrics of an empty confusion matrix")
    pc = per_class_metrics(cm)
    return float(pc["precision"].mean()), float(pc["recall"].mean()), float(pc["f1"].mean())


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: list[list[int]] = field(default_factory=list)
    undefined: dict = field(default_factory=dict)

    def values(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in METRICS}

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(y_true, y_pred, num_classes: int) -> MetricsReport:
    cm = confusion(y_true, y_pred, num_classes)
    p, r, f = macro_metrics(cm)
    pc = per_class_metrics(cm)
    undefined = {
        key.removesuffix("_undefined"): np.flatnonzero(pc[key]).tolist()
        for key in ("precision_undefined", "recall_undefined", "f1_undefined")
        if pc[key].any()
    }
    return MetricsReport(accuracy(cm), p, r, f, cm.counts.tolist(), undefined)


@dataclass
class CVSummary:
    per_fold: list[MetricsReport]
    mean: dict[str, float]
    std: dict[str, float]
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "per_fold": [r.to_dict() for r in self.per_fold],
            "summary": {m: {"mean": self.mean[m], "std": self.std[m]} for m in METRICS},
            "flags": list(self.flags),
            "notes": [ACCURACY_NOTE, "std is the sample standard deviation across folds (n - 1)"],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def cv_aggregate(reports: list[MetricsReport]) -> CVSummary:
    """Mean and sample (n - 1) standard deviation of each metric over folds."""
    if not reports:
        raise MogkanError("empty-input", "no fold reports to aggregate")
    flags = []
    mean, std = {}, {}
    for m in METRICS:
        vals = np.array([getattr(r, m) for r in reports], dtype=float)
        mean[m] = float(vals.mean()) if np.ptp(vals) else float(vals[0])
        std[m] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    if len(reports) == 1:
        flags.append("single-fold: std reported as 0")
    for i, r in enumerate(reports):
        if r.undefined:
            flags.append(f"fold {i}: undefined per-class ratios set to 0: {r.undefined}")
    return CVSummary(list(reports), mean, std, flags)


def format_table(rows: dict[str, CVSummary]) -> str:
    """Plain-text table with one ``mean ± std`` column per metric."""
    header = ["Data", "Accuracy Mean ± std", "Precision Mean ± std", "Recall Mean ± std", "F1 Score Mean ± std"]
    lines = ["\t".join(header)]
    for name, s in rows.items():
        cells = [f"{s.mean[m]:.4f} ± {s.std[m]:.4f}" for m in METRICS]
        lines.append("\t".join([name, *cells]))
    return "\n".join(lines) + "\n"
