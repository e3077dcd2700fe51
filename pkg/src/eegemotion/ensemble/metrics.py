"""Classification metrics over the three VAD levels.

Binary quantities follow the usual TP/TN/FP/FN definitions. For three levels,
each level is scored one-vs-rest and the results are macro-averaged; accuracy
stays plain multi-class accuracy. ``balanced_accuracy`` is the mean per-level
recall, which equals (sensitivity + specificity) / 2 in the binary case.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import LEVELS, DomainError


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den > 0 else 0.0


def f1_paper_form(sensitivity: float, specificity: float) -> float:
    """Harmonic mean of sensitivity and specificity."""
    s = sensitivity + specificity
    return 2.0 * sensitivity * specificity / s if s > 0 else 0.0


def f1_standard_form(precision: float, recall: float) -> float:
    s = precision + recall
    return 2.0 * precision * recall / s if s > 0 else 0.0


@dataclass(frozen=True)
class BinaryMetrics:
    accuracy: float
    sensitivity: float
    specificity: float
    balanced_accuracy: float
    f1_paper: float
    precision: float
    f1_standard: float


def binary_metrics(tp: int, tn: int, fp: int, fn: int) -> BinaryMetrics:
    sens = _ratio(tp, tp + fn)
    spec = _ratio(tn, tn + fp)
    prec = _ratio(tp, tp + fp)
    return BinaryMetrics(
        accuracy=_ratio(tp + tn, tp + tn + fp + fn),
        sensitivity=sens,
        specificity=spec,
        balanced_accuracy=(sens + spec) / 2.0,
        f1_paper=f1_paper_form(sens, spec),
        precision=prec,
        f1_standard=f1_standard_form(prec, sens),
    )


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    balanced_accuracy: float
    f1_paper: float
    f1_standard: float
    sensitivity: float
    specificity: float
    confusion: np.ndarray = field(repr=False)
    labels: tuple[int, ...] = LEVELS
    per_level: dict = field(default_factory=dict, repr=False)

    @property
    def f1(self) -> float:
        return self.f1_paper

    @property
    def n(self) -> int:
        return int(self.confusion.sum())

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "balanced_accuracy": self.balanced_accuracy,
            "f1_paper": self.f1_paper,
            "f1_standard": self.f1_standard,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "n": self.n,
        }


def confusion_matrix(y_true, y_pred, labels=LEVELS) -> np.ndarray:
    """Counts with true labels on rows and predictions on columns."""
    index = {lab: i for i, lab in enumerate(labels)}
    k = len(labels)
    try:
        t = np.array([index[v] for v in np.asarray(y_true).tolist()], dtype=np.int64)
        p = np.array([index[v] for v in np.asarray(y_pred).tolist()], dtype=np.int64)
    except KeyError as exc:
        raise DomainError(f"label {exc.args[0]!r} not in {labels}") from None
    return np.bincount(t * k + p, minlength=k * k).reshape(k, k)


def report_from_confusion(cm: np.ndarray, labels=LEVELS) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    n = cm.sum()
    if n == 0:
        raise DomainError("empty test set")
    per = {}
    for i, lab in enumerate(labels):
        tp = cm[i, i]
        fn = cm[i].sum() - tp
        fp = cm[:, i].sum() - tp
        tn = n - tp - fn - fp
        per[lab] = binary_metrics(int(tp), int(tn), int(fp), int(fn))
    # levels absent from the test labels carry no recall information
    present = [lab for i, lab in enumerate(labels) if cm[i].sum() > 0]
    active = [lab for i, lab in enumerate(labels) if cm[i].sum() + cm[:, i].sum() > 0]
    macro = lambda attr, labs: float(np.mean([getattr(per[l], attr) for l in labs]))  # noqa: E731
    return MetricsReport(
        accuracy=float(np.trace(cm) / n),
        balanced_accuracy=macro("sensitivity", present),
        f1_paper=macro("f1_paper", present),
        f1_standard=macro("f1_standard", active),
        sensitivity=macro("sensitivity", present),
        specificity=macro("specificity", labels),
        confusion=cm,
        labels=tuple(labels),
        per_level=per,
    )


def evaluate_labels(y_true, y_pred, labels=LEVELS) -> MetricsReport:
    if len(y_true) == 0:
        raise DomainError("empty test set")
    return report_from_confusion(confusion_matrix(y_true, y_pred, labels), labels)


def evaluate(model, X_test, y_test) -> MetricsReport:
    y_test = np.asarray(y_test)
    if len(y_test) == 0:
        raise DomainError("empty test set")
    y_pred = model.predict(X_test)
    seen = set(y_test.tolist()) | set(np.asarray(model.classes).tolist())
    labels = LEVELS if seen <= set(LEVELS) else tuple(sorted(seen))
    return evaluate_labels(y_test, y_pred, labels)
