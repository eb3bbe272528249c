"""Confusion matrices, one-vs-rest per-class metrics, and report formatting.

Per-class accuracy is (TP + TN) / total in the one-vs-rest sense, alongside
sensitivity TP/(TP+FN) and specificity TN/(TN+FP). Zero-support metrics are
flagged as undefined (None) rather than silently reported as 0. Artefact
windows count as negatives in every other class's one-vs-rest tallies.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .io import BreathClass, N_CLASSES


class EmptyMatrix(Exception):
    pass


class EmptyInput(Exception):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[true][predicted], 5x5."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or np.any(counts < 0):
            raise ValueError(f"expected a non-negative {N_CLASSES}x{N_CLASSES} matrix")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def overall_accuracy(self) -> float:
        if self.total == 0:
            raise EmptyMatrix("confusion matrix is empty")
        return float(np.trace(self.counts) / self.total)


@dataclass(frozen=True)
class ClassMetrics:
    breath_class: BreathClass
    sensitivity: Optional[float]  # None when support is 0
    specificity: Optional[float]  # None when there are no negatives
    accuracy: float
    support: int


def confusion(pairs: Iterable[tuple[BreathClass, BreathClass]]) -> ConfusionMatrix:
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for true, predicted in pairs:
        counts[int(true), int(predicted)] += 1
    return ConfusionMatrix(counts=counts)


def class_metrics(cm: ConfusionMatrix, breath_class: BreathClass) -> ClassMetrics:
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    c = int(breath_class)
    counts = cm.counts
    tp = int(counts[c, c])
    fn = int(counts[c].sum() - tp)
    fp = int(counts[:, c].sum() - tp)
    tn = cm.total - tp - fn - fp
    sensitivity = tp / (tp + fn) if tp + fn > 0 else None
    specificity = tn / (tn + fp) if tn + fp > 0 else None
    return ClassMetrics(
        breath_class=breath_class,
        sensitivity=sensitivity,
        specificity=specificity,
        accuracy=(tp + tn) / cm.total,
        support=tp + fn,
    )


def accuracy_split(
    pairs: Sequence[tuple[BreathClass, BreathClass]]
) -> tuple[float, Optional[float]]:
    """(accuracy over all windows, accuracy over windows whose true label is
    not Artefact). Predictions into the Artefact class by real breaths still
    count as errors; the excluding value is None when no real breaths exist."""
    if not pairs:
        raise EmptyInput("no prediction pairs")
    correct_all = sum(1 for true, pred in pairs if true == pred)
    breaths = [(t, p) for t, p in pairs if t != BreathClass.ARTEFACT]
    including = correct_all / len(pairs)
    if not breaths:
        return including, None
    excluding = sum(1 for t, p in breaths if t == p) / len(breaths)
    return including, excluding


def _pct(value: Optional[float]) -> str:
    return "undefined" if value is None else f"{100.0 * value:.2f}%"


def report(cm: ConfusionMatrix, split: tuple[float, Optional[float]]) -> str:
    """Plain-text report: per-class metric table plus the with/without
    artefact accuracy rows. Deterministic for fixed inputs."""
    lines = []
    lines.append("Per-class metrics (one-vs-rest)")
    lines.append(f"{'Class':<16}{'Sensitivity':>14}{'Specificity':>14}{'Accuracy':>12}{'Support':>10}")
    for cls in BreathClass:
        m = class_metrics(cm, cls)
        lines.append(
            f"{cls.label:<16}{_pct(m.sensitivity):>14}{_pct(m.specificity):>14}"
            f"{_pct(m.accuracy):>12}{m.support:>10}"
        )
    including, excluding = split
    lines.append("")
    lines.append("Overall accuracy")
    lines.append(f"{'including artefacts':<24}{_pct(including):>10}")
    lines.append(f"{'excluding artefacts':<24}{_pct(excluding):>10}")
    lines.append("")
    lines.append("Notes: per-class negatives include artefact windows; 'excluding"
                 " artefacts' drops windows by true label only.")
    return "\n".join(lines) + "\n"


def report_payload(cm: ConfusionMatrix, split: tuple[float, Optional[float]]) -> dict:
    """Machine-readable counterpart of report()."""
    including, excluding = split
    return {
        "confusion": cm.counts.tolist(),
        "classes": [
            {
                "class": cls.label,
                "sensitivity": (m := class_metrics(cm, cls)).sensitivity,
                "specificity": m.specificity,
                "accuracy": m.accuracy,
                "support": m.support,
            }
            for cls in BreathClass
        ],
        "accuracy_including_artefacts": including,
        "accuracy_excluding_artefacts": excluding,
        "overall_accuracy": cm.overall_accuracy(),
    }
