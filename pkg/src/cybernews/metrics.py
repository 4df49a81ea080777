"""Evaluation suite: confusion matrices, per-class P/R/F1, accuracy, log loss.

Zero-denominator metrics are reported as undefined (None) and rendered as 0
with a flag. Log loss uses the natural log with probabilities clamped to
[1e-15, 1 - 1e-15]; entropy elsewhere in the package is base 2 by convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .newsstore import CategoryDistribution, CyberCategory

N_CLASSES = len(CyberCategory)

_CLAMP = 1e-15


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # 5x5 ints; rows = true code, columns = predicted code

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    precision: float | None
    recall: float | None
    f1: float | None


@dataclass
class EvalReport:
    per_class_accuracy: list[float | None]
    per_class: list[ClassMetrics]
    accuracy: float
    log_loss: float | None
    sample_count: int


def confusion(
    y_true: Sequence[CyberCategory | int], y_pred: Sequence[CyberCategory | int]
) -> ConfusionMatrix:
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    if len(y_true) == 0:
        raise ValueError("cannot build a confusion matrix from zero examples")
    counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[int(t)][int(p)] += 1
    return ConfusionMatrix(counts)


def class_metrics(cm: ConfusionMatrix, class_code: int) -> ClassMetrics:
    """Precision, recall, F1 for one class; 0/0 cases come back as None."""
    tp = int(cm.counts[class_code, class_code])
    fp = int(cm.counts[:, class_code].sum()) - tp
    fn = int(cm.counts[class_code, :].sum()) - tp
    precision = tp / (tp + fp) if tp + fp > 0 else None
    recall = tp / (tp + fn) if tp + fn > 0 else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None if precision is None or recall is None else 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return ClassMetrics(precision, recall, f1)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def per_class_accuracy(cm: ConfusionMatrix, class_code: int) -> float | None:
    """Row-restricted accuracy counts[c][c] / row-sum(c); None on an empty row."""
    row = cm.counts[class_code].sum()
    if row == 0:
        return None
    return float(cm.counts[class_code, class_code] / row)


def log_loss(
    y_true: Sequence[CyberCategory | int], dists: Sequence[CategoryDistribution]
) -> float:
    if len(y_true) != len(dists):
        raise ValueError(f"length mismatch: {len(y_true)} labels vs {len(dists)} distributions")
    total = 0.0
    for t, dist in zip(y_true, dists):
        p = min(max(dist[int(t)], _CLAMP), 1 - _CLAMP)
        total -= np.log(p)
    return float(total / len(y_true))


def evaluate(
    y_true: Sequence[CyberCategory | int],
    y_pred: Sequence[CyberCategory | int],
    dists: Sequence[CategoryDistribution] | None = None,
) -> EvalReport:
    cm = confusion(y_true, y_pred)
    return EvalReport(
        per_class_accuracy=[per_class_accuracy(cm, c) for c in range(N_CLASSES)],
        per_class=[class_metrics(cm, c) for c in range(N_CLASSES)],
        accuracy=accuracy(cm),
        log_loss=log_loss(y_true, dists) if dists is not None else None,
        sample_count=cm.total,
    )


def _cell(value: float | None) -> str:
    # Undefined (0/0) metrics render as 0 with a trailing flag.
    return "  0.0000*" if value is None else f"{value:9.4f}"


def render_report(report: EvalReport) -> str:
    """Fixed-width table: Category, Accuracy, Precision, Recall, F1-Score.

    Per-category accuracy is the row-restricted reading; the recall column is
    reported alongside since the two conventions are easy to conflate.
    Cells flagged * are 0/0-undefined.
    """
    lines = [
        "# per-category accuracy = diagonal / row total (recall column shown for comparison)",
        f"{'Category':<18}{'Accuracy':>9}{'Precision':>10}{'Recall':>9}{'F1-Score':>9}",
    ]
    for c in range(N_CLASSES):
        m = report.per_class[c]
        lines.append(
            f"{CyberCategory(c).name:<18}"
            f"{_cell(report.per_class_accuracy[c])}"
            f"{_cell(m.precision):>10}"
            f"{_cell(m.recall)}"
            f"{_cell(m.f1)}"
        )
    overall = f"{'Overall':<18}{report.accuracy:9.4f}"
    if report.log_loss is not None:
        overall += f"  log_loss={report.log_loss:.4f}"
    lines.append(overall)
    lines.append(f"n={report.sample_count}")
    return "\n".join(lines) + "\n"


def report_to_json(report: EvalReport, path: str | Path | None = None) -> dict:
    payload = {
        "accuracy": report.accuracy,
        "log_loss": report.log_loss,
        "sample_count": report.sample_count,
        "per_class": {
            CyberCategory(c).name: {
                "accuracy": report.per_class_accuracy[c],
                "precision": report.per_class[c].precision,
                "recall": report.per_class[c].recall,
                "f1": report.per_class[c].f1,
            }
            for c in range(N_CLASSES)
        },
    }
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return payload
