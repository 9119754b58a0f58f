"""Confusion matrices and per-class precision / recall / F1 reports.

Rows of a confusion matrix are ground truth, columns are predictions. Any
ratio whose denominator is zero is reported as 0.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def one_vs_rest(self, c: int) -> tuple[int, int, int, int]:
        """(TP, FP, FN, TN) for class ``c``."""
        tp = int(self.counts[c, c])
        fp = int(self.counts[:, c].sum()) - tp
        fn = int(self.counts[c, :].sum()) - tp
        return tp, fp, fn, self.total - tp - fp - fn


def confusion_matrix(ground_truths, predictions, n_classes: int) -> ConfusionMatrix:
    gt = np.asarray(ground_truths, dtype=np.int64).ravel()
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    if gt.shape != pred.shape:
        raise ValueError(f"{gt.size} ground truths vs {pred.size} predictions")
    if n_classes < 1:
        raise ValueError("n_classes must be positive")
    for arr in (gt, pred):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"label outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (gt, pred), 1)
    return ConfusionMatrix(counts)


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ClassificationReport:
    per_class: tuple[ClassScores, ...]
    support: tuple[int, ...]
    accuracy: float
    macro_avg: ClassScores
    weighted_avg: ClassScores


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def report(cm: ConfusionMatrix) -> ClassificationReport:
    if cm.total == 0:
        raise ValueError("cannot report on an empty confusion matrix")
    scores = []
    for c in range(cm.n_classes):
        tp, fp, fn, _ = cm.one_vs_rest(c)
        p = _ratio(tp, tp + fp)
        r = _ratio(tp, tp + fn)
        scores.append(ClassScores(p, r, _ratio(2 * p * r, p + r)))
    support = cm.counts.sum(axis=1)
    arr = np.array([[s.precision, s.recall, s.f1] for s in scores])
    macro = ClassScores(*arr.mean(axis=0))
    weighted = ClassScores(*(support @ arr / support.sum()))
    return ClassificationReport(
        per_class=tuple(scores),
        support=tuple(int(s) for s in support),
        accuracy=float(np.trace(cm.counts)) / cm.total,
        macro_avg=macro,
        weighted_avg=weighted,
    )


def _names(rep: ClassificationReport, class_names: Sequence[str] | None) -> list[str]:
    if class_names is None:
        return [str(i) for i in range(len(rep.per_class))]
    if len(class_names) != len(rep.per_class):
        raise ValueError("class_names length does not match the report")
    return list(class_names)


def report_rows(rep: ClassificationReport, class_names: Sequence[str] | None = None) -> list[list]:
    """Header plus one row per class, then accuracy, macro and weighted rows."""
    rows: list[list] = [["class", "precision", "recall", "f1", "support"]]
    for name, s, n in zip(_names(rep, class_names), rep.per_class, rep.support):
        rows.append([name, s.precision, s.recall, s.f1, n])
    total = sum(rep.support)
    rows.append(["accuracy", "", "", rep.accuracy, total])
    rows.append(["macro avg", rep.macro_avg.precision, rep.macro_avg.recall, rep.macro_avg.f1, total])
    rows.append(["weighted avg", rep.weighted_avg.precision, rep.weighted_avg.recall, rep.weighted_avg.f1, total])
    return rows


def report_csv(rep: ClassificationReport, class_names: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in report_rows(rep, class_names):
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def report_text(rep: ClassificationReport, class_names: Sequence[str] | None = None, title: str | None = None) -> str:
    """Aligned table with two decimals: Precision, Recall, F1 Score."""
    rows = report_rows(rep, class_names)[1:]
    width = max(12, *(len(str(r[0])) for r in rows)) + 2
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'':<{width}}{'Precision':>10}{'Recall':>10}{'F1 Score':>10}{'Support':>9}")
    n_class_rows = len(rep.per_class)
    for i, (name, p, r, f, n) in enumerate(rows):
        if i == n_class_rows:
            lines.append("")
        cells = [f"{v:>10.2f}" if isinstance(v, float) else f"{'':>10}" for v in (p, r, f)]
        lines.append(f"{name:<{width}}{''.join(cells)}{n:>9}")
    return "\n".join(lines) + "\n"


def confusion_csv(cm: ConfusionMatrix, class_names: Sequence[str] | None = None) -> str:
    names = list(class_names) if class_names is not None else [str(i) for i in range(cm.n_classes)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["truth\\pred", *names])
    for name, row in zip(names, cm.counts):
        writer.writerow([name, *row.tolist()])
    return buf.getvalue()
