"""Accuracy, precision/recall/F1, and ROC-AUC for binary, multiclass, and
multilabel tasks.

Labels travel as n x K 0/1 indicator matrices (one-hot for single-label
tasks); 1-D class-index or binary vectors are accepted and widened. All
averaging is macro (unweighted mean over emitted per-class values); for
binary tasks the AUC is emitted for the positive class only, so the macro
AUC is the conventional binary AUC rather than a degenerate 0.5.

Binary AUC is computed two ways on every call - trapezoidal integration
over the threshold sweep and midrank pair counting - and the call fails
loudly if they disagree beyond 1e-12. Both reduce to exact integer
arithmetic scaled by n_pos * n_neg, so in practice they agree to the last
bit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .ingest import TaskKind


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassPRF:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class PRFReport:
    per_class: tuple[ClassPRF, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    zero_division_hits: int


@dataclass(frozen=True)
class AucReport:
    per_class: tuple[float | None, ...]
    macro: float
    skipped_classes: tuple[int, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    task: TaskKind
    n: int
    accuracy: float
    prf: PRFReport
    auc: AucReport

    def to_dict(self, class_names=None) -> dict:
        names = list(class_names) if class_names else [
            f"class_{i}" for i in range(len(self.prf.per_class))
        ]
        return {
            "task": self.task.value,
            "n": self.n,
            "accuracy": self.accuracy,
            "recall": self.prf.macro_recall,
            "precision": self.prf.macro_precision,
            "f1": self.prf.macro_f1,
            "auc": self.auc.macro,
            "per_class": {
                name: {
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "auc": self.auc.per_class[i],
                }
                for i, (name, c) in enumerate(zip(names, self.prf.per_class))
            },
        }


def _as_indicator(y, k: int | None = None) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim == 1:
        values = arr.astype(np.int64)
        if values.size == 0:
            raise ValidationError("empty label input")
        width = k if k is not None else max(int(values.max()) + 1, 2)
        out = np.zeros((values.size, width), dtype=np.int64)
        out[np.arange(values.size), values] = 1
        return out
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValidationError(f"labels must be a non-empty vector or matrix, got {arr.shape}")
    return (arr > 0.5).astype(np.int64)


def _aligned(y_true, y_pred, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_true)
    b = np.asarray(y_pred)
    width = k
    if width is None:
        for arr in (a, b):
            if arr.ndim == 2:
                width = arr.shape[1]
                break
    t = _as_indicator(a, width)
    p = _as_indicator(b, t.shape[1])
    if t.shape != p.shape:
        raise ValidationError(f"shape mismatch: labels {t.shape} vs predictions {p.shape}")
    return t, p


def accuracy(y_true, y_pred, task: TaskKind) -> float:
    """Row-match fraction; multilabel rows count only on an exact match."""
    t, p = _aligned(y_true, y_pred)
    if task is TaskKind.MULTILABEL:
        return float(np.all(t == p, axis=1).mean())
    return float((np.argmax(t, axis=1) == np.argmax(p, axis=1)).mean())


def confusion_counts(y_true, y_pred, task: TaskKind) -> tuple[ConfusionCounts, ...]:
    """Per-class one-vs-rest confusion counts."""
    t, p = _aligned(y_true, y_pred)
    out = []
    for c in range(t.shape[1]):
        tc, pc = t[:, c], p[:, c]
        tp = int(np.sum((tc == 1) & (pc == 1)))
        fp = int(np.sum((tc == 0) & (pc == 1)))
        fn = int(np.sum((tc == 1) & (pc == 0)))
        tn = int(np.sum((tc == 0) & (pc == 0)))
        out.append(ConfusionCounts(tp, fp, fn, tn))
    return tuple(out)


def precision_recall_f1(y_true, y_pred, task: TaskKind) -> PRFReport:
    """Per-class P/R/F1 plus macro means; zero denominators emit 0."""
    counts = confusion_counts(y_true, y_pred, task)
    per_class = []
    zero_hits = 0
    for c, cc in enumerate(counts):
        precision, z1 = _safe_ratio(cc.tp, cc.tp + cc.fp)
        recall, z2 = _safe_ratio(cc.tp, cc.tp + cc.fn)
        f1, z3 = _safe_ratio(2.0 * precision * recall, precision + recall)
        hits = z1 + z2 + z3
        if hits:
            warnings.warn(
                f"class {c}: zero denominator, emitting 0", UserWarning, stacklevel=2
            )
        zero_hits += hits
        per_class.append(ClassPRF(precision, recall, f1))
    return PRFReport(
        per_class=tuple(per_class),
        macro_precision=float(np.mean([c.precision for c in per_class])),
        macro_recall=float(np.mean([c.recall for c in per_class])),
        macro_f1=float(np.mean([c.f1 for c in per_class])),
        zero_division_hits=zero_hits,
    )


def _safe_ratio(num: float, den: float) -> tuple[float, int]:
    if den == 0:
        return 0.0, 1
    return float(num / den), 0


def micro_precision_recall_f1(y_true, y_pred, task: TaskKind) -> ClassPRF:
    """Micro-averaged P/R/F1: counts pooled over all classes before dividing.

    For single-label tasks micro precision, recall, and F1 all collapse to
    accuracy; macro is the reporting default, this exists behind a flag.
    """
    counts = confusion_counts(y_true, y_pred, task)
    tp = sum(c.tp for c in counts)
    fp = sum(c.fp for c in counts)
    fn = sum(c.fn for c in counts)
    precision, _ = _safe_ratio(tp, tp + fp)
    recall, _ = _safe_ratio(tp, tp + fn)
    f1, _ = _safe_ratio(2.0 * precision * recall, precision + recall)
    return ClassPRF(precision, recall, f1)


def binary_auc(y01: np.ndarray, scores: np.ndarray) -> float | None:
    """AUC of a single score column; None when only one class is present.

    Computes the value twice: (a) trapezoidal area under the threshold-swept
    ROC staircase and (b) midrank pair counting, both in integer arithmetic
    scaled by 2 * n_pos * n_neg; raises if they drift beyond 1e-12.
    """
    y01 = np.asarray(y01).astype(np.int64).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if y01.shape != scores.shape:
        raise ValidationError("labels and scores must align")
    n_pos = int(y01.sum())
    n_neg = int(y01.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return None

    # (a) trapezoid over the threshold sweep, in count space
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_y = y01[order]
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate((boundaries, [len(sorted_scores) - 1]))
    tp = np.cumsum(sorted_y)[cut]
    fp = (cut + 1) - tp
    tp_prev = np.concatenate(([0], tp[:-1]))
    fp_prev = np.concatenate(([0], fp[:-1]))
    twice_area = float(np.sum((fp - fp_prev) * (tp + tp_prev)))
    auc_trapezoid = twice_area / (2.0 * n_pos * n_neg)

    # (b) midrank pair counting (Mann-Whitney with tie correction)
    asc = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_asc = scores[asc]
    i = 0
    while i < len(sorted_asc):
        j = i
        while j + 1 < len(sorted_asc) and sorted_asc[j + 1] == sorted_asc[i]:
            j += 1
        ranks[asc[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum = float(ranks[y01 == 1].sum())
    auc_pairs = (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    if abs(auc_trapezoid - auc_pairs) > 1e-12:
        raise UndefinedMetricError(
            f"AUC estimators disagree: trapezoid {auc_trapezoid!r} vs pairs {auc_pairs!r}"
        )
    return auc_trapezoid


def roc_auc(y_true, scores, task: TaskKind) -> AucReport:
    """Per-class and macro AUC.

    Binary tasks emit the positive-class AUC only (macro equals it);
    multiclass tasks macro-average one-vs-rest AUCs; multilabel tasks skip
    labels that lack a positive or a negative, with a warning. If no class
    has a defined AUC the metric is an error.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        scores = np.column_stack([-scores, scores])
    t = _as_indicator(y_true, scores.shape[1])
    if t.shape[0] != scores.shape[0]:
        raise ValidationError("labels and scores row counts differ")
    k = scores.shape[1]
    class_range = [1] if task is TaskKind.BINARY else range(k)
    per_class: list[float | None] = [None] * k
    skipped = []
    values = []
    for c in class_range:
        auc = binary_auc(t[:, c], scores[:, c])
        per_class[c] = auc
        if auc is None:
            skipped.append(c)
            warnings.warn(
                f"class {c}: AUC undefined (single-class), skipped", UserWarning, stacklevel=2
            )
        else:
            values.append(auc)
    if not values:
        raise UndefinedMetricError("AUC undefined for every class")
    return AucReport(
        per_class=tuple(per_class),
        macro=float(np.mean(values)),
        skipped_classes=tuple(skipped),
    )


def roc_curve_points(y01, scores) -> np.ndarray:
    """ROC staircase as rows (fpr, tpr, threshold), from (0,0) to (1,1).

    Thresholds sweep the distinct score values descending (predict positive
    when score >= threshold); the leading (0, 0) row carries +inf.
    """
    y01 = np.asarray(y01).astype(np.int64).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    n_pos = int(y01.sum())
    n_neg = int(y01.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC undefined with a single class")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_y = y01[order]
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate((boundaries, [len(sorted_scores) - 1]))
    tp = np.cumsum(sorted_y)[cut]
    fp = (cut + 1) - tp
    rows = [(0.0, 0.0, np.inf)]
    for idx, c in enumerate(cut):
        rows.append((fp[idx] / n_neg, tp[idx] / n_pos, sorted_scores[c]))
    return np.asarray(rows, dtype=np.float64)


def full_report(y_true, y_pred, scores, task: TaskKind) -> MetricsReport:
    """Assemble accuracy, P/R/F1, and AUC into one report."""
    t, p = _aligned(y_true, y_pred)
    return MetricsReport(
        task=task,
        n=t.shape[0],
        accuracy=accuracy(t, p, task),
        prf=precision_recall_f1(t, p, task),
        auc=roc_auc(t, scores, task),
    )
