"""Grid search with five-fold cross-validation on the training split.

Cells are scored by mean held-out macro AUC; the winner is refit on the
full training split. Ties break toward the smaller C, then toward the
earlier cell in declared grid order. A fold whose training half loses a
class entirely (tiny classes make this reachable) scores 0.5 with a
warning instead of aborting the search.

Folds, cell order, and every trainer seed derive deterministically from
the search seed, so identical (data, grid, seed) always reproduces the
same CVResult. Cells and folds are independent jobs; callers may
parallelize them, and the assembly below is order-independent.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError, UndefinedMetricError, ValidationError
from .ingest import LabelSchema, TaskKind
from .kernel_svm import (
    KernelKind,
    KernelModel,
    KernelSpec,
    kernel_predict,
    train_kernel_svm,
)
from .linear_models import (
    ScoreMatrix,
    SvmLoss,
    predict_labels,
    predict_scores,
    train_linear_svm,
    train_logreg,
)
from .kernel_svm import kernel_predict_labels
from .metrics import roc_auc
from .rng import derive_seed, shuffle

DEFAULT_C_VALUES = (0.1, 1.0, 10.0, 100.0)
N_FOLDS = 5


class ClassifierFamily(enum.Enum):
    LOGREG = "logreg"
    LINEAR_SVM = "linear-svm"
    KERNEL_SVM = "kernel-svm"


@dataclass(frozen=True)
class HyperGrid:
    c_values: tuple[float, ...] = DEFAULT_C_VALUES
    losses: tuple[SvmLoss, ...] = (SvmLoss.HINGE, SvmLoss.SQUARED_HINGE)
    kernels: tuple[KernelKind, ...] = (KernelKind.LINEAR, KernelKind.RBF)
    gamma_modes: tuple = ("scale", "auto")

    def __post_init__(self):
        if not self.c_values or not self.losses or not self.kernels or not self.gamma_modes:
            raise ValidationError("grid lists must be non-empty")
        if any(c <= 0 for c in self.c_values):
            raise ValidationError("all C values must be positive")


@dataclass(frozen=True)
class GridCell:
    index: int
    family: ClassifierFamily
    C: float
    loss: SvmLoss | None = None
    kernel: KernelKind | None = None
    gamma_mode: object = None

    def config(self) -> dict:
        out = {"family": self.family.value, "C": self.C}
        if self.loss is not None:
            out["loss"] = self.loss.value
        if self.kernel is not None:
            out["kernel"] = self.kernel.value
        if self.gamma_mode is not None:
            out["gamma_mode"] = self.gamma_mode
        return out

    def describe(self) -> str:
        parts = [f"C={self.C:g}"]
        if self.loss is not None:
            parts.append(f"loss={self.loss.value}")
        if self.kernel is not None:
            parts.append(f"kernel={self.kernel.value}")
        if self.gamma_mode is not None:
            parts.append(f"gamma={self.gamma_mode}")
        return ",".join(parts)


@dataclass(frozen=True)
class CellResult:
    cell: GridCell
    fold_aucs: tuple[float, ...]
    mean_auc: float
    std_auc: float


@dataclass(frozen=True)
class CVResult:
    cells: tuple[CellResult, ...]
    winner: GridCell
    n_folds: int
    seed: int
    degenerate_folds: int

    def csv_rows(self) -> list[tuple[str, str, int, float]]:
        rows = []
        for cr in self.cells:
            for fold, auc in enumerate(cr.fold_aucs):
                rows.append((cr.cell.family.value, cr.cell.describe(), fold, auc))
        return rows

    def winner_record(self) -> dict:
        best = next(cr for cr in self.cells if cr.cell.index == self.winner.index)
        return {
            "config": self.winner.config(),
            "mean_auc": best.mean_auc,
            "std_auc": best.std_auc,
            "fold_aucs": list(best.fold_aucs),
        }


def expand_grid(family: ClassifierFamily, grid: HyperGrid) -> list[GridCell]:
    """Cells in declared order: C outermost, then loss/kernel/gamma."""
    cells: list[GridCell] = []
    for c in grid.c_values:
        if family is ClassifierFamily.LOGREG:
            cells.append(GridCell(len(cells), family, c))
        elif family is ClassifierFamily.LINEAR_SVM:
            for loss in grid.losses:
                cells.append(GridCell(len(cells), family, c, loss=loss))
        else:
            for kernel in grid.kernels:
                if kernel is KernelKind.LINEAR:
                    cells.append(GridCell(len(cells), family, c, kernel=kernel))
                else:
                    for gm in grid.gamma_modes:
                        cells.append(
                            GridCell(len(cells), family, c, kernel=kernel, gamma_mode=gm)
                        )
    return cells


def kfold_indices(
    n: int,
    k: int,
    seed: int,
    labels: np.ndarray | None = None,
    task: TaskKind | None = None,
) -> list[np.ndarray]:
    """k disjoint validation index sets partitioning range(n), sizes within 1.

    Binary and multiclass tasks are stratified: each class's indices are
    shuffled and dealt round-robin, with the dealing pointer persisting
    across classes so fold totals stay balanced. Multilabel (or untyped)
    data gets a plain shuffled partition.
    """
    if k < 2:
        raise ValidationError("need at least 2 folds")
    if n < k:
        raise ValidationError(f"cannot make {k} folds from {n} samples")
    folds: list[list[int]] = [[] for _ in range(k)]
    if labels is not None and task in (TaskKind.BINARY, TaskKind.MULTICLASS):
        classes = np.argmax(np.asarray(labels), axis=1)
        pointer = 0
        for c in range(np.asarray(labels).shape[1]):
            idx = [int(i) for i in np.nonzero(classes == c)[0]]
            idx = shuffle(idx, derive_seed(seed, "fold-class", c))
            for offset, i in enumerate(idx):
                folds[(pointer + offset) % k].append(i)
            pointer = (pointer + len(idx)) % k
    else:
        order = shuffle(list(range(n)), derive_seed(seed, "fold-plain"))
        sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
        start = 0
        for f, size in enumerate(sizes):
            folds[f] = order[start : start + size]
            start += size
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def train_cell(X, Y, schema: LabelSchema, cell: GridCell, seed: int):
    """Train one grid cell's model on (X, Y)."""
    if cell.family is ClassifierFamily.LOGREG:
        return train_logreg(X, Y, schema, cell.C)
    if cell.family is ClassifierFamily.LINEAR_SVM:
        return train_linear_svm(X, Y, schema, cell.C, cell.loss, seed=seed)
    spec = KernelSpec(cell.kernel, cell.gamma_mode if cell.gamma_mode is not None else "scale")
    return train_kernel_svm(X, Y, schema, cell.C, spec, seed=seed)


def predict_model_scores(model, X) -> ScoreMatrix:
    if isinstance(model, KernelModel):
        return kernel_predict(model, X)
    return predict_scores(model, X)


def predict_model_labels(model, X) -> np.ndarray:
    if isinstance(model, KernelModel):
        return kernel_predict_labels(model, X)
    return predict_labels(model, X)


def grid_search(
    X,
    Y,
    schema: LabelSchema,
    family: ClassifierFamily,
    grid: HyperGrid,
    seed: int,
):
    """Five-fold CV over the expanded grid; returns (CVResult, refit model)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n = X.shape[0]
    cells = expand_grid(family, grid)
    folds = kfold_indices(n, N_FOLDS, seed, labels=Y, task=schema.task_kind)
    all_idx = np.arange(n)

    results: list[CellResult] = []
    degenerate = 0
    for cell in cells:
        fold_aucs: list[float] = []
        for f, val_idx in enumerate(folds):
            train_mask = np.ones(n, dtype=bool)
            train_mask[val_idx] = False
            train_idx = all_idx[train_mask]
            try:
                model = train_cell(
                    X[train_idx], Y[train_idx], schema, cell,
                    derive_seed(seed, "cell", cell.index, "fold", f),
                )
                scores = predict_model_scores(model, X[val_idx])
                auc = roc_auc(Y[val_idx], scores.scores, schema.task_kind).macro
            except (DegenerateLabelsError, UndefinedMetricError) as exc:
                warnings.warn(
                    f"cell {cell.describe()} fold {f}: {exc}; scoring 0.5",
                    UserWarning,
                    stacklevel=2,
                )
                degenerate += 1
                auc = 0.5
            fold_aucs.append(float(auc))
        arr = np.asarray(fold_aucs)
        results.append(
            CellResult(cell, tuple(fold_aucs), float(arr.mean()), float(arr.std()))
        )

    best = max(results, key=lambda cr: (cr.mean_auc, -cr.cell.C, -cr.cell.index))
    winner = best.cell
    refit = train_cell(X, Y, schema, winner, derive_seed(seed, "refit", winner.index))
    cv = CVResult(
        cells=tuple(results),
        winner=winner,
        n_folds=N_FOLDS,
        seed=seed,
        degenerate_folds=degenerate,
    )
    return cv, refit
