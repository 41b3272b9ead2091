"""Kernelized SVMs (linear and RBF) via sequential minimal optimization.

The solver works on the standard hinge-loss dual

    max  sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K(x_i, x_j)
    s.t. 0 <= alpha_i <= C,   sum_i alpha_i y_i = 0

updating the maximal-KKT-violation pair in closed form, which preserves
the equality constraint exactly. Kernel rows are fully precomputed for
small problems and served from a bounded LRU row cache otherwise; a memory
guard refuses problems whose full kernel matrix would not fit the budget.

Multiclass and multilabel tasks train one-vs-rest binary machines.
"""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateLabelsError, NumericError, ValidationError
from .ingest import LabelSchema, TaskKind
from .linear_models import ScoreMatrix, _as_float64, _optimal_intercept_hinge
FULL_MATRIX_MAX_ROWS = 8000
DEFAULT_MEMORY_BUDGET = 4 * 1024**3
SMO_KKT_TOL = 1e-5
SMO_GAP_TOL = 1e-8
SMO_MAX_UPDATES = 1_000_000


class MemoryBudgetError(ConfigError):
    """Kernel matrix would blow the memory budget; subsample or go linear."""


class KernelKind(enum.Enum):
    LINEAR = "linear"
    RBF = "rbf"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus how to resolve gamma (RBF only).

    ``gamma_mode`` is ``"scale"`` (1 / (d * var(X))), ``"auto"`` (1 / d), or
    a fixed positive float.
    """

    kind: KernelKind
    gamma_mode: str | float = "scale"

    def __post_init__(self):
        if isinstance(self.gamma_mode, str):
            if self.gamma_mode not in ("scale", "auto"):
                raise ValidationError(f"unknown gamma mode {self.gamma_mode!r}")
        elif float(self.gamma_mode) <= 0:
            raise ValidationError("fixed gamma must be positive")


def resolve_gamma(spec: KernelSpec, X) -> float:
    """Concrete gamma for an RBF kernel on feature matrix X."""
    if spec.kind is not KernelKind.RBF:
        raise ValidationError("gamma is only defined for the RBF kernel")
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise ValidationError("cannot resolve gamma on an empty matrix")
    d = X.shape[1]
    if isinstance(spec.gamma_mode, (int, float)) and not isinstance(spec.gamma_mode, bool):
        return float(spec.gamma_mode)
    if spec.gamma_mode == "auto":
        return 1.0 / d
    var = float(X.var())
    if var <= 0.0:
        raise NumericError("gamma mode 'scale' undefined: features have zero variance")
    return 1.0 / (d * var)


def kernel_block(kind: KernelKind, gamma: float | None, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """K(A, B) as an |A| x |B| float64 matrix."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if kind is KernelKind.LINEAR:
        return A @ B.T
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


@dataclass(frozen=True)
class KernelModel:
    support_vectors: np.ndarray  # s x d
    dual_coefs: np.ndarray  # K' x s, entries alpha_i * y_i
    intercepts: np.ndarray  # K'
    kind: KernelKind
    gamma: float | None
    C: float
    schema: LabelSchema

    def __post_init__(self):
        sv = np.ascontiguousarray(self.support_vectors, dtype=np.float64)
        coefs = np.ascontiguousarray(self.dual_coefs, dtype=np.float64)
        b = np.ascontiguousarray(self.intercepts, dtype=np.float64)
        if sv.shape[0] < 1:
            raise ValidationError("a trained kernel model needs at least one support vector")
        if coefs.shape != (b.shape[0], sv.shape[0]):
            raise ValidationError("dual coefficient shape mismatch")
        if np.max(np.abs(coefs)) > self.C * (1 + 1e-9):
            raise ValidationError("dual coefficients exceed the box bound C")
        if self.kind is KernelKind.RBF and (self.gamma is None or self.gamma <= 0):
            raise ValidationError("RBF model needs a resolved positive gamma")
        for arr in (sv, coefs, b):
            arr.setflags(write=False)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefs", coefs)
        object.__setattr__(self, "intercepts", b)


class _KernelRows:
    """Kernel rows, precomputed or served through a bounded LRU cache."""

    def __init__(self, X: np.ndarray, kind: KernelKind, gamma: float | None,
                 budget_bytes: int):
        self.X = X
        self.kind = kind
        self.gamma = gamma
        n = X.shape[0]
        full_bytes = n * n * 8
        if full_bytes > budget_bytes:
            raise MemoryBudgetError(
                f"kernel matrix for n={n} needs {full_bytes / 1024**3:.1f} GiB "
                f"(budget {budget_bytes / 1024**3:.1f} GiB); subsample the training "
                "set or use the linear SVM"
            )
        if n <= FULL_MATRIX_MAX_ROWS:
            self.full: np.ndarray | None = kernel_block(kind, gamma, X, X)
            self.cache: OrderedDict[int, np.ndarray] | None = None
        else:
            self.full = None
            self.cache = OrderedDict()
            self.cache_rows = max(64, (budget_bytes // 4) // (n * 8))

    def row(self, i: int) -> np.ndarray:
        if self.full is not None:
            return self.full[i]
        cached = self.cache.get(i)
        if cached is not None:
            self.cache.move_to_end(i)
            return cached
        row = kernel_block(self.kind, self.gamma, self.X[i : i + 1], self.X)[0]
        self.cache[i] = row
        if len(self.cache) > self.cache_rows:
            self.cache.popitem(last=False)
        return row

    def diag(self) -> np.ndarray:
        if self.full is not None:
            return np.diag(self.full).copy()
        if self.kind is KernelKind.RBF:
            return np.ones(self.X.shape[0])
        return (self.X * self.X).sum(axis=1)


@dataclass
class SmoCertificate:
    primal: float
    dual: float
    gap: float
    kkt_violation: float
    updates: int


def _smo_solve(
    rows: _KernelRows,
    y: np.ndarray,
    C: float,
    kkt_tol: float = SMO_KKT_TOL,
    gap_tol: float = SMO_GAP_TOL,
    max_updates: int = SMO_MAX_UPDATES,
) -> tuple[np.ndarray, float, SmoCertificate]:
    """Hinge dual via maximal-violating-pair SMO; returns (alpha, b, certificate)."""
    n = len(y)
    alpha = np.zeros(n)
    f = np.zeros(n)  # f_i = sum_j alpha_j y_j K_ij, i.e. decision values sans intercept
    diag = rows.diag()
    updates = 0

    def try_pair(i: int, j: int) -> bool:
        nonlocal updates, f
        if i == j:
            return False
        ki = rows.row(i)
        kj = rows.row(j)
        g = (y[i] - f[i]) - (y[j] - f[j])
        eta = diag[i] + diag[j] - 2.0 * ki[j]
        lo = -alpha[i] if y[i] > 0 else alpha[i] - C
        hi = C - alpha[i] if y[i] > 0 else alpha[i]
        lo_j = alpha[j] - C if y[j] > 0 else -alpha[j]
        hi_j = alpha[j] if y[j] > 0 else C - alpha[j]
        lo, hi = max(lo, lo_j), min(hi, hi_j)
        if hi <= lo:
            return False
        if eta > 0.0:
            t = min(max(g / eta, lo), hi)
        else:
            t = hi if g > 0 else lo  # flat direction: walk to the helpful bound
        if abs(t) < 1e-14 or g * t - 0.5 * max(eta, 0.0) * t * t <= 0.0:
            return False
        alpha[i] = min(max(alpha[i] + y[i] * t, 0.0), C)
        alpha[j] = min(max(alpha[j] - y[j] * t, 0.0), C)
        f += t * (ki - kj)
        updates += 1
        return True

    eps = 1e-12
    while True:
        v = y - f
        lo_set = ((y > 0) & (alpha < C - eps)) | ((y < 0) & (alpha > eps))
        hi_set = ((y > 0) & (alpha > eps)) | ((y < 0) & (alpha < C - eps))
        b_lo = float(np.max(v[lo_set])) if np.any(lo_set) else -np.inf
        b_hi = float(np.min(v[hi_set])) if np.any(hi_set) else np.inf
        violation = max(0.0, b_lo - b_hi)

        ay = alpha * y
        norm_sq = float(ay @ f)
        dual = float(alpha.sum()) - 0.5 * norm_sq
        b_star = _optimal_intercept_hinge(v, y)
        primal = 0.5 * norm_sq + C * float(np.maximum(0.0, 1.0 - y * (f + b_star)).sum())
        gap = primal - dual

        if violation <= kkt_tol and gap <= gap_tol * max(abs(primal), 1.0):
            if np.isfinite(b_lo) and np.isfinite(b_hi):
                b = 0.5 * (b_lo + b_hi)
            else:
                b = b_star
            cert = SmoCertificate(primal, dual, gap, violation, updates)
            return alpha, float(b), cert
        if updates >= max_updates:
            raise NumericError(
                f"SMO hit the update budget without certifying optimality "
                f"(gap {gap:.2e}, violation {violation:.2e})"
            )

        moved = False
        i = int(np.argmax(np.where(lo_set, v, -np.inf)))
        hi_order = np.argsort(np.where(hi_set, v, np.inf), kind="stable")
        for j in hi_order[:10]:
            if hi_set[j] and try_pair(i, int(j)):
                moved = True
                break
        if not moved:
            lo_order = np.argsort(np.where(lo_set, -v, np.inf), kind="stable")
            j = int(np.argmin(np.where(hi_set, v, np.inf)))
            for i2 in lo_order[:10]:
                if lo_set[i2] and try_pair(int(i2), j):
                    moved = True
                    break
        if not moved:
            raise NumericError(
                f"SMO stalled with KKT violation {violation:.2e} and gap {gap:.2e}"
            )


def train_kernel_svm(
    X,
    Y,
    schema: LabelSchema,
    C: float,
    spec: KernelSpec,
    seed: int = 0,
    memory_budget: int = DEFAULT_MEMORY_BUDGET,
) -> KernelModel:
    """Train hinge-loss kernel machines, one-vs-rest beyond binary tasks."""
    X = _as_float64(X)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != (X.shape[0], schema.n_classes):
        raise ValidationError(
            f"labels shape {Y.shape} does not match {X.shape[0]} rows x "
            f"{schema.n_classes} classes"
        )
    gamma = resolve_gamma(spec, X) if spec.kind is KernelKind.RBF else None
    rows = _KernelRows(X, spec.kind, gamma, memory_budget)

    if schema.task_kind is TaskKind.BINARY:
        head_cols = [1]
    else:
        head_cols = list(range(schema.n_classes))

    n = X.shape[0]
    alphas = np.zeros((len(head_cols), n))
    intercepts = np.zeros(schema.n_classes if len(head_cols) > 1 else 1)
    signs = np.zeros((len(head_cols), n))
    for h, col in enumerate(head_cols):
        y = np.where(Y[:, col] > 0.5, 1.0, -1.0)
        if np.all(y == 1.0) or np.all(y == -1.0):
            raise DegenerateLabelsError(
                f"kernel SVM head {schema.class_names[col]!r}: only one class present"
            )
        alpha, b, _ = _smo_solve(rows, y, C)
        alphas[h] = alpha
        signs[h] = y
        intercepts[h] = b

    keep = np.where((alphas > 1e-10).any(axis=0))[0]
    support = X[keep]
    dual = (alphas * signs)[:, keep]
    return KernelModel(
        support_vectors=support,
        dual_coefs=dual,
        intercepts=intercepts,
        kind=spec.kind,
        gamma=gamma,
        C=C,
        schema=schema,
    )


def kernel_predict(model: KernelModel, X) -> ScoreMatrix:
    """Margins f(x) = sum_j coef_j K(sv_j, x) + b for each head."""
    X = _as_float64(X)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise ValidationError(
            f"feature dim {X.shape[1]} != model dim {model.support_vectors.shape[1]}"
        )
    k_eval = kernel_block(model.kind, model.gamma, X, model.support_vectors)
    margins = k_eval @ model.dual_coefs.T + model.intercepts
    if model.schema.task_kind is TaskKind.BINARY:
        z = margins[:, 0]
        return ScoreMatrix(np.column_stack([-z, z]), is_probability=False)
    return ScoreMatrix(margins, is_probability=False)


def kernel_predict_labels(model: KernelModel, X) -> np.ndarray:
    scores = kernel_predict(model, X).scores
    out = np.zeros_like(scores, dtype=np.int64)
    if model.schema.task_kind is TaskKind.MULTILABEL:
        out[scores > 0.0] = 1
    else:
        out[np.arange(scores.shape[0]), np.argmax(scores, axis=1)] = 1
    return out
