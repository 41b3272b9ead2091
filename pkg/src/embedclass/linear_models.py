"""Regularized logistic regression and linear SVM on embedding matrices.

Both families minimize ``0.5 ||w||^2 + C * sum(loss)`` with an unregularized
intercept. Logistic models (binary, multinomial, one-vs-rest) go through
the L-BFGS driver on the smooth objectives. The linear SVM solves the
hinge / squared-hinge dual with coordinate descent over feasible pairs of
multipliers: single-coordinate moves cannot respect the intercept's
equality constraint ``sum(alpha_i y_i) = 0``, so each update moves a pair
along the constraint manifold in closed form. Sweeps visit every index in
a seeded random permutation (partners drawn from a seeded candidate pool);
between sweeps the exact maximum-violation pair is polished until the KKT
and duality-gap certificates hold.

Training is single-threaded and deterministic for a given seed; trained
models are immutable and safe to share across threads. One-vs-rest column
problems are independent and may be trained concurrently by callers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateLabelsError, NumericError, ValidationError
from .ingest import LabelSchema, TaskKind
from .lbfgs import minimize
from .objectives import (
    binary_logistic_objective,
    hinge_objective_value,
    multinomial_objective,
)
from .rng import SplitMix64, derive_seed, shuffle


class ModelKind(enum.Enum):
    LOGREG_BINARY = "logreg-binary"
    LOGREG_MULTINOMIAL = "logreg-multinomial"
    LOGREG_OVR = "logreg-ovr"
    LINEAR_SVM = "linear-svm"


class SvmLoss(enum.Enum):
    HINGE = "hinge"
    SQUARED_HINGE = "squared-hinge"


LBFGS_TOL = 1e-6
LBFGS_MAX_ITER = 1000
SVM_KKT_TOL = 1e-5
SVM_GAP_TOL = 1e-8
SVM_MAX_UPDATES = 1_000_000


@dataclass(frozen=True)
class LinearModel:
    kind: ModelKind
    weights: np.ndarray  # K' x d float64 (K'=1 binary)
    intercepts: np.ndarray  # K'
    C: float
    schema: LabelSchema
    loss: SvmLoss | None = None

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.intercepts, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[0],):
            raise ValidationError(f"inconsistent parameter shapes {w.shape} / {b.shape}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericError("model parameters must be finite")
        if self.C <= 0:
            raise ValidationError("C must be positive")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "intercepts", b)

    @property
    def n_heads(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ScoreMatrix:
    """n x K decision scores; probability rows when is_probability is set."""

    scores: np.ndarray
    is_probability: bool

    def __post_init__(self):
        arr = np.ascontiguousarray(self.scores, dtype=np.float64)
        arr.setflags(write=False)
        object.__setattr__(self, "scores", arr)


def _as_float64(X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericError("feature matrix contains non-finite values")
    return arr


def _signed_column(Y: np.ndarray, col: int, what: str) -> np.ndarray:
    y = np.where(Y[:, col] > 0.5, 1.0, -1.0)
    if np.all(y == 1.0) or np.all(y == -1.0):
        raise DegenerateLabelsError(f"{what}: only one class present")
    return y


def _check_xy(X: np.ndarray, Y: np.ndarray, schema: LabelSchema) -> None:
    if Y.shape != (X.shape[0], schema.n_classes):
        raise ValidationError(
            f"labels shape {Y.shape} does not match {X.shape[0]} rows x "
            f"{schema.n_classes} classes"
        )


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def train_logreg(X, Y, schema: LabelSchema, C: float) -> LinearModel:
    """Fit the logistic family matching the schema's task kind.

    Binary tasks use the two-class log loss on the positive-class column,
    multiclass tasks the multinomial (softmax) loss, multilabel tasks K
    independent binary problems over the label columns.
    """
    X = _as_float64(X)
    Y = np.asarray(Y, dtype=np.float64)
    _check_xy(X, Y, schema)
    n, d = X.shape
    k = schema.n_classes

    if schema.task_kind is TaskKind.BINARY:
        y = _signed_column(Y, 1, "binary logistic regression")
        theta, info = minimize(
            binary_logistic_objective(X, y, C),
            np.zeros(d + 1),
            tol=LBFGS_TOL,
            max_iter=LBFGS_MAX_ITER,
        )
        _require_solved(info, "binary logistic regression")
        return LinearModel(
            ModelKind.LOGREG_BINARY, theta[:d].reshape(1, d), theta[d:], C, schema
        )

    if schema.task_kind is TaskKind.MULTICLASS:
        theta, info = minimize(
            multinomial_objective(X, Y, C),
            np.zeros(k * d + k),
            tol=LBFGS_TOL,
            max_iter=LBFGS_MAX_ITER,
        )
        _require_solved(info, "multinomial logistic regression")
        return LinearModel(
            ModelKind.LOGREG_MULTINOMIAL, theta[: k * d].reshape(k, d), theta[k * d :], C, schema
        )

    weights = np.zeros((k, d))
    intercepts = np.zeros(k)
    for col in range(k):
        y = _signed_column(Y, col, f"one-vs-rest label {schema.class_names[col]!r}")
        theta, info = minimize(
            binary_logistic_objective(X, y, C),
            np.zeros(d + 1),
            tol=LBFGS_TOL,
            max_iter=LBFGS_MAX_ITER,
        )
        _require_solved(info, f"one-vs-rest label {schema.class_names[col]!r}")
        weights[col] = theta[:d]
        intercepts[col] = theta[d]
    return LinearModel(ModelKind.LOGREG_OVR, weights, intercepts, C, schema)


def _require_solved(info, what: str) -> None:
    if not info.converged and info.grad_inf_norm > 1e-3:
        raise NumericError(
            f"{what}: solver stalled at gradient norm {info.grad_inf_norm:.2e}"
        )


# ---------------------------------------------------------------------------
# linear SVM (dual coordinate descent over feasible pairs)
# ---------------------------------------------------------------------------

@dataclass
class SvmCertificate:
    primal: float
    dual: float
    gap: float
    kkt_violation: float
    updates: int


def _optimal_intercept_hinge(v: np.ndarray, y: np.ndarray) -> float:
    """Exact minimizer over b of sum max(0, 1 - y(f + b)); v = y - f."""
    # the loss term for sample i is active while b < v_i (y=+1) or b > v_i (y=-1)
    order = np.argsort(v, kind="stable")
    vs = v[order]
    ys = y[order]
    n_pos_active = int(np.sum(y > 0))  # at b = -inf every positive is active
    n_neg_active = 0
    best_b = vs[0]
    # derivative on (vs[t-1], vs[t]) is (#neg active) - (#pos active); walk until >= 0
    for t in range(len(vs)):
        if n_neg_active - n_pos_active >= 0:
            break
        best_b = vs[t]
        if ys[t] > 0:
            n_pos_active -= 1
        else:
            n_neg_active += 1
    return float(best_b)


def _optimal_intercept_squared(v: np.ndarray, y: np.ndarray) -> float:
    """Exact minimizer over b of sum max(0, 1 - y(f + b))^2; v = y - f.

    Sample i is active while b < v_i (y=+1) or b > v_i (y=-1) and then
    contributes (b - v_i)^2, so on each segment between sorted kinks the
    data term is a quadratic whose pieces come from prefix/suffix sums.
    """
    order = np.argsort(v, kind="stable")
    vs = v[order]
    ys = y[order]
    n = len(vs)
    pos = (ys > 0).astype(np.float64)
    neg = 1.0 - pos
    pos_cnt_suffix = np.concatenate((np.cumsum(pos[::-1])[::-1], [0.0]))
    pos_sum_suffix = np.concatenate((np.cumsum((vs * pos)[::-1])[::-1], [0.0]))
    pos_sq_suffix = np.concatenate((np.cumsum((vs * vs * pos)[::-1])[::-1], [0.0]))
    neg_cnt_prefix = np.concatenate(([0.0], np.cumsum(neg)))
    neg_sum_prefix = np.concatenate(([0.0], np.cumsum(vs * neg)))
    neg_sq_prefix = np.concatenate(([0.0], np.cumsum(vs * vs * neg)))
    best_b, best_val = 0.0, np.inf
    for t in range(n + 1):
        cnt = pos_cnt_suffix[t] + neg_cnt_prefix[t]
        if cnt == 0.0:
            continue
        ssum = pos_sum_suffix[t] + neg_sum_prefix[t]
        ssq = pos_sq_suffix[t] + neg_sq_prefix[t]
        b = ssum / cnt
        lo = vs[t - 1] if t > 0 else -np.inf
        hi = vs[t] if t < n else np.inf
        b = min(max(b, lo), hi)
        val = cnt * b * b - 2.0 * b * ssum + ssq
        if val < best_val:
            best_val, best_b = float(val), float(b)
    return best_b


def _svm_dual_solve(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    squared: bool,
    seed: int,
    kkt_tol: float = SVM_KKT_TOL,
    gap_tol: float = SVM_GAP_TOL,
    max_updates: int = SVM_MAX_UPDATES,
) -> tuple[np.ndarray, float, np.ndarray, SvmCertificate]:
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    upper = np.inf if squared else C
    inv2c = 1.0 / (2.0 * C) if squared else 0.0
    sq_diag = 1.0 / C if squared else 0.0
    rng = SplitMix64(derive_seed(seed, "svm-partners"))
    updates = 0

    def pair_step(i: int, j: int) -> bool:
        nonlocal updates, w
        if i == j:
            return False
        gi = 1.0 - y[i] * (X[i] @ w) - alpha[i] * inv2c
        gj = 1.0 - y[j] * (X[j] @ w) - alpha[j] * inv2c
        g = y[i] * gi - y[j] * gj
        diff = X[i] - X[j]
        eta = diff @ diff + sq_diag
        if eta <= 0.0:
            return False
        # alpha_i moves by +y_i t, alpha_j by -y_j t; intersect both box ranges
        lo = -alpha[i] if y[i] > 0 else alpha[i] - upper
        hi = upper - alpha[i] if y[i] > 0 else alpha[i]
        lo_j = alpha[j] - upper if y[j] > 0 else -alpha[j]
        hi_j = alpha[j] if y[j] > 0 else upper - alpha[j]
        lo, hi = max(lo, lo_j), min(hi, hi_j)
        if hi <= lo:
            return False
        t = min(max(g / eta, lo), hi)
        if abs(t) < 1e-14 or g * t - 0.5 * eta * t * t <= 0.0:
            return False
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        alpha[i] = min(max(alpha[i], 0.0), upper)
        alpha[j] = min(max(alpha[j], 0.0), upper)
        w += t * diff
        updates += 1
        return True

    def certificate() -> tuple[SvmCertificate, float, np.ndarray]:
        f = X @ w
        v = y * (1.0 - alpha * inv2c) - f
        lo_set = ((y > 0) & (alpha < upper - 1e-12)) | ((y < 0) & (alpha > 1e-12))
        hi_set = ((y > 0) & (alpha > 1e-12)) | ((y < 0) & (alpha < upper - 1e-12))
        b_lo = float(np.max(v[lo_set])) if np.any(lo_set) else -np.inf
        b_hi = float(np.min(v[hi_set])) if np.any(hi_set) else np.inf
        violation = max(0.0, b_lo - b_hi)
        if np.isfinite(b_lo) and np.isfinite(b_hi):
            b = 0.5 * (b_lo + b_hi)
        elif np.isfinite(b_lo):
            b = b_lo
        elif np.isfinite(b_hi):
            b = b_hi
        else:
            b = 0.0
        v_plain = y - f
        if squared:
            b_star = _optimal_intercept_squared(v_plain, y)
            slack = np.maximum(0.0, 1.0 - y * (f + b_star))
            primal = 0.5 * w @ w + C * np.sum(slack * slack)
            dual = np.sum(alpha) - 0.5 * w @ w - np.sum(alpha * alpha) / (4.0 * C)
        else:
            b_star = _optimal_intercept_hinge(v_plain, y)
            primal = hinge_objective_value(X, y, C, w, b_star)
            dual = np.sum(alpha) - 0.5 * w @ w
        cert = SvmCertificate(
            primal=float(primal),
            dual=float(dual),
            gap=float(primal - dual),
            kkt_violation=violation,
            updates=updates,
        )
        pair = (int(np.argmax(np.where(lo_set, v, -np.inf))),
                int(np.argmin(np.where(hi_set, v, np.inf))))
        return cert, b, np.asarray(pair)

    epoch = 0
    candidate_pool = max(8, min(n, 16))
    while updates < max_updates:
        perm = shuffle(list(range(n)), derive_seed(seed, "svm-sweep", epoch))
        for i in perm:
            best_j = -1
            best_gain = 0.0
            gi = 1.0 - y[i] * (X[i] @ w) - alpha[i] * inv2c
            for _ in range(candidate_pool):
                j = rng.below(n)
                if j == i:
                    continue
                gj = 1.0 - y[j] * (X[j] @ w) - alpha[j] * inv2c
                g = y[i] * gi - y[j] * gj
                diff = X[i] - X[j]
                eta = diff @ diff + sq_diag
                if eta <= 0.0:
                    continue
                lo = -alpha[i] if y[i] > 0 else alpha[i] - upper
                hi = upper - alpha[i] if y[i] > 0 else alpha[i]
                lo_j = alpha[j] - upper if y[j] > 0 else -alpha[j]
                hi_j = alpha[j] if y[j] > 0 else upper - alpha[j]
                lo, hi = max(lo, lo_j), min(hi, hi_j)
                if hi <= lo:
                    continue
                t = min(max(g / eta, lo), hi)
                gain = g * t - 0.5 * eta * t * t
                if gain > best_gain:
                    best_gain, best_j = gain, j
            if best_j >= 0:
                pair_step(i, best_j)
                if updates >= max_updates:
                    break
        # polish: drive the exact maximum-violation pair down until certified
        for _ in range(200):
            cert, b, pair = certificate()
            rel = max(abs(cert.primal), 1.0)
            if cert.kkt_violation <= kkt_tol and cert.gap <= gap_tol * rel:
                return w, b, alpha, cert
            if updates >= max_updates or not pair_step(int(pair[0]), int(pair[1])):
                break
        epoch += 1
        if epoch > 10_000:
            break
    cert, b, _ = certificate()
    rel = max(abs(cert.primal), 1.0)
    if cert.kkt_violation <= kkt_tol and cert.gap <= gap_tol * rel:
        return w, b, alpha, cert
    raise NumericError(
        f"linear SVM did not certify optimality: gap {cert.gap:.2e}, "
        f"KKT violation {cert.kkt_violation:.2e} after {cert.updates} updates"
    )


def train_linear_svm(
    X,
    Y,
    schema: LabelSchema,
    C: float,
    loss: SvmLoss = SvmLoss.SQUARED_HINGE,
    seed: int = 0,
) -> LinearModel:
    """Fit a linear SVM; multiclass and multilabel tasks train one-vs-rest heads."""
    X = _as_float64(X)
    Y = np.asarray(Y, dtype=np.float64)
    _check_xy(X, Y, schema)
    n, d = X.shape
    squared = loss is SvmLoss.SQUARED_HINGE

    if schema.task_kind is TaskKind.BINARY:
        y = _signed_column(Y, 1, "linear SVM")
        w, b, _, _ = _svm_dual_solve(X, y, C, squared, derive_seed(seed, "head", 0))
        return LinearModel(ModelKind.LINEAR_SVM, w.reshape(1, d), np.array([b]), C, schema, loss)

    k = schema.n_classes
    weights = np.zeros((k, d))
    intercepts = np.zeros(k)
    for col in range(k):
        y = _signed_column(Y, col, f"one-vs-rest label {schema.class_names[col]!r}")
        w, b, _, _ = _svm_dual_solve(X, y, C, squared, derive_seed(seed, "head", col))
        weights[col] = w
        intercepts[col] = b
    return LinearModel(ModelKind.LINEAR_SVM, weights, intercepts, C, schema, loss)


def svm_certificate(X, y_signed, C: float, loss: SvmLoss, seed: int = 0) -> SvmCertificate:
    """Train one SVM head and return its exit certificate (for diagnostics)."""
    X = _as_float64(X)
    y = np.asarray(y_signed, dtype=np.float64)
    _, _, _, cert = _svm_dual_solve(
        X, y, C, loss is SvmLoss.SQUARED_HINGE, derive_seed(seed, "head", 0)
    )
    return cert


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def predict_scores(model: LinearModel, X) -> ScoreMatrix:
    """Decision scores as an n x K matrix.

    Logistic models expose probabilities (sigmoid / softmax / per-label
    sigmoid); SVMs expose raw margins. Binary models produce two columns so
    every downstream consumer sees one column per class.
    """
    X = _as_float64(X)
    if X.shape[1] != model.dim:
        raise ValidationError(f"feature dim {X.shape[1]} != model dim {model.dim}")
    z = X @ model.weights.T + model.intercepts

    if model.kind is ModelKind.LOGREG_BINARY:
        p = _sigmoid(z[:, 0])
        return ScoreMatrix(np.column_stack([1.0 - p, p]), is_probability=True)
    if model.kind is ModelKind.LOGREG_MULTINOMIAL:
        return ScoreMatrix(_softmax(z), is_probability=True)
    if model.kind is ModelKind.LOGREG_OVR:
        return ScoreMatrix(_sigmoid(z), is_probability=True)
    if model.n_heads == 1:
        return ScoreMatrix(np.column_stack([-z[:, 0], z[:, 0]]), is_probability=False)
    return ScoreMatrix(z, is_probability=False)


def predict_labels(model: LinearModel, X) -> np.ndarray:
    """Hard label matrix (n x K of 0/1).

    Single-label tasks take the argmax with exact ties going to the lowest
    class index; multilabel tasks threshold each label at probability 0.5
    (margin 0), with a tied score resolving to the negative side.
    """
    scores = predict_scores(model, X).scores
    k = model.schema.n_classes
    out = np.zeros((scores.shape[0], k), dtype=np.int64)
    if model.schema.task_kind is TaskKind.MULTILABEL:
        threshold = 0.5 if model.kind is not ModelKind.LINEAR_SVM else 0.0
        out[scores > threshold] = 1
    else:
        out[np.arange(scores.shape[0]), np.argmax(scores, axis=1)] = 1
    return out
