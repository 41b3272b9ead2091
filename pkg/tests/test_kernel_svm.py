import numpy as np
import pytest

from embedclass.errors import DegenerateLabelsError, NumericError, ValidationError
from embedclass.ingest import LabelSchema, TaskKind
from embedclass.kernel_svm import (
    KernelKind,
    KernelModel,
    KernelSpec,
    MemoryBudgetError,
    _KernelRows,
    _smo_solve,
    kernel_block,
    kernel_predict,
    kernel_predict_labels,
    resolve_gamma,
    train_kernel_svm,
)
from embedclass.linear_models import SvmLoss, predict_scores, train_linear_svm
from oracles import one_hot_binary, separable_problem

BINARY = LabelSchema(TaskKind.BINARY, ("neg", "pos"))
CLASS3 = LabelSchema(TaskKind.MULTICLASS, ("a", "b", "c"))


def dual_objective(alpha, y, K):
    ay = alpha * y
    return alpha.sum() - 0.5 * ay @ K @ ay


# ---------------------------------------------------------------------------
# gamma resolution
# ---------------------------------------------------------------------------

def test_gamma_auto_is_one_over_d():
    X = np.random.default_rng(0).normal(size=(5, 512))
    assert resolve_gamma(KernelSpec(KernelKind.RBF, "auto"), X) == pytest.approx(1 / 512)


def test_gamma_scale_formula():
    # d=4, population variance of all entries 2.0 -> 1/(4*2) = 0.125
    base = np.array([0.0, 2.0, 0.0, 2.0])
    X = np.stack([base + 1.0, base - 1.0])  # values {1,3,-1,1,...}: var computed directly
    var = X.var()
    got = resolve_gamma(KernelSpec(KernelKind.RBF, "scale"), X)
    assert got == pytest.approx(1.0 / (4 * var))
    X2 = np.array([[0.0, 2.0], [2.0, 4.0]])  # d=2, var 2.0 -> 0.25
    assert resolve_gamma(KernelSpec(KernelKind.RBF, "scale"), X2) == pytest.approx(0.25)


def test_gamma_fixed_passthrough_and_guards():
    X = np.ones((3, 4))
    assert resolve_gamma(KernelSpec(KernelKind.RBF, 0.5), X) == 0.5
    with pytest.raises(NumericError):
        resolve_gamma(KernelSpec(KernelKind.RBF, "scale"), X)  # zero variance
    with pytest.raises(ValidationError):
        resolve_gamma(KernelSpec(KernelKind.LINEAR), X)
    with pytest.raises(ValidationError):
        KernelSpec(KernelKind.RBF, -1.0)
    with pytest.raises(ValidationError):
        KernelSpec(KernelKind.RBF, "sideways")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def test_kernel_matrix_psd():
    rng = np.random.default_rng(7)
    for kind, gamma in ((KernelKind.LINEAR, None), (KernelKind.RBF, 0.7), (KernelKind.RBF, 3.0)):
        X = rng.normal(size=(40, 6))
        K = kernel_block(kind, gamma, X, X)
        assert np.allclose(K, K.T, atol=1e-12)
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_rbf_kernel_values():
    a = np.array([[0.0, 0.0]])
    b = np.array([[1.0, 1.0]])
    K = kernel_block(KernelKind.RBF, 0.5, a, b)
    assert K[0, 0] == pytest.approx(np.exp(-0.5 * 2.0))
    assert kernel_block(KernelKind.RBF, 2.0, a, a)[0, 0] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

def test_two_point_dual_solved_by_hand():
    # alpha1 = alpha2 = t on the constraint line; D(t) = 2t - 2t^2, max at t=0.5
    X = np.array([[1.0], [-1.0]])
    Y = np.array([[0.0, 1.0], [1.0, 0.0]])
    m = train_kernel_svm(X, Y, BINARY, C=10.0, spec=KernelSpec(KernelKind.LINEAR))
    assert np.allclose(sorted(m.dual_coefs[0]), [-0.5, 0.5], atol=1e-6)
    assert m.intercepts[0] == pytest.approx(0.0, abs=1e-6)
    scores = kernel_predict(m, np.array([[2.0], [-0.25]])).scores[:, 1]
    assert np.allclose(scores, [2.0, -0.25], atol=1e-6)
    # brute force over the feasible line confirms the dual optimum
    K = X @ X.T
    y = np.array([1.0, -1.0])
    ts = np.linspace(0, 10, 20001)
    vals = [dual_objective(np.array([t, t]), y, K) for t in ts]
    assert ts[int(np.argmax(vals))] == pytest.approx(0.5, abs=1e-3)


def test_xor_rbf_beats_linear_and_matches_grid():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    Y = one_hot_binary(y)
    m = train_kernel_svm(X, Y, BINARY, C=10.0, spec=KernelSpec(KernelKind.RBF, 1.0))
    preds = kernel_predict_labels(m, X)
    assert np.array_equal(np.argmax(preds, axis=1) * 2 - 1, y.astype(int))
    # a linear kernel provably cannot fix XOR
    lin = train_kernel_svm(X, Y, BINARY, C=10.0, spec=KernelSpec(KernelKind.LINEAR))
    lin_preds = np.argmax(kernel_predict_labels(lin, X), axis=1) * 2 - 1
    assert not np.array_equal(lin_preds, y.astype(int))

    # dense grid over the 4-D feasible region (equality constraint enforced)
    K = kernel_block(KernelKind.RBF, 1.0, X, X)
    grid = np.linspace(0, 10, 21)
    best = -np.inf
    for a0 in grid:
        for a1 in grid:
            for a2 in grid:
                a3 = a0 + a1 - a2  # sum(alpha*y)=0 -> a2+a3 = a0+a1
                if not (0 <= a3 <= 10):
                    continue
                best = max(best, dual_objective(np.array([a0, a1, a2, a3]), y, K))
    rows = _KernelRows(X, KernelKind.RBF, 1.0, 4 * 1024**3)
    alpha, b, cert = _smo_solve(rows, y, C=10.0)
    assert cert.dual >= best - 1e-6


def test_linear_kernel_agrees_with_linear_svm():
    rng = np.random.default_rng(33)
    tried = 0
    while tried < 5:
        problem = separable_problem(rng)
        if problem is None:
            continue
        tried += 1
        X, y = problem
        Y = one_hot_binary(y)
        lin = train_linear_svm(X, Y, BINARY, C=10.0, loss=SvmLoss.HINGE, seed=tried)
        ker = train_kernel_svm(X, Y, BINARY, C=10.0, spec=KernelSpec(KernelKind.LINEAR))
        probe = rng.normal(size=(25, X.shape[1]))
        a = predict_scores(lin, probe).scores[:, 1]
        b = kernel_predict(ker, probe).scores[:, 1]
        assert np.max(np.abs(a - b)) < 1e-3


def test_kkt_conditions_at_convergence():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 3))
    y = np.sign(X[:, 0] + 0.5 * rng.normal(size=30))
    y[y == 0] = 1.0
    C = 2.0
    rows = _KernelRows(X, KernelKind.RBF, 0.8, 4 * 1024**3)
    alpha, b, cert = _smo_solve(rows, y, C)
    K = kernel_block(KernelKind.RBF, 0.8, X, X)
    f = K @ (alpha * y) + b
    tau = 1e-3
    for i in range(len(y)):
        margin = y[i] * f[i]
        if alpha[i] < 1e-9:
            assert margin >= 1 - tau
        elif alpha[i] > C - 1e-9:
            assert margin <= 1 + tau
        else:
            assert abs(margin - 1) <= tau
    assert abs(np.dot(alpha, y)) < 1e-9
    assert cert.gap <= 1e-3 * max(abs(cert.primal), 1.0)


def test_equality_constraint_tracked_through_training():
    rng = np.random.default_rng(13)
    X = rng.normal(size=(60, 4))
    y = rng.choice([-1.0, 1.0], 60)
    y[0], y[1] = 1.0, -1.0
    rows = _KernelRows(X, KernelKind.LINEAR, None, 4 * 1024**3)
    alpha, _, _ = _smo_solve(rows, y, C=1.0)
    assert abs(np.dot(alpha, y)) < 1e-9
    assert np.all(alpha >= -1e-12) and np.all(alpha <= 1.0 + 1e-12)


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def test_single_support_vector_identity():
    sv = np.array([[0.3, -0.7]])
    m = KernelModel(
        support_vectors=sv,
        dual_coefs=np.array([[1.0]]),
        intercepts=np.array([0.0]),
        kind=KernelKind.RBF,
        gamma=1.5,
        C=10.0,
        schema=BINARY,
    )
    score = kernel_predict(m, sv).scores[0, 1]
    assert score == pytest.approx(1.0)  # K(x, x) = 1 for RBF


def test_gamma_to_zero_limit():
    rng = np.random.default_rng(1)
    sv = rng.normal(size=(4, 3))
    coefs = np.array([[0.5, -0.25, 0.75, -1.0]])
    m = KernelModel(sv, coefs, np.array([0.3]), KernelKind.RBF, 1e-12, 10.0, BINARY)
    scores = kernel_predict(m, rng.normal(size=(6, 3))).scores[:, 1]
    assert np.allclose(scores, 0.3 + coefs.sum(), atol=1e-6)


def test_multiclass_ovr_kernel():
    rng = np.random.default_rng(9)
    centers = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    X = np.vstack([rng.normal(size=(15, 2)) * 0.4 + c for c in centers])
    labels = np.repeat([0, 1, 2], 15)
    Y = np.eye(3)[labels]
    m = train_kernel_svm(X, Y, CLASS3, C=10.0, spec=KernelSpec(KernelKind.RBF, "scale"))
    preds = np.argmax(kernel_predict_labels(m, X), axis=1)
    assert (preds == labels).mean() > 0.95
    assert m.dual_coefs.shape[0] == 3
    assert np.max(np.abs(m.dual_coefs)) <= 10.0 + 1e-9


def test_memory_guard_refuses_large_problems():
    X = np.zeros((200, 2))
    X[::2, 0] = 1.0
    Y = np.tile([[1.0, 0.0], [0.0, 1.0]], (100, 1))
    with pytest.raises(MemoryBudgetError, match="subsample"):
        train_kernel_svm(X, Y, BINARY, 1.0, KernelSpec(KernelKind.LINEAR),
                         memory_budget=100_000)


def test_degenerate_labels():
    X = np.zeros((4, 2))
    Y = np.tile([1.0, 0.0], (4, 1))
    with pytest.raises(DegenerateLabelsError):
        train_kernel_svm(X, Y, BINARY, 1.0, KernelSpec(KernelKind.LINEAR))


def test_row_cache_matches_full_matrix():
    rng = np.random.default_rng(41)
    X = rng.normal(size=(50, 3))
    full = _KernelRows(X, KernelKind.RBF, 0.9, 4 * 1024**3)
    assert full.full is not None
    lru = _KernelRows(X, KernelKind.RBF, 0.9, 4 * 1024**3)
    lru.full = None
    lru.cache = {}
    lru.cache_rows = 8
    from collections import OrderedDict

    lru.cache = OrderedDict()
    for i in (0, 7, 33, 7, 49):
        assert np.allclose(full.row(i), lru.row(i), atol=1e-12)
