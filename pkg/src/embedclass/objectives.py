"""Training objectives in C-scaled form: 0.5 ||w||^2 + C * sum(data loss).

The intercept is fit but never regularized. Each factory returns a
``fun(theta) -> (value, gradient)`` closure over a flat parameter vector,
which keeps the quasi-Newton driver and the finite-difference checks
agnostic of the parameter layout:

* binary logistic / squared hinge: ``theta = [w_1..w_d, b]``
* multinomial logistic: ``theta = [W.ravel(), b_1..b_K]`` with W of shape K x d

Labels are +/-1 for the binary losses and one-hot rows for the multinomial
loss. All arithmetic is float64.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

Objective = Callable[[np.ndarray], tuple[float, np.ndarray]]


def _log1p_exp(t: np.ndarray) -> np.ndarray:
    # log(1 + exp(t)) without overflow for large |t|
    return np.logaddexp(0.0, t)


def binary_logistic_objective(X: np.ndarray, y: np.ndarray, C: float) -> Objective:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def fun(theta: np.ndarray) -> tuple[float, np.ndarray]:
        w, b = theta[:-1], theta[-1]
        z = X @ w + b
        margins = y * z
        value = 0.5 * w @ w + C * _log1p_exp(-margins).sum()
        # d/dz of log(1+exp(-y z)) is -y * sigmoid(-y z)
        sig = 0.5 * (1.0 - np.tanh(0.5 * margins))
        coef = -C * y * sig
        grad = np.empty_like(theta)
        grad[:-1] = w + X.T @ coef
        grad[-1] = coef.sum()
        return float(value), grad

    return fun


def multinomial_objective(X: np.ndarray, Y: np.ndarray, C: float) -> Objective:
    """Softmax cross-entropy over one-hot rows Y (n x K)."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, d = X.shape
    k = Y.shape[1]

    def fun(theta: np.ndarray) -> tuple[float, np.ndarray]:
        W = theta[: k * d].reshape(k, d)
        b = theta[k * d :]
        z = X @ W.T + b
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        value = 0.5 * np.sum(W * W) + C * (lse - (z * Y).sum(axis=1)).sum()
        probs = np.exp(z - lse[:, None])
        delta = C * (probs - Y)
        grad = np.empty_like(theta)
        grad[: k * d] = (W + delta.T @ X).ravel()
        grad[k * d :] = delta.sum(axis=0)
        return float(value), grad

    return fun


def squared_hinge_objective(X: np.ndarray, y: np.ndarray, C: float) -> Objective:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)

    def fun(theta: np.ndarray) -> tuple[float, np.ndarray]:
        w, b = theta[:-1], theta[-1]
        z = X @ w + b
        slack = np.maximum(0.0, 1.0 - y * z)
        value = 0.5 * w @ w + C * (slack * slack).sum()
        coef = -2.0 * C * y * slack
        grad = np.empty_like(theta)
        grad[:-1] = w + X.T @ coef
        grad[-1] = coef.sum()
        return float(value), grad

    return fun


def hinge_objective_value(X: np.ndarray, y: np.ndarray, C: float, w: np.ndarray, b: float) -> float:
    """Primal hinge objective (value only; the loss is not differentiable)."""
    z = np.asarray(X, dtype=np.float64) @ w + b
    slack = np.maximum(0.0, 1.0 - np.asarray(y, dtype=np.float64) * z)
    return float(0.5 * w @ w + C * slack.sum())
