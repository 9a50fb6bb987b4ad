"""Multinomial logistic regression trained by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def augment(X) -> np.ndarray:
    """Append the constant bias column."""
    X = np.asarray(X, dtype=np.float64)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def softmax_rows(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def predict_proba(W: np.ndarray, X) -> np.ndarray:
    return softmax_rows(augment(X) @ W.T)


def softmax_loss_grad(W: np.ndarray, Xa: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy plus ``l2/(2n) * ||W||^2`` (bias column unpenalised).

    ``Xa`` already carries the bias column. Returns (loss, gradient).
    """
    n = Xa.shape[0]
    Z = Xa @ W.T
    Z = Z - Z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(Z).sum(axis=1))
    rows = np.arange(n)
    nll = float(np.mean(logsum - Z[rows, y]))
    Wp = W.copy()
    Wp[:, -1] = 0.0
    loss = nll + l2 / (2.0 * n) * float(np.sum(Wp * Wp))
    P = np.exp(Z - logsum[:, None])
    P[rows, y] -= 1.0
    grad = P.T @ Xa / n + (l2 / n) * Wp
    return loss, grad


@dataclass
class LogRegFit:
    weights: np.ndarray
    converged: bool
    epochs: int
    losses: list = field(default_factory=list)


def fit_logreg(X, y, n_classes: int, l2: float = 1.0, max_epochs: int = 1000,
               tol: float = 1e-8, step: float = 1.0, max_halvings: int = 30) -> LogRegFit:
    """Gradient descent from zero weights with step halving.

    A step is accepted only if the loss does not go up; the step size is
    doubled after each accepted step and halved (up to ``max_halvings``
    times) on rejection. Stops when the accepted decrease drops below ``tol``
    or after ``max_epochs`` epochs, in which case ``converged`` is False.
    """
    Xa = augment(X)
    y = np.asarray(y, dtype=np.int64)
    W = np.zeros((n_classes, Xa.shape[1]))
    loss, grad = softmax_loss_grad(W, Xa, y, l2)
    losses = [loss]
    converged = False
    epoch = 0
    while epoch < max_epochs:
        epoch += 1
        for _ in range(max_halvings + 1):
            W_new = W - step * grad
            new_loss, new_grad = softmax_loss_grad(W_new, Xa, y, l2)
            if new_loss <= loss:
                break
            step /= 2.0
        else:
            # no non-increasing step exists at this resolution
            converged = True
            break
        decrease = loss - new_loss
        W, loss, grad = W_new, new_loss, new_grad
        losses.append(loss)
        step *= 2.0
        if decrease < tol:
            converged = True
            break
    return LogRegFit(W, converged, epoch, losses)
