"""Kernel SVM: SMO on the binary dual, one-vs-one for multiclass."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .kernels import smo, sq_dists

KERNELS = ("rbf", "linear", "poly")


@dataclass(frozen=True)
class Kernel:
    name: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.name not in KERNELS:
            raise ValueError(f"unknown kernel {self.name!r}")

    def __call__(self, A, B) -> np.ndarray:
        A = np.ascontiguousarray(A, dtype=np.float64)
        B = np.ascontiguousarray(B, dtype=np.float64)
        if self.name == "rbf":
            return np.exp(-self.gamma * sq_dists(A, B))
        if self.name == "linear":
            return A @ B.T
        return (self.gamma * (A @ B.T) + self.coef0) ** self.degree


def scale_gamma(X) -> float:
    """``1 / (d * var(X))`` with the variance pooled over all entries."""
    X = np.asarray(X, dtype=np.float64)
    var = float(X.var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


@dataclass
class PairFit:
    alpha: np.ndarray
    bias: float
    iterations: int
    converged: bool
    dual_history: np.ndarray


def _rho(alpha, G, y, C) -> float:
    ub, lb = np.inf, -np.inf
    free_sum, n_free = 0.0, 0
    for a, g, yi in zip(alpha, G, y):
        yg = yi * g
        if a >= C:
            if yi < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif a <= 0:
            if yi > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            free_sum += yg
    if n_free:
        return free_sum / n_free
    return (ub + lb) / 2.0


def smo_fit_gram(K: np.ndarray, y, C: float = 1.0, tol: float = 1e-3,
                 max_iter: int | None = None, record: bool = False) -> PairFit:
    """Solve the binary dual for a precomputed Gram matrix, labels in {-1, +1}.

    Working pairs are the maximal KKT violators. Stops when the violation
    falls under ``tol`` or after ``max_iter`` pair updates (default 10*n).
    The decision function is ``sum(alpha_i y_i K(x_i, x)) + bias``.
    """
    y = np.asarray(y, dtype=np.float64)
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("both classes must be present")
    n = len(y)
    max_iter = 10 * n if max_iter is None else max_iter
    Q = np.ascontiguousarray(y[:, None] * y[None, :] * K)
    alpha, G, it, converged, hist = smo(Q, y, float(C), float(tol), int(max_iter), bool(record))
    return PairFit(alpha, -_rho(alpha, G, y, C), int(it), bool(converged), hist)


def smo_fit_pair(X, y, C: float = 1.0, kernel: Kernel = Kernel(), tol: float = 1e-3,
                 record: bool = False) -> PairFit:
    X = np.asarray(X, dtype=np.float64)
    return smo_fit_gram(kernel(X, X), y, C, tol, record=record)


@dataclass
class OvOModel:
    kernel: Kernel
    C: float
    support: np.ndarray            # (m, d) union of support vectors
    pairs: list                    # (a, b, sv_index array, coef array, bias)
    unconverged: int = 0


def fit_ovo(X, y, n_classes: int, C: float = 1.0, kernel: Kernel = Kernel(),
            tol: float = 1e-3) -> OvOModel:
    """One binary machine per class pair present; class ``a`` is +1 against ``b``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    K = kernel(X, X)
    present = [c for c in range(n_classes) if np.any(y == c)]
    raw = []
    used = np.zeros(len(y), dtype=bool)
    unconverged = 0
    for a, b in combinations(present, 2):
        idx = np.flatnonzero((y == a) | (y == b))
        yy = np.where(y[idx] == a, 1.0, -1.0)
        fit = smo_fit_gram(K[np.ix_(idx, idx)], yy, C, tol)
        unconverged += not fit.converged
        sv = fit.alpha > 0
        raw.append((a, b, idx[sv], fit.alpha[sv] * yy[sv], fit.bias))
        used[idx[sv]] = True
    support_rows = np.flatnonzero(used)
    remap = np.full(len(y), -1, dtype=np.int64)
    remap[support_rows] = np.arange(len(support_rows))
    pairs = [(a, b, remap[rows], coef, bias) for a, b, rows, coef, bias in raw]
    return OvOModel(kernel, C, X[support_rows].copy(), pairs, unconverged)


def ovo_decisions(model: OvOModel, X) -> np.ndarray:
    Ks = model.kernel(X, model.support)
    return np.column_stack([Ks[:, sv] @ coef + bias for _, _, sv, coef, bias in model.pairs]) \
        if model.pairs else np.zeros((len(X), 0))


def tally_votes(pair_winners, n_classes: int) -> int:
    """Label with most pairwise wins; lowest label on ties."""
    votes = np.bincount(np.asarray(pair_winners, dtype=np.int64), minlength=n_classes)
    return int(np.argmax(votes))


def ovo_predict(model: OvOModel, X, n_classes: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    dec = ovo_decisions(model, X)
    votes = np.zeros((len(X), n_classes), dtype=np.int64)
    rows = np.arange(len(X))
    for p, (a, b, *_rest) in enumerate(model.pairs):
        # a decision of exactly 0 goes to the lower label
        winner = np.where(dec[:, p] >= 0, a, b)
        votes[rows, winner] += 1
    return np.argmax(votes, axis=1)
