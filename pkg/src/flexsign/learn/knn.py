"""k-nearest-neighbour voting over Euclidean distance."""
from __future__ import annotations

import numpy as np

from .kernels import sq_dists


def knn_predict(train_X, train_y, X, k: int, n_classes: int) -> np.ndarray:
    """Majority vote among the k nearest training vectors.

    Neighbours at equal distance are taken in training order. When classes
    tie on votes, the class owning the nearest neighbour wins; if that is
    still a tie (equidistant neighbours), the lowest label wins.
    """
    train_X = np.ascontiguousarray(train_X, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    train_y = np.asarray(train_y, dtype=np.int64)
    k = min(k, len(train_y))
    d2 = sq_dists(X, train_X)
    out = np.empty(len(X), dtype=np.int64)
    for q in range(len(X)):
        order = np.argsort(d2[q], kind="stable")[:k]
        labels = train_y[order]
        votes = np.bincount(labels, minlength=n_classes)
        tied = np.flatnonzero(votes == votes.max())
        if len(tied) == 1:
            out[q] = tied[0]
            continue
        nearest = np.full(n_classes, np.inf)
        for dist, lab in zip(d2[q, order], labels):
            nearest[lab] = min(nearest[lab], dist)
        best = nearest[tied].min()
        out[q] = tied[nearest[tied] == best][0]
    return out
