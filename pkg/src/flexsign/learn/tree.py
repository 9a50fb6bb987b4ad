"""CART classification trees (Gini) and a bagged random forest."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .kernels import best_split_kernel, tree_apply


def gini(counts) -> float:
    """Gini impurity ``1 - sum(p_i^2)`` of a class-count vector."""
    c = np.asarray(counts, dtype=np.float64)
    if np.any(c < 0):
        raise ValueError("counts must be non-negative")
    total = c.sum()
    if total <= 0:
        raise ValueError("gini of an empty node is undefined")
    p = c / total
    return float(1.0 - np.sum(p * p))


class Split(NamedTuple):
    feature: int
    threshold: float
    decrease: float


def best_split(X, y, features=None, n_classes: int | None = None) -> Split | None:
    """Best Gini split over ``features`` (all by default), or None if every
    candidate feature is constant.

    Candidate thresholds are midpoints between consecutive distinct values;
    samples with ``x <= threshold`` go left. Ties go to the lowest feature
    index, then the lowest threshold.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] < 2:
        return None
    if features is None:
        features = np.arange(X.shape[1], dtype=np.int64)
    else:
        features = np.sort(np.asarray(features, dtype=np.int64))
    k = int(y.max()) + 1 if n_classes is None else n_classes
    f, thr, dec = best_split_kernel(X, y, k, features)
    if f < 0:
        return None
    return Split(int(f), float(thr), float(dec))


@dataclass
class TreeArrays:
    """Flat node arrays; ``feature == -1`` marks a leaf. ``counts`` holds the
    training class distribution reaching each node."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=int)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def leaf_labels(self) -> np.ndarray:
        # argmax takes the lowest index on ties
        return np.argmax(self.counts, axis=1)

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        return tree_apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.leaf_labels()[self.apply(X)]


def build_tree(X, y, n_classes: int, max_depth: int | None = None,
               max_features: int | None = None, rng: np.random.Generator | None = None,
               min_samples_split: int = 2) -> TreeArrays:
    """Grow a CART tree depth-first (left subtree before right).

    With ``max_features`` set, each node draws that many features without
    replacement from ``rng``; otherwise every feature is searched.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    d = X.shape[1]
    all_features = np.arange(d, dtype=np.int64)
    if max_features is not None and max_features < d and rng is None:
        raise ValueError("feature subsampling needs an rng")

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if len(idx) < min_samples_split or np.count_nonzero(counts[node]) < 2:
            continue
        if max_depth is not None and depth >= max_depth:
            continue
        if max_features is not None and max_features < d:
            feats = np.sort(rng.choice(d, size=max_features, replace=False)).astype(np.int64)
        else:
            feats = all_features
        f, thr, _ = best_split_kernel(X[idx], y[idx], n_classes, feats)
        if f < 0:
            continue
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        feature[node] = int(f)
        threshold[node] = float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))

    return TreeArrays(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
                      np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                      np.array(counts, dtype=np.int64).reshape(-1, n_classes))


def tree_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, index])


def build_forest(X, y, n_classes: int, n_trees: int = 100, max_depth: int | None = 10,
                 max_features: int | str | None = "sqrt", bootstrap: bool = True,
                 seed: int = 0) -> list[TreeArrays]:
    """Bagged trees; tree ``i`` draws from its own generator seeded by (seed, i)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if max_features == "sqrt":
        max_features = max(1, int(math.isqrt(d)))
    trees = []
    for i in range(n_trees):
        rng = np.random.Generator(np.random.PCG64(tree_seed(seed, i)))
        if bootstrap:
            idx = rng.integers(0, n, n)
            Xi, yi = X[idx], y[idx]
        else:
            Xi, yi = X, y
        trees.append(build_tree(Xi, yi, n_classes, max_depth, max_features, rng))
    return trees


def forest_votes(trees: Sequence[TreeArrays], X, n_classes: int) -> np.ndarray:
    votes = np.zeros((np.asarray(X).shape[0], n_classes), dtype=np.int64)
    rows = np.arange(votes.shape[0])
    for t in trees:
        votes[rows, t.predict(X)] += 1
    return votes


def forest_predict(trees: Sequence[TreeArrays], X, n_classes: int) -> np.ndarray:
    return np.argmax(forest_votes(trees, X, n_classes), axis=1)
