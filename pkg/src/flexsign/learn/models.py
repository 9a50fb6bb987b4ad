"""Classifier specs, the shared fit/predict contract, and presets."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..core import Dataset, GestureWindow, Vocabulary, flatten_window
from . import knn, logreg, svm, tree

KINDS = ("rf", "svm", "knn", "logreg", "dt")


class ModelError(ValueError):
    """Training or prediction inputs do not fit the model."""


class DimensionMismatch(ModelError):
    pass


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    seed: int = 0
    # trees
    n_trees: int = 100
    max_depth: int | None = None
    max_features: int | str | None = None
    bootstrap: bool = True
    # knn
    k: int = 5
    # svm
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | None = None  # None: 1/(d * pooled variance)
    degree: int = 3
    coef0: float = 0.0
    svm_tol: float = 1e-3
    # logreg
    l2: float = 1.0
    max_epochs: int = 1000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        if self.k < 1 or self.n_trees < 1 or self.max_epochs < 1:
            raise ValueError("k, n_trees and max_epochs must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.C <= 0:
            raise ValueError("C must be > 0")
        if self.kernel not in svm.KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


PRESETS = {
    "rf": ClassifierSpec("rf", n_trees=100, max_depth=10, max_features="sqrt", seed=0),
    "svm": ClassifierSpec("svm", C=1.0, kernel="rbf"),
    "knn5": ClassifierSpec("knn", k=5),
    "knn3": ClassifierSpec("knn", k=3),
    "logreg": ClassifierSpec("logreg", l2=1.0, max_epochs=1000),
    "dt": ClassifierSpec("dt", max_depth=None, seed=0),
}
MODEL_NAMES = tuple(PRESETS)


def preset(name: str, **overrides) -> ClassifierSpec:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(PRESETS)}") from None
    return replace(spec, **overrides) if overrides else spec


@dataclass
class TrainedModel:
    spec: ClassifierSpec
    vocabulary: Vocabulary
    window_shape: tuple[int, int]
    payload: Any
    converged: bool = True

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def dim(self) -> int:
        return self.window_shape[0] * self.window_shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.vocabulary)


def fit(spec: ClassifierSpec, train: Dataset) -> TrainedModel:
    """Train ``spec`` on the non-quarantined samples of ``train``."""
    train = train.usable()
    if len(train) == 0:
        raise ModelError("empty training set")
    X = train.features()
    y = train.labels()
    k = len(train.vocabulary)
    converged = True
    if spec.kind == "knn":
        payload = (X, y)
    elif spec.kind == "dt":
        rng = np.random.Generator(np.random.PCG64(spec.seed))
        mf = spec.max_features
        if mf == "sqrt":
            mf = max(1, int(np.sqrt(X.shape[1])))
        payload = tree.build_tree(X, y, k, spec.max_depth, mf, rng)
    elif spec.kind == "rf":
        payload = tree.build_forest(X, y, k, spec.n_trees, spec.max_depth, spec.max_features,
                                    spec.bootstrap, spec.seed)
    elif spec.kind == "logreg":
        res = logreg.fit_logreg(X, y, k, spec.l2, spec.max_epochs)
        payload = res
        converged = res.converged
    else:
        gamma = svm.scale_gamma(X) if spec.gamma is None else spec.gamma
        kern = svm.Kernel(spec.kernel, gamma, spec.degree, spec.coef0)
        payload = svm.fit_ovo(X, y, k, spec.C, kern, spec.svm_tol)
        converged = payload.unconverged == 0
    return TrainedModel(spec, train.vocabulary, train.window_shape, payload, converged)


def _features(m: TrainedModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != m.dim:
        raise DimensionMismatch(f"model expects {m.dim} features, got {X.shape[-1]}")
    return X


def predict_batch(m: TrainedModel, X) -> np.ndarray:
    """Labels for each row of a flattened feature matrix."""
    X = _features(m, X)
    k = m.n_classes
    if m.kind == "knn":
        tx, ty = m.payload
        return knn.knn_predict(tx, ty, X, m.spec.k, k)
    if m.kind == "dt":
        return m.payload.predict(X)
    if m.kind == "rf":
        return tree.forest_predict(m.payload, X, k)
    if m.kind == "logreg":
        return np.argmax(logreg.predict_proba(m.payload.weights, X), axis=1)
    return svm.ovo_predict(m.payload, X, k)


def predict(m: TrainedModel, w: GestureWindow) -> int:
    if w.shape != tuple(m.window_shape):
        raise DimensionMismatch(f"model expects windows of shape {tuple(m.window_shape)}, got {w.shape}")
    return int(predict_batch(m, flatten_window(w))[0])


def predict_dataset(m: TrainedModel, d: Dataset) -> np.ndarray:
    if d.vocabulary != m.vocabulary:
        raise ModelError("dataset vocabulary differs from the model's")
    if len(d) and d.window_shape != tuple(m.window_shape):
        raise DimensionMismatch(f"model expects windows of shape {tuple(m.window_shape)}, got {d.window_shape}")
    return predict_batch(m, d.features()) if len(d) else np.zeros(0, dtype=np.int64)
