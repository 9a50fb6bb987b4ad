"""Versioned text model files.

Layout::

    flexsign-model 1
    kind <kind>
    vocabulary <sign>,<sign>,...
    shape <instants> <channels>
    spec <json>
    converged <0|1>
    <kind-specific records>
    end

Arrays are written as ``array <name> <dtype> <dims...>`` followed by one line
of space-separated values; reals use 17 significant digits.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..core import Vocabulary
from .logreg import LogRegFit
from .models import ClassifierSpec, TrainedModel
from .svm import Kernel, OvOModel
from .tree import TreeArrays, tree_seed

MAGIC = "flexsign-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


class ModelVersionError(ModelFormatError):
    pass


def _fmt(x) -> str:
    return "%.17g" % x


class _Writer:
    def __init__(self):
        self.lines = []

    def kv(self, key, *values):
        self.lines.append(" ".join([key, *map(str, values)]))

    def array(self, name, arr):
        arr = np.asarray(arr)
        kind = "f8" if arr.dtype.kind == "f" else "i8"
        self.kv("array", name, kind, arr.ndim, *arr.shape)
        flat = arr.reshape(-1)
        self.lines.append(" ".join(_fmt(v) for v in flat) if kind == "f8" else " ".join(str(int(v)) for v in flat))

    def text(self):
        return "\n".join(self.lines) + "\n"


class _Reader:
    def __init__(self, text):
        self.lines = text.split("\n")
        self.pos = 0

    def line(self) -> str:
        if self.pos >= len(self.lines) or (self.pos == len(self.lines) - 1 and self.lines[-1] == ""):
            raise ModelFormatError("model file is truncated")
        s = self.lines[self.pos]
        self.pos += 1
        return s

    def kv(self, key) -> list[str]:
        parts = self.line().split(" ")
        if parts[0] != key:
            raise ModelFormatError(f"expected {key!r} record at line {self.pos}, found {parts[0]!r}")
        return parts[1:]

    def rest(self, key) -> str:
        s = self.line()
        if not s.startswith(key + " "):
            raise ModelFormatError(f"expected {key!r} record at line {self.pos}")
        return s[len(key) + 1:]

    def array(self, name) -> np.ndarray:
        head = self.kv("array")
        try:
            if head[0] != name:
                raise ModelFormatError(f"expected array {name!r}, found {head[0]!r}")
            kind, ndim = head[1], int(head[2])
            shape = tuple(int(v) for v in head[3:3 + ndim])
            body = self.line()
            vals = body.split(" ") if body else []
            size = int(np.prod(shape)) if shape else 1
            if len(vals) != size:
                raise ModelFormatError(f"array {name!r} has {len(vals)} values, expected {size}")
            dtype = np.float64 if kind == "f8" else np.int64
            conv = float if kind == "f8" else int
            return np.array([conv(v) for v in vals], dtype=dtype).reshape(shape)
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ModelFormatError):
                raise
            raise ModelFormatError(f"malformed array {name!r}: {exc}") from None


def _write_tree(w: _Writer, t: TreeArrays):
    for name in ("feature", "threshold", "left", "right", "counts"):
        w.array(name, getattr(t, name))


def _read_tree(r: _Reader, k: int) -> TreeArrays:
    t = TreeArrays(*(r.array(n) for n in ("feature", "threshold", "left", "right", "counts")))
    n = len(t.feature)
    if n == 0 or t.counts.shape != (n, k) or any(len(a) != n for a in (t.threshold, t.left, t.right)):
        raise ModelFormatError("inconsistent tree arrays")
    internal = t.feature >= 0
    if np.any(t.left[internal] >= n) or np.any(t.right[internal] >= n) or \
            np.any(t.left[internal] <= np.flatnonzero(internal)):
        raise ModelFormatError("tree child links out of range")
    return t


def dumps_model(m: TrainedModel) -> str:
    w = _Writer()
    w.kv(MAGIC, VERSION)
    w.kv("kind", m.kind)
    w.kv("vocabulary", ",".join(m.vocabulary.signs))
    w.kv("shape", *m.window_shape)
    w.kv("spec", json.dumps(m.spec.to_dict(), sort_keys=True))
    w.kv("converged", int(bool(m.converged)))
    p = m.payload
    if m.kind == "knn":
        w.array("train_x", p[0])
        w.array("train_y", p[1])
    elif m.kind == "dt":
        _write_tree(w, p)
    elif m.kind == "rf":
        w.kv("trees", len(p))
        for i, t in enumerate(p):
            w.kv("tree", i, m.spec.seed, *tree_seed(m.spec.seed, i).entropy)
            _write_tree(w, t)
    elif m.kind == "logreg":
        w.kv("epochs", p.epochs)
        w.array("weights", p.weights)
    else:
        kern = p.kernel
        w.kv("kernel", kern.name, _fmt(kern.gamma), kern.degree, _fmt(kern.coef0))
        w.kv("C", _fmt(p.C))
        w.kv("unconverged", p.unconverged)
        w.array("support", p.support)
        w.kv("pairs", len(p.pairs))
        for a, b, sv, coef, bias in p.pairs:
            w.kv("pair", a, b, _fmt(bias))
            w.array("sv", sv)
            w.array("coef", coef)
    w.kv("end")
    return w.text()


def loads_model(text: str) -> TrainedModel:
    r = _Reader(text)
    head = r.line().split(" ")
    if len(head) != 2 or head[0] != MAGIC:
        raise ModelFormatError("not a flexsign model file")
    if head[1] != str(VERSION):
        raise ModelVersionError(f"unsupported model version {head[1]!r} (this build reads {VERSION})")
    try:
        kind = r.kv("kind")[0]
        vocab = Vocabulary(tuple(r.rest("vocabulary").split(",")))
        shape = tuple(int(v) for v in r.kv("shape"))
        spec_d = json.loads(r.rest("spec"))
        spec = ClassifierSpec(**spec_d)
        converged = r.kv("converged")[0] == "1"
    except (ValueError, TypeError, IndexError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"bad model header: {exc}") from None
    if spec.kind != kind or len(shape) != 2:
        raise ModelFormatError("inconsistent model header")
    k = len(vocab)
    try:
        if kind == "knn":
            payload = (r.array("train_x"), r.array("train_y"))
        elif kind == "dt":
            payload = _read_tree(r, k)
        elif kind == "rf":
            n = int(r.kv("trees")[0])
            payload = []
            for _ in range(n):
                r.kv("tree")
                payload.append(_read_tree(r, k))
        elif kind == "logreg":
            epochs = int(r.kv("epochs")[0])
            weights = r.array("weights")
            payload = LogRegFit(weights, converged, epochs)
        else:
            name, gamma, degree, coef0 = r.kv("kernel")
            kern = Kernel(name, float(gamma), int(degree), float(coef0))
            C = float(r.kv("C")[0])
            unconverged = int(r.kv("unconverged")[0])
            support = r.array("support")
            pairs = []
            for _ in range(int(r.kv("pairs")[0])):
                a, b, bias = r.kv("pair")
                sv, coef = r.array("sv"), r.array("coef")
                pairs.append((int(a), int(b), sv, coef, float(bias)))
            payload = OvOModel(kern, C, support, pairs, unconverged)
        r.kv("end")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"bad model payload: {exc}") from None
    return TrainedModel(spec, vocab, shape, payload, converged)


def save_model(m: TrainedModel, path) -> None:
    Path(path).write_text(dumps_model(m), encoding="ascii")


def load_model(path) -> TrainedModel:
    return loads_model(Path(path).read_text(encoding="ascii"))
