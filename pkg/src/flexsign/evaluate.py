"""Confusion matrices, per-class and support-weighted metrics, report files.

Confusion orientation everywhere: rows are the actual class, columns the
predicted class.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import CHANNEL_NAMES, Dataset, GestureWindow, Vocabulary
from .learn import TrainedModel, predict_dataset

ORIENTATION = "rows=actual, columns=predicted"


def confusion_from_pairs(actual, predicted, n_classes: int) -> np.ndarray:
    actual = np.asarray(actual, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if actual.shape != predicted.shape:
        raise ValueError("actual and predicted differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (actual, predicted), 1)
    return cm


def confusion(test: Dataset, m: TrainedModel) -> np.ndarray:
    test = test.usable()
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = predict_dataset(m, test)
    return confusion_from_pairs(test.labels(), pred, len(test.vocabulary))


@dataclass
class EvalReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    confusion: np.ndarray
    # classes whose precision or recall had a zero denominator
    undefined: list = field(default_factory=list)
    model: str = ""
    converged: bool = True

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_text(self, vocab: Vocabulary) -> str:
        lines = [
            f"model: {self.model}",
            f"converged: {'yes' if self.converged else 'no'}",
            f"samples: {self.total}",
            f"accuracy: {self.accuracy!r}",
            f"weighted precision: {self.weighted_precision!r}",
            f"weighted recall: {self.weighted_recall!r}",
            f"weighted f1: {self.weighted_f1!r}",
            "",
            f"{'sign':<14} {'precision':>9} {'recall':>9} {'f1':>9} {'support':>8}",
        ]
        for c, name in enumerate(vocab.signs):
            flag = " *" if c in self.undefined else ""
            lines.append(f"{name:<14} {self.precision[c]:9.4f} {self.recall[c]:9.4f} "
                         f"{self.f1[c]:9.4f} {int(self.support[c]):8d}{flag}")
        if self.undefined:
            lines.append("* zero denominator, metric set to 0")
        lines += ["", f"confusion ({ORIENTATION}):"]
        lines += [" ".join(f"{v:3d}" for v in row) for row in self.confusion]
        return "\n".join(lines) + "\n"

    def to_csv(self, vocab: Vocabulary) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scope", "model", "converged", "precision", "recall", "f1", "support", "accuracy"])
        w.writerow(["weighted", self.model, int(self.converged), repr(self.weighted_precision),
                    repr(self.weighted_recall), repr(self.weighted_f1), self.total, repr(self.accuracy)])
        for c, name in enumerate(vocab.signs):
            w.writerow([name, self.model, int(self.converged), repr(float(self.precision[c])),
                        repr(float(self.recall[c])), repr(float(self.f1[c])), int(self.support[c]), ""])
        w.writerow([])
        w.writerow([f"confusion ({ORIENTATION})"] + list(vocab.signs))
        for name, row in zip(vocab.signs, self.confusion):
            w.writerow([name] + [int(v) for v in row])
        return buf.getvalue()


def metrics(cm) -> EvalReport:
    """Accuracy plus per-class and support-weighted precision, recall and F1.

    A zero denominator gives 0 for that class and lists it in ``undefined``.
    """
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ValueError("confusion matrix must be square and non-empty")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be non-negative")
    total = int(cm.sum())
    if total == 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(cm).astype(np.float64)
    rows = cm.sum(axis=1).astype(np.float64)
    cols = cm.sum(axis=0).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(cols > 0, diag / cols, 0.0)
        recall = np.where(rows > 0, diag / rows, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2.0 * precision * recall / pr, 0.0)
    undefined = [int(c) for c in np.flatnonzero((cols == 0) | (rows == 0))]
    return EvalReport(
        accuracy=float(diag.sum() / total),
        precision=precision, recall=recall, f1=f1, support=cm.sum(axis=1),
        weighted_precision=float(np.dot(rows, precision) / total),
        # support_c * recall_c is exactly the true-positive count, so sum those
        weighted_recall=float(diag[rows > 0].sum() / total),
        weighted_f1=float(np.dot(rows, f1) / total),
        confusion=cm, undefined=undefined,
    )


def evaluate(m: TrainedModel, test: Dataset, name: str | None = None) -> EvalReport:
    rep = metrics(confusion(test, m))
    rep.model = name or m.kind
    rep.converged = m.converged
    return rep


def read_report_csv(text: str) -> dict:
    """Parse the weighted row and the confusion block back out of ``to_csv``."""
    rows = list(csv.reader(io.StringIO(text)))
    weighted = rows[1]
    out = {
        "model": weighted[1],
        "converged": weighted[2] == "1",
        "weighted_precision": float(weighted[3]),
        "weighted_recall": float(weighted[4]),
        "weighted_f1": float(weighted[5]),
        "total": int(weighted[6]),
        "accuracy": float(weighted[7]),
    }
    blank = rows.index([])
    out["confusion"] = np.array([[int(v) for v in r[1:]] for r in rows[blank + 2:] if r], dtype=np.int64)
    return out


# -- files for plotting ------------------------------------------------------

def write_confusion_csv(cm, vocab: Vocabulary, path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([ORIENTATION] + list(vocab.signs))
    for name, row in zip(vocab.signs, np.asarray(cm)):
        w.writerow([name] + [int(v) for v in row])
    Path(path).write_text(buf.getvalue())


def read_confusion_csv(path) -> tuple[list[str], np.ndarray]:
    rows = list(csv.reader(io.StringIO(Path(path).read_text())))
    labels = rows[0][1:]
    return labels, np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)


def render_confusion(cm, vocab: Vocabulary, path, title: str = "") -> tuple[Path, Path]:
    """Write ``<path>.svg`` (heatmap, shade proportional to count) and ``<path>.csv``."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cm = np.asarray(cm)
    base = Path(path)
    if base.suffix in (".svg", ".csv"):
        base = base.with_suffix("")
    svg_path, csv_path = base.with_suffix(".svg"), base.with_suffix(".csv")
    write_confusion_csv(cm, vocab, csv_path)

    k = len(vocab)
    size = max(4.0, 0.32 * k + 2.0)
    with plt.rc_context({"svg.fonttype": "none", "svg.hashsalt": "flexsign", "svg.id": "flexsign"}):
        fig, ax = plt.subplots(figsize=(size, size))
        edges = np.arange(k + 1) - 0.5
        ax.pcolormesh(edges, edges, cm, cmap="Blues", vmin=0, vmax=max(1, int(cm.max())))
        ax.set_xlim(-0.5, k - 0.5)
        ax.set_ylim(k - 0.5, -0.5)
        ax.set_aspect("equal")
        ax.set_xticks(range(k), vocab.signs, rotation=90, fontsize=7)
        ax.set_yticks(range(k), vocab.signs, fontsize=7)
        ax.set_xlabel("predicted")
        ax.set_ylabel("actual")
        if title:
            ax.set_title(title)
        for i in range(k):
            for j in range(k):
                if cm[i, j]:
                    ax.text(j, i, str(int(cm[i, j])), ha="center", va="center", fontsize=6,
                            color="white" if cm[i, j] > cm.max() / 2 else "black")
        fig.tight_layout()
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return svg_path, csv_path


def render_trajectory(samples: Sequence[GestureWindow], path, names: Sequence[str] | None = None) -> tuple[Path, Path]:
    """Write per-channel time series and 3-D polylines for external plotting.

    ``<path>_series.csv``: sample, instant, then one column per channel.
    ``<path>_polyline.csv``: sample, t (instant index), c0, c1, c2.
    """
    windows = list(samples)
    if not windows:
        raise ValueError("no samples to render")
    shape = windows[0].shape
    if any(w.shape != shape for w in windows):
        raise ValueError("samples must share one window shape")
    base = Path(path)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    series_path = base.with_name(base.name + "_series.csv")
    poly_path = base.with_name(base.name + "_polyline.csv")
    channels = list(CHANNEL_NAMES)[:shape[1]] if shape[1] <= len(CHANNEL_NAMES) else \
        [f"ch{c}" for c in range(shape[1])]
    labels = list(names) if names is not None else [str(i) for i in range(len(windows))]

    sbuf, pbuf = io.StringIO(), io.StringIO()
    sw, pw = csv.writer(sbuf, lineterminator="\n"), csv.writer(pbuf, lineterminator="\n")
    sw.writerow(["sample", "instant"] + channels)
    pw.writerow(["sample", "t"] + [f"c{c}" for c in range(shape[1])])
    for lab, w in zip(labels, windows):
        for t, row in enumerate(w.values):
            vals = [repr(float(v)) for v in row]
            sw.writerow([lab, t] + vals)
            pw.writerow([lab, t] + vals)
    series_path.write_text(sbuf.getvalue())
    poly_path.write_text(pbuf.getvalue())
    return series_path, poly_path
