"""Threshold-based spike repair and quarantine of long discontinuities."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .core import Dataset, GestureWindow, LabeledSample, Quality


@dataclass(frozen=True)
class CleaningConfig:
    jump_threshold: float = 0.25
    max_spike_len: int = 1

    def __post_init__(self):
        if not 0.0 < self.jump_threshold <= 1.0:
            raise ValueError("jump_threshold must lie in (0, 1]")
        if self.max_spike_len < 1:
            raise ValueError("max_spike_len must be >= 1")


class Run(NamedTuple):
    start: int
    length: int


def _scan_from(x: np.ndarray, i: int, cfg: CleaningConfig) -> tuple[list[Run], list[Run]]:
    thr = cfg.jump_threshold
    n = len(x)
    spikes: list[Run] = []
    long_runs: list[Run] = []
    ref = x[i]
    t = i + 1
    while t < n:
        if abs(x[t] - ref) <= thr:
            ref = x[t]
            t += 1
            continue
        start = t
        while t < n and abs(x[t] - ref) > thr:
            t += 1
        length = t - start
        if length <= cfg.max_spike_len:
            spikes.append(Run(start, length))
        else:
            long_runs.append(Run(start, length))
        # x[t] (if any) is within threshold of ref; it is retained next iteration
    return spikes, long_runs


def _scan(signal: np.ndarray, cfg: CleaningConfig) -> tuple[list[Run], list[Run]]:
    """Split excursions into (spikes, long runs).

    An excursion is a maximal stretch whose values all sit more than the
    threshold away from the last retained value. It is a spike when it is at
    most ``max_spike_len`` long, whether the signal comes back afterwards or
    the stretch ends the signal (trailing boundary spike).

    The first value is taken as retained, except when the first excursion
    never returns and is longer than what precedes it: then the short prefix
    is the odd one out (leading boundary spike) and scanning restarts after it.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = len(x)
    spikes, long_runs = _scan_from(x, 0, cfg)
    runs = sorted(spikes + long_runs)
    if runs:
        L, length = runs[0]
        if L <= cfg.max_spike_len and L + length == n and length > L and \
                all(abs(x[j] - x[L]) > cfg.jump_threshold for j in range(L)):
            sp2, lr2 = _scan_from(x, L, cfg)
            return [Run(0, L)] + sp2, lr2
    return spikes, long_runs


def detect_spikes(signal, cfg: CleaningConfig = CleaningConfig()) -> list[Run]:
    """Spike runs (start, length) in one channel."""
    if len(signal) < 3:
        raise ValueError("signal needs at least 3 instants")
    return _scan(np.asarray(signal, dtype=np.float64), cfg)[0]


def _repair_channel(x: np.ndarray, runs: list[Run]) -> np.ndarray:
    y = x.copy()
    n = len(x)
    for start, length in runs:
        end = start + length
        left = x[start - 1] if start > 0 else None
        right = x[end] if end < n else None
        if left is None:
            fill = right
        elif right is None:
            fill = left
        else:
            fill = (left + right) / 2.0
        y[start:end] = fill
    return y


class RepairResult(NamedTuple):
    window: GestureWindow
    quality: Quality
    spikes: dict  # channel -> list[Run]
    long_runs: dict  # channel -> list[Run]


def inspect_sample(w: GestureWindow, cfg: CleaningConfig = CleaningConfig()) -> RepairResult:
    vals = w.values
    spikes, longs = {}, {}
    for c in range(w.channels):
        s, l = _scan(vals[:, c], cfg) if w.instants >= 3 else ([], [])
        if s:
            spikes[c] = s
        if l:
            longs[c] = l
    if longs:
        return RepairResult(w, Quality.QUARANTINED, spikes, longs)
    if not spikes:
        return RepairResult(w, Quality.CLEAN, spikes, longs)
    out = vals.copy()
    for c, runs in spikes.items():
        out[:, c] = _repair_channel(vals[:, c], runs)
    return RepairResult(GestureWindow(out), Quality.REPAIRED, spikes, longs)


def repair_sample(w: GestureWindow, cfg: CleaningConfig = CleaningConfig()) -> tuple[GestureWindow, Quality]:
    """Replace spike instants by the mean of the neighbours either side.

    A window with a longer discontinuity on any channel comes back untouched
    and flagged quarantined.
    """
    r = inspect_sample(w, cfg)
    return r.window, r.quality


@dataclass
class CleaningReport:
    counts: dict = field(default_factory=lambda: {q.value: 0 for q in Quality})
    quarantined: list = field(default_factory=list)
    # (index, label, quality, detail) per input sample
    rows: list = field(default_factory=list)

    def summary(self) -> str:
        c = self.counts
        lines = [
            f"samples: {sum(c.values())}",
            f"clean: {c['clean']}",
            f"repaired: {c['repaired']}",
            f"quarantined: {c['quarantined']}",
        ]
        if self.quarantined:
            lines.append("quarantined indices: " + " ".join(str(i) for i in self.quarantined))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "label", "quality", "detail"])
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, summary_path, csv_path) -> None:
        Path(summary_path).write_text(self.summary())
        Path(csv_path).write_text(self.to_csv())


def _detail(r: RepairResult) -> str:
    parts = []
    for tag, runs in (("long", r.long_runs), ("spike", r.spikes)):
        for c in sorted(runs):
            parts += [f"{tag}:c{c}@{s}+{n}" for s, n in runs[c]]
    return " ".join(parts)


def clean_dataset(d: Dataset, cfg: CleaningConfig = CleaningConfig()) -> tuple[Dataset, CleaningReport]:
    report = CleaningReport()
    kept = []
    for i, s in enumerate(d.samples):
        r = inspect_sample(s.window, cfg)
        report.counts[r.quality.value] += 1
        report.rows.append((i, d.vocabulary.notation(s.label), r.quality.value, _detail(r)))
        if r.quality is Quality.QUARANTINED:
            report.quarantined.append(i)
        else:
            kept.append(LabeledSample(r.window, s.label, r.quality))
    meta = (d.meta + " " if d.meta else "") + \
        f"cleaned(threshold={cfg.jump_threshold!r},max_spike_len={cfg.max_spike_len})"
    return Dataset(d.vocabulary, tuple(kept), meta), report
