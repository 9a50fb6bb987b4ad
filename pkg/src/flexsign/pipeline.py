"""gen -> clean -> split -> train -> eval, in process."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

from .cleaning import CleaningConfig, CleaningReport, clean_dataset
from .core import Dataset, shuffle_split
from .evaluate import EvalReport, evaluate
from .learn import MODEL_NAMES, TrainedModel, fit, preset
from .synth import GenConfig, make_default_vocabulary, synthesize_dataset


@dataclass
class BenchmarkResult:
    dataset: Dataset
    train: Dataset
    test: Dataset
    reports: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    cleaning: CleaningReport | None = None
    seconds: float = 0.0

    def accuracy(self, name: str) -> float:
        return self.reports[name].accuracy


def run_benchmark(gen: GenConfig = GenConfig(), total: int | None = 1044, ratio: float = 0.8,
                  split_seed: int | None = None, clean: bool = True,
                  cleaning: CleaningConfig = CleaningConfig(),
                  models=MODEL_NAMES) -> BenchmarkResult:
    """Synthesise with the default templates, optionally clean, split, then
    train and evaluate each named preset. ``split_seed`` defaults to the
    generator seed."""
    t0 = time.perf_counter()
    vocab, templates = make_default_vocabulary()
    data = synthesize_dataset(vocab, templates, gen, total)
    report = None
    if clean:
        data, report = clean_dataset(data, cleaning)
    sp = shuffle_split(len(data), ratio, gen.seed if split_seed is None else split_seed)
    train, test = data.subset(sp.train), data.subset(sp.test)
    res = BenchmarkResult(data, train, test, cleaning=report)
    for name in models:
        m: TrainedModel = fit(preset(name), train)
        res.models[name] = m
        res.reports[name] = evaluate(m, test, name)
    res.seconds = time.perf_counter() - t0
    return res


def format_table(reports: dict) -> str:
    names = list(reports)
    rows = [("Accuracy", "accuracy"), ("Precision", "weighted_precision"),
            ("Recall", "weighted_recall"), ("F1 score", "weighted_f1")]
    out = ["criterion  " + " ".join(f"{n:>8}" for n in names)]
    for label, attr in rows:
        out.append(f"{label:<10} " + " ".join(f"{getattr(reports[n], attr) * 100:7.2f}%" for n in names))
    return "\n".join(out) + "\n"
