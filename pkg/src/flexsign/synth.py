"""Parametric synthetic signs.

Each sign is a piecewise-linear trajectory per channel. Samples are drawn
from a template by jittering keypoint phases, adding a per-channel offset and
per-instant Gaussian noise, then optionally corrupting them with spikes and
rail dropouts for the cleaner to find.

All randomness comes from numpy ``Generator(PCG64)`` streams. A dataset uses
one stream per class, seeded from ``SeedSequence([seed, class_index])``, so
classes can be generated in any order with identical results.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .acquisition import NormFrame
from .cleaning import CleaningConfig
from .core import (DEFAULT_INSTANTS, Dataset, DataError, GestureWindow,
                   LabeledSample, Quality, Vocabulary)

SPIKE_MIN = 2 * CleaningConfig().jump_threshold
DROPOUT_LENGTHS = (3, 4, 5)


@dataclass(frozen=True)
class SignTemplate:
    notation: str
    # one (phases, values) pair of tuples per channel
    keypoints: tuple[tuple[tuple[float, ...], tuple[float, ...]], ...]

    def __post_init__(self):
        if not self.keypoints:
            raise DataError(f"{self.notation}: template has no channels")
        for c, (ph, va) in enumerate(self.keypoints):
            if len(ph) < 2 or len(ph) != len(va):
                raise DataError(f"{self.notation}: channel {c} needs >= 2 keypoints")
            if ph[0] != 0.0 or ph[-1] != 1.0 or any(b <= a for a, b in zip(ph, ph[1:])):
                raise DataError(f"{self.notation}: channel {c} phases must rise strictly from 0 to 1")
            if any(not 0.0 <= v <= 1.0 for v in va):
                raise DataError(f"{self.notation}: channel {c} values must lie in [0, 1]")

    @property
    def channels(self) -> int:
        return len(self.keypoints)

    def start_values(self) -> np.ndarray:
        return np.array([va[0] for _, va in self.keypoints])


@dataclass(frozen=True)
class GenConfig:
    seed: int = 42
    samples_per_class: int = 45
    amp_noise_sd: float = 0.03
    time_jitter_sd: float = 0.02
    offset_sd: float = 0.02
    spike_prob: float = 0.0
    dropout_prob: float = 0.0
    instants: int = DEFAULT_INSTANTS

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("seed must be unsigned")
        if self.samples_per_class < 0:
            raise ValueError("samples_per_class must be >= 0")
        if min(self.amp_noise_sd, self.time_jitter_sd, self.offset_sd) < 0:
            raise ValueError("noise SDs must be >= 0")
        for p in (self.spike_prob, self.dropout_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("probabilities must lie in [0, 1]")
        if self.instants < 3:
            raise ValueError("instants must be >= 3")


# -- template files ----------------------------------------------------------

def parse_templates(text: str) -> list[SignTemplate]:
    """``<notation> <ch0> <ch1> ...`` per line, each channel ``phase:value,...``."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, *chans = line.split()
        if not chans:
            raise DataError(f"{name}: no channels", lineno)
        kps = []
        for ch in chans:
            try:
                pairs = [tuple(float(x) for x in p.split(":")) for p in ch.split(",")]
                ph, va = zip(*pairs)
            except ValueError:
                raise DataError(f"{name}: malformed keypoints {ch!r}", lineno) from None
            kps.append((tuple(ph), tuple(va)))
        try:
            out.append(SignTemplate(name, tuple(kps)))
        except DataError as exc:
            raise DataError(str(exc), lineno) from None
    return out


def format_templates(templates: Sequence[SignTemplate]) -> str:
    lines = []
    for t in templates:
        chans = [",".join(f"{p!r}:{v!r}" for p, v in zip(ph, va)) for ph, va in t.keypoints]
        lines.append(" ".join([t.notation] + chans))
    return "\n".join(lines) + "\n"


def load_templates(path) -> list[SignTemplate]:
    return parse_templates(Path(path).read_text(encoding="ascii"))


def default_templates_text() -> str:
    return resources.files("flexsign").joinpath("data/default_templates.txt").read_text(encoding="ascii")


def make_default_vocabulary() -> tuple[Vocabulary, list[SignTemplate]]:
    templates = parse_templates(default_templates_text())
    return Vocabulary(tuple(t.notation for t in templates)), templates


def templates_for(vocab: Vocabulary, templates: Sequence[SignTemplate]) -> list[SignTemplate]:
    """Templates reordered to match ``vocab``; every sign needs one."""
    by_name = {t.notation: t for t in templates}
    missing = [s for s in vocab.signs if s not in by_name]
    if missing:
        raise DataError(f"no template for: {', '.join(missing)}")
    return [by_name[s] for s in vocab.signs]


# -- rendering ---------------------------------------------------------------

def _eval(keypoints, phases: np.ndarray) -> np.ndarray:
    return np.column_stack([np.interp(phases, ph, va) for ph, va in keypoints])


def render_template(t: SignTemplate, instants: int = DEFAULT_INSTANTS) -> GestureWindow:
    return GestureWindow(_eval(t.keypoints, np.linspace(0.0, 1.0, instants)))


def template_distances(templates: Sequence[SignTemplate], instants: int = DEFAULT_INSTANTS) -> np.ndarray:
    """Pairwise maximum pointwise distance between rendered templates."""
    r = np.stack([render_template(t, instants).values for t in templates])
    return np.abs(r[:, None] - r[None, :]).max(axis=(2, 3))


def _jitter_keypoints(t: SignTemplate, sd: float, rng: np.random.Generator):
    out = []
    for ph, va in t.keypoints:
        p = np.clip(np.array(ph) + rng.normal(0.0, sd, len(ph)), 0.0, 1.0)
        order = np.argsort(p, kind="stable")
        out.append((p[order], np.array(va)[order]))
    return out


def _corrupt(x: np.ndarray, cfg: GenConfig, rng: np.random.Generator) -> None:
    T, C = x.shape
    hits = rng.random(T) < cfg.spike_prob
    chans = rng.integers(0, C, T)
    fracs = rng.random(T)
    for i in np.flatnonzero(hits):
        c = chans[i]
        v = x[i, c]
        if v < 0.5:
            x[i, c] = v + SPIKE_MIN + fracs[i] * (1.0 - SPIKE_MIN - v)
        else:
            x[i, c] = v - SPIKE_MIN - fracs[i] * (v - SPIKE_MIN)
    if rng.random() < cfg.dropout_prob:
        length = int(rng.choice(DROPOUT_LENGTHS))
        length = min(length, T)
        start = int(rng.integers(0, T - length + 1))
        c = int(rng.integers(0, C))
        x[start:start + length, c] = float(rng.integers(0, 2))


def synthesize_sample(t: SignTemplate, cfg: GenConfig, rng: np.random.Generator,
                      label: int = 0) -> LabeledSample:
    T, C = cfg.instants, t.channels
    kps = _jitter_keypoints(t, cfg.time_jitter_sd, rng)
    x = _eval(kps, np.linspace(0.0, 1.0, T))
    x += rng.normal(0.0, cfg.offset_sd, C)
    x += rng.normal(0.0, cfg.amp_noise_sd, (T, C))
    np.clip(x, 0.0, 1.0, out=x)
    _corrupt(x, cfg, rng)
    return LabeledSample(GestureWindow(x), label, Quality.CLEAN)


def class_counts(k: int, total: int | None, samples_per_class: int) -> list[int]:
    """Per-class counts: a total target spreads its remainder over the first classes."""
    if total is None:
        return [samples_per_class] * k
    if total < 0:
        raise ValueError("total must be >= 0")
    base, extra = divmod(total, k)
    return [base + (1 if c < extra else 0) for c in range(k)]


def class_rng(seed: int, class_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, class_index])))


def synthesize_dataset(vocab: Vocabulary, templates: Sequence[SignTemplate], cfg: GenConfig,
                       total: int | None = None) -> Dataset:
    templates = templates_for(vocab, templates)
    counts = class_counts(len(vocab), total, cfg.samples_per_class)
    samples = []
    for label, (tpl, n) in enumerate(zip(templates, counts)):
        rng = class_rng(cfg.seed, label)
        samples.extend(synthesize_sample(tpl, cfg, rng, label) for _ in range(n))
    meta = (f"synth seed={cfg.seed} amp={cfg.amp_noise_sd!r} jitter={cfg.time_jitter_sd!r} "
            f"offset={cfg.offset_sd!r} spike={cfg.spike_prob!r} dropout={cfg.dropout_prob!r}")
    return Dataset(vocab, tuple(samples), meta)


def stream_sign(t: SignTemplate, cfg: GenConfig, frame_rate: float, rng: np.random.Generator,
                capture_ms: float = 1900, standby_ms: float = 1000, t0: float = 0.0) -> list[NormFrame]:
    """Frames of one sign as a device would send them (normalised values).

    Standby frames hold the sign's first value, then the sign plays out over
    ``capture_ms`` at ``frame_rate``. Phase jitter and the per-sample offset
    apply; per-frame amplitude noise does not, since at stream rates it
    would read as motion and keep triggering onset.
    """
    if frame_rate <= 0:
        raise ValueError("frame_rate must be > 0")
    period = 1000.0 / frame_rate
    n_sign = int(round(capture_ms * frame_rate / 1000.0))
    n_standby = int(round(standby_ms * frame_rate / 1000.0))
    kps = _jitter_keypoints(t, cfg.time_jitter_sd, rng)
    offset = rng.normal(0.0, cfg.offset_sd, t.channels)
    phases = np.linspace(0.0, 1.0, n_sign) if n_sign > 1 else np.zeros(n_sign)
    sign = np.clip(_eval(kps, phases) + offset, 0.0, 1.0)
    rest = np.clip(_eval(kps, np.zeros(1))[0] + offset, 0.0, 1.0)
    frames = [NormFrame(t0 + k * period, rest.copy()) for k in range(n_standby)]
    frames += [NormFrame(t0 + (n_standby + k) * period, sign[k]) for k in range(n_sign)]
    return frames


def rest_frames(values: np.ndarray, n: int, frame_rate: float, t0: float) -> list[NormFrame]:
    period = 1000.0 / frame_rate
    return [NormFrame(t0 + k * period, np.asarray(values).copy()) for k in range(n)]
