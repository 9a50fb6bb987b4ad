"""Domain types, ADC normalisation, dataset files and the train/test split."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ADC_MAX = 1023
DEFAULT_INSTANTS = 19
CHANNEL_NAMES = ("elbow", "thumb", "middle")

# Published notation set plus two stand-ins to reach 23 classes.
DEFAULT_SIGNS = (
    "hello", "welcome", "hru", "canIHelpU", "whatsup", "busy", "nothing",
    "yes", "no", "deaf", "hardHearing", "learn", "ASL", "want", "sorry",
    "please", "CULater", "ok", "notALot", "signLanguage", "have",
    "nice2meetu", "extra01",
)

FORMAT_TAG = "flexsign-dataset v1"


class DataError(ValueError):
    """Invalid data: bad values, malformed rows, unknown labels."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Quality(str, enum.Enum):
    CLEAN = "clean"
    REPAIRED = "repaired"
    QUARANTINED = "quarantined"


@dataclass(frozen=True)
class Vocabulary:
    signs: tuple[str, ...]

    def __post_init__(self):
        signs = tuple(self.signs)
        object.__setattr__(self, "signs", signs)
        if len(signs) < 2:
            raise DataError("vocabulary needs at least two signs")
        if len(set(signs)) != len(signs):
            raise DataError("vocabulary contains duplicate notations")
        for s in signs:
            if not s or not s.isascii() or any(c in s for c in ",| \t\r\n"):
                raise DataError(f"invalid notation {s!r}")

    def __len__(self) -> int:
        return len(self.signs)

    def __iter__(self):
        return iter(self.signs)

    def index(self, notation: str) -> int:
        try:
            return self.signs.index(notation)
        except ValueError:
            raise DataError(f"unknown label {notation!r}") from None

    def notation(self, label: int) -> str:
        return self.signs[label]

    @classmethod
    def default(cls) -> "Vocabulary":
        return cls(DEFAULT_SIGNS)


def read_vocabulary(path) -> Vocabulary:
    """One notation per line; blank lines and ``#`` comments ignored."""
    lines = Path(path).read_text(encoding="ascii").splitlines()
    return Vocabulary(tuple(s.strip() for s in lines if s.strip() and not s.lstrip().startswith("#")))


def write_vocabulary(vocab: Vocabulary, path) -> None:
    Path(path).write_text("".join(s + "\n" for s in vocab.signs), encoding="ascii")


class GestureWindow:
    """A T x C matrix of normalised readings (instants x channels)."""

    __slots__ = ("values",)

    def __init__(self, values):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"window must be a non-empty 2-D matrix, got shape {arr.shape}")
        if not np.all((arr >= 0.0) & (arr <= 1.0)):
            raise DataError("window values must lie in [0, 1]")
        arr.flags.writeable = False
        self.values = arr

    @property
    def instants(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, GestureWindow):
            return NotImplemented
        return self.values.shape == other.values.shape and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.values.shape, self.values.tobytes()))

    def __repr__(self):
        return f"GestureWindow(shape={self.shape})"


@dataclass(frozen=True)
class LabeledSample:
    window: GestureWindow
    label: int
    quality: Quality = Quality.CLEAN


@dataclass(frozen=True)
class Dataset:
    vocabulary: Vocabulary
    samples: tuple[LabeledSample, ...]
    meta: str = ""

    def __post_init__(self):
        samples = tuple(self.samples)
        object.__setattr__(self, "samples", samples)
        k = len(self.vocabulary)
        shape = None
        for i, s in enumerate(samples):
            if not 0 <= s.label < k:
                raise DataError(f"sample {i}: label {s.label} outside vocabulary of {k}")
            if shape is None:
                shape = s.window.shape
            elif s.window.shape != shape:
                raise DataError(f"sample {i}: window shape {s.window.shape} differs from {shape}")
        if "\n" in self.meta:
            raise DataError("meta must be a single line")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def window_shape(self) -> tuple[int, int] | None:
        return self.samples[0].window.shape if self.samples else None

    def features(self) -> np.ndarray:
        """Flattened windows stacked row-wise, shape (n, T*C)."""
        if not self.samples:
            return np.zeros((0, 0))
        return np.stack([flatten_window(s.window) for s in self.samples])

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subset(self, indices: Iterable[int], meta: str | None = None) -> "Dataset":
        return Dataset(self.vocabulary, tuple(self.samples[i] for i in indices),
                       self.meta if meta is None else meta)

    def usable(self) -> "Dataset":
        """Drop quarantined samples; they never reach training or evaluation."""
        keep = [i for i, s in enumerate(self.samples) if s.quality is not Quality.QUARANTINED]
        return self if len(keep) == len(self.samples) else self.subset(keep)


@dataclass(frozen=True)
class SplitIndices:
    train: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    ratio: float


def normalize_reading(raw: int) -> float:
    """Map a 10-bit ADC count to [0, 1]."""
    if isinstance(raw, bool) or not isinstance(raw, (int, np.integer)):
        raise DataError(f"ADC reading must be an integer, got {raw!r}")
    if not 0 <= raw <= ADC_MAX:
        raise DataError(f"ADC reading {raw} outside 0..{ADC_MAX}")
    return raw / ADC_MAX


def flatten_window(w: GestureWindow) -> np.ndarray:
    """Instant-major flattening: element ``i*C + c`` is instant i, channel c."""
    return w.values.reshape(-1).copy()


def unflatten(vector, channels: int = len(CHANNEL_NAMES)) -> GestureWindow:
    vec = np.asarray(vector, dtype=np.float64)
    if vec.ndim != 1 or vec.size % channels:
        raise DataError(f"cannot reshape vector of length {vec.size} into {channels} channels")
    return GestureWindow(vec.reshape(-1, channels))


def shuffle_split(n: int, ratio: float, seed: int) -> SplitIndices:
    """Shuffled, unstratified split; the first floor(ratio*n) indices train.

    The permutation is a Fisher-Yates shuffle driven by numpy's PCG64 seeded
    with ``seed``, so the split depends only on (n, ratio, seed).
    """
    if n < 2:
        raise DataError(f"need at least 2 samples to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise DataError(f"ratio must lie strictly between 0 and 1, got {ratio}")
    if seed < 0:
        raise DataError("seed must be unsigned")
    n_train = math.floor(ratio * n)
    if n_train == 0 or n_train == n:
        raise DataError(f"ratio {ratio} leaves an empty side for n={n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    order = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    return SplitIndices(tuple(order[:n_train]), tuple(order[n_train:]), seed, ratio)


# -- dataset files -----------------------------------------------------------

def _value_columns(instants: int, channels: int) -> list[str]:
    return [f"c{c}_t{t:02d}" for c in range(channels) for t in range(instants)]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(d: Dataset, path, channel_names: Sequence[str] = CHANNEL_NAMES) -> None:
    """Write ``d`` as CSV with a commented, self-describing preamble.

    Value columns are channel-major (``c0_t00 .. c0_t18, c1_t00, ...``); reals
    are written with ``repr`` so reading back is value-exact.
    """
    instants, channels = d.window_shape or (DEFAULT_INSTANTS, len(channel_names))
    names = list(channel_names)[:channels] if len(channel_names) >= channels else [f"ch{c}" for c in range(channels)]
    out = [
        f"# {FORMAT_TAG}",
        f"# channels: {','.join(names)}",
        f"# instants: {instants}",
        f"# vocabulary: {','.join(d.vocabulary.signs)}",
        f"# meta: {d.meta}",
        ",".join(["label", "quality"] + _value_columns(instants, channels)),
    ]
    for s in d.samples:
        vals = s.window.values.T.reshape(-1)
        out.append(",".join([d.vocabulary.notation(s.label), s.quality.value] + [_fmt(v) for v in vals]))
    Path(path).write_text("\n".join(out) + "\n", encoding="ascii")


def read_dataset(path, vocabulary: Vocabulary | None = None) -> Dataset:
    """Parse a dataset CSV. Errors carry the 1-based line number.

    ``vocabulary`` overrides the one recorded in the file (labels are then
    resolved against it).
    """
    text = Path(path).read_text(encoding="ascii")
    header: dict[str, str] = {}
    columns = None
    samples = []
    instants = channels = None
    vocab = vocabulary
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if columns is None and ":" in line:
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
            continue
        if columns is None:
            columns = line.split(",")
            if columns[:2] != ["label", "quality"]:
                raise DataError("header must start with label,quality", lineno)
            try:
                instants = int(header.get("instants", DEFAULT_INSTANTS))
            except ValueError:
                raise DataError("bad instants header", lineno) from None
            if instants < 1 or (len(columns) - 2) % instants:
                raise DataError("value columns do not match instants header", lineno)
            channels = (len(columns) - 2) // instants
            if columns[2:] != _value_columns(instants, channels):
                raise DataError("unexpected value column names", lineno)
            if vocab is None:
                if "vocabulary" not in header:
                    raise DataError("no vocabulary in file header and none supplied", lineno)
                vocab = Vocabulary(tuple(header["vocabulary"].split(",")))
            continue
        fields = line.split(",")
        if len(fields) != len(columns):
            raise DataError(f"expected {len(columns)} columns, got {len(fields)}", lineno)
        try:
            label = vocab.index(fields[0])
        except DataError as exc:
            raise DataError(str(exc), lineno) from None
        try:
            quality = Quality(fields[1])
        except ValueError:
            raise DataError(f"unknown quality {fields[1]!r}", lineno) from None
        try:
            vals = np.array([float(v) for v in fields[2:]])
        except ValueError:
            raise DataError("non-numeric value", lineno) from None
        if not np.all(np.isfinite(vals)):
            raise DataError("non-finite value", lineno)
        try:
            window = GestureWindow(vals.reshape(channels, instants).T)
        except DataError as exc:
            raise DataError(str(exc), lineno) from None
        samples.append(LabeledSample(window, label, quality))
    if columns is None:
        raise DataError("missing column header")
    return Dataset(vocab, tuple(samples), header.get("meta", ""))
