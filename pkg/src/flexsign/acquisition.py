"""Sensor line protocol, onset detection and fixed-duration capture.

Wire format, one frame per line::

    <timestamp_ms>,<r0>,<r1>,<r2>\\n

decimal ASCII, LF terminated, at most 64 bytes including the newline.
"""
from __future__ import annotations

import logging
import socket
import sys
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from .core import ADC_MAX, GestureWindow

log = logging.getLogger(__name__)

MAX_LINE = 64
QUALITY_MIN_LINES = 20
QUALITY_MAX_BAD = 0.10


class FrameParseError(ValueError):
    """Raised for any line that is not a valid frame. ``kind`` names the defect."""

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {detail}" if detail else kind)


class InsufficientData(ValueError):
    pass


class StreamQualityError(IOError):
    pass


@dataclass(frozen=True)
class SensorFrame:
    timestamp_ms: int
    readings: tuple[int, ...]

    def normalized(self) -> "NormFrame":
        return NormFrame(self.timestamp_ms, np.array(self.readings, dtype=np.float64) / ADC_MAX)


class NormFrame(NamedTuple):
    """A frame after ADC normalisation: values in [0, 1]."""
    t: float
    values: np.ndarray


@dataclass(frozen=True)
class CaptureConfig:
    window_instants: int = 19
    channels: int = 3
    capture_ms: int = 1900
    onset_threshold: float = 0.02
    onset_span: int = 5
    # adjacent-frame change at or below this counts as rest when locating the motion start
    rest_tol: float = 0.005

    def __post_init__(self):
        if self.window_instants < 2:
            raise ValueError("window_instants must be >= 2")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if self.capture_ms <= 0:
            raise ValueError("capture_ms must be > 0")
        if self.onset_span < 2:
            raise ValueError("onset_span must be >= 2")
        if self.onset_threshold < 0 or self.rest_tol < 0:
            raise ValueError("thresholds must be non-negative")


def _decimal(field: bytes) -> int:
    if not field or not field.isdigit():
        raise FrameParseError("non-decimal", repr(field))
    return int(field)


def parse_frame(line: bytes | str, channels: int = 3) -> SensorFrame:
    """Parse one wire line. Total: any input either parses or raises FrameParseError."""
    if isinstance(line, str):
        try:
            line = line.encode("ascii")
        except UnicodeEncodeError:
            raise FrameParseError("non-decimal", "non-ascii text") from None
    if len(line) > MAX_LINE:
        raise FrameParseError("overlong", f"{len(line)} bytes")
    if not line.endswith(b"\n"):
        raise FrameParseError("unterminated")
    body = line[:-1]
    if body.endswith(b"\r"):
        body = body[:-1]
    fields = body.split(b",")
    if len(fields) != channels + 1:
        raise FrameParseError("field-count", f"expected {channels + 1}, got {len(fields)}")
    # bytes.isdigit only accepts ASCII 0-9
    t = _decimal(fields[0])
    readings = tuple(_decimal(f) for f in fields[1:])
    for r in readings:
        if r > ADC_MAX:
            raise FrameParseError("range", f"{r} > {ADC_MAX}")
    return SensorFrame(t, readings)


def format_frame(f: SensorFrame) -> bytes:
    return (",".join(str(int(v)) for v in (f.timestamp_ms, *f.readings)) + "\n").encode("ascii")


def quantize(frame: NormFrame) -> SensorFrame:
    """Normalised frame back to ADC counts (round to nearest)."""
    counts = np.clip(np.rint(np.asarray(frame.values) * ADC_MAX), 0, ADC_MAX).astype(int)
    return SensorFrame(int(round(frame.t)), tuple(int(c) for c in counts))


def _motion(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)))


def detect_onset(frames: Iterable[NormFrame], cfg: CaptureConfig = CaptureConfig()) -> int | None:
    """Index of the first frame whose largest channel change against the frame
    ``onset_span`` earlier exceeds ``onset_threshold``; None if the stream ends first."""
    history: deque = deque(maxlen=cfg.onset_span + 1)
    for i, fr in enumerate(frames):
        history.append(np.asarray(fr.values))
        if len(history) > cfg.onset_span and _motion(history[-1], history[0]) > cfg.onset_threshold:
            return i
    return None


def motion_start(values: Sequence[np.ndarray], onset: int, cfg: CaptureConfig, floor: int = 0) -> int:
    """Locate where the motion that triggered ``onset`` began.

    Starts at the onset reference frame, walks back over frames that were
    already moving (at most ``onset_span`` frames further), then forward over
    resting frames. ``floor`` bounds the walk-back.
    """
    s = max(onset - cfg.onset_span, floor)
    lo = max(onset - 2 * cfg.onset_span, floor)
    while s > lo and _motion(values[s], values[s - 1]) > cfg.rest_tol:
        s -= 1
    while s + 1 < onset and _motion(values[s + 1], values[s]) <= cfg.rest_tol:
        s += 1
    return s


def capture_window(frames: Sequence[NormFrame], cfg: CaptureConfig = CaptureConfig()) -> GestureWindow:
    """Resample frames onto ``window_instants`` uniform times spanning the first
    to last timestamp, by per-channel linear interpolation."""
    if len(frames) < 2:
        raise InsufficientData(f"need at least 2 frames, got {len(frames)}")
    t = np.array([f.t for f in frames], dtype=np.float64)
    if np.any(np.diff(t) <= 0):
        raise ValueError("frame timestamps must be strictly increasing")
    vals = np.array([np.asarray(f.values, dtype=np.float64) for f in frames])
    if vals.ndim != 2 or vals.shape[1] != cfg.channels:
        raise ValueError(f"frames must carry {cfg.channels} channels")
    n = cfg.window_instants
    targets = t[0] + (t[-1] - t[0]) * np.arange(n) / (n - 1)
    targets[-1] = t[-1]
    out = np.empty((n, cfg.channels))
    for c in range(cfg.channels):
        out[:, c] = np.interp(targets, t, vals[:, c])
    return GestureWindow(np.clip(out, 0.0, 1.0))


# -- sources -----------------------------------------------------------------

def _file_lines(path: str) -> Iterator[bytes]:
    if path == "-":
        yield from sys.stdin.buffer
        return
    with open(path, "rb") as fh:
        yield from fh


def _tcp_lines(host: str, port: int, timeout: float | None) -> Iterator[bytes]:
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise ConnectionError(f"cannot reach tcp:{host}:{port}: {exc}") from exc
    with sock, sock.makefile("rb") as fh:
        yield from fh


def _lines(source: str, timeout: float | None) -> Iterator[bytes]:
    kind, _, rest = source.partition(":")
    if kind == "file" and rest:
        if rest != "-" and not Path(rest).is_file():
            raise ConnectionError(f"no such file: {rest}")
        return _file_lines(rest)
    if kind == "tcp":
        host, _, port = rest.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad tcp source {source!r}, expected tcp:<host>:<port>")
        return _tcp_lines(host, int(port), timeout)
    raise ValueError(f"bad source {source!r}, expected file:<path> or tcp:<host>:<port>")


class FrameStream:
    """Iterator of parsed frames from a ``file:`` or ``tcp:`` source.

    Malformed lines (including non-increasing timestamps) are skipped and
    counted. Once at least QUALITY_MIN_LINES lines were seen, a malformed
    share above 10% raises StreamQualityError.
    """

    def __init__(self, source: str, channels: int = 3, timeout: float | None = None):
        self.source = source
        self.channels = channels
        self.total = 0
        self.malformed = 0
        self._lines = _lines(source, timeout)

    def _check_quality(self):
        if self.total >= QUALITY_MIN_LINES and self.malformed > QUALITY_MAX_BAD * self.total:
            raise StreamQualityError(
                f"{self.malformed} of {self.total} lines malformed on {self.source}")

    def __iter__(self) -> Iterator[SensorFrame]:
        last_t = -1
        for line in self._lines:
            self.total += 1
            try:
                frame = parse_frame(line, self.channels)
                if frame.timestamp_ms <= last_t:
                    raise FrameParseError("timestamp", f"{frame.timestamp_ms} after {last_t}")
            except FrameParseError as exc:
                self.malformed += 1
                log.warning("skipping line %d of %s: %s", self.total, self.source, exc)
                self._check_quality()
                continue
            last_t = frame.timestamp_ms
            self._check_quality()
            yield frame


def open_stream(source: str, channels: int = 3, timeout: float | None = None) -> FrameStream:
    return FrameStream(source, channels, timeout)


# -- segmentation ------------------------------------------------------------

class Capture(NamedTuple):
    start_ms: float
    window: GestureWindow


class Segmenter:
    """Incremental standby -> onset -> capture state machine.

    After each capture the detector re-arms only once ``onset_span`` frames of
    post-capture history exist, so the jump back to rest is not taken for a
    new sign.
    """

    def __init__(self, cfg: CaptureConfig = CaptureConfig()):
        self.cfg = cfg
        self._buf: list[NormFrame] = []
        self._floor = 0
        self._capture_from: int | None = None

    def push(self, frame: NormFrame) -> Capture | None:
        cfg = self.cfg
        buf = self._buf
        if self._capture_from is not None:
            start = buf[self._capture_from]
            if frame.t - start.t < cfg.capture_ms:
                buf.append(frame)
                return None
            frames = buf[self._capture_from:]
            self._capture_from = None
            self._buf = [frame]
            self._floor = 0
            if len(frames) < 2:
                return None
            return Capture(start.t, capture_window(frames, cfg))

        buf.append(frame)
        i = len(buf) - 1
        if i - cfg.onset_span >= self._floor and \
                _motion(np.asarray(buf[i].values), np.asarray(buf[i - cfg.onset_span].values)) > cfg.onset_threshold:
            vals = [np.asarray(f.values) for f in buf]
            s = motion_start(vals, i, cfg, self._floor)
            self._capture_from = s
        else:
            # keep only what motion_start can reach
            keep = 2 * cfg.onset_span + 1
            if len(buf) > 4 * keep:
                drop = len(buf) - keep
                del buf[:drop]
                self._floor = max(0, self._floor - drop)
        return None

    def flush(self) -> Capture | None:
        """End of stream: a capture still in progress is discarded."""
        self._capture_from = None
        self._buf = []
        return None


def segment(frames: Iterable[NormFrame], cfg: CaptureConfig = CaptureConfig()) -> Iterator[Capture]:
    seg = Segmenter(cfg)
    for fr in frames:
        cap = seg.push(fr)
        if cap is not None:
            yield cap
