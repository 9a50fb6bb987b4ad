"""Command-line front end.

Option values come from three layers, highest first: command-line flags, an
INI-style ``--config`` file, compiled-in defaults. The config file holds
``key = value`` lines using the long option names (``amp-noise = 0.05``),
either at top level, under ``[flexsign]``, or under a section named after the
command; command sections win over the shared ones.

Exit codes: 0 success, 1 usage, 2 I/O, 3 data validation, 4 model or
dimension mismatch.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import socket
import sys
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import (CaptureConfig, FrameParseError, Segmenter, StreamQualityError,
                          format_frame, open_stream, quantize)
from .cleaning import CleaningConfig, clean_dataset, repair_sample
from .core import (DataError, Dataset, Quality, Vocabulary, read_dataset, read_vocabulary,
                   shuffle_split, write_dataset)
from .evaluate import evaluate, render_confusion
from .learn import (MODEL_NAMES, DimensionMismatch, ModelError, ModelFormatError, fit,
                    load_model, predict, predict_dataset, preset, save_model)
from .pipeline import format_table, run_benchmark
from .synth import (GenConfig, class_counts, load_templates, make_default_vocabulary,
                    rest_frames, stream_sign, synthesize_dataset, templates_for)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DATA, EXIT_MODEL = 0, 1, 2, 3, 4
REJECTED = "<rejected>"

log = logging.getLogger("flexsign")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    """Resolved settings for one command invocation."""
    seed: int = 42
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    gen: GenConfig = field(default_factory=GenConfig)
    paths: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, a: argparse.Namespace) -> "RunConfig":
        g = lambda name, default: getattr(a, name, default)
        try:
            capture = CaptureConfig(
                window_instants=g("instants", 19), capture_ms=g("capture_ms", 1900),
                onset_threshold=g("onset_threshold", 0.02), onset_span=g("onset_span", 5))
            cleaning = CleaningConfig(g("threshold", 0.25), g("max_spike_len", 1))
            gen = GenConfig(
                seed=g("seed", 42), samples_per_class=g("samples_per_class", None) or 45,
                amp_noise_sd=g("amp_noise", 0.03), time_jitter_sd=g("jitter", 0.02),
                offset_sd=g("offset", 0.02), spike_prob=g("spike_prob", 0.0),
                dropout_prob=g("dropout_prob", 0.0), instants=g("instants", 19))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        paths = {k: v for k, v in vars(a).items() if k in ("input", "output", "model", "test")}
        return cls(g("seed", 42), capture, cleaning, gen, paths)


# -- option groups -----------------------------------------------------------

def _unsigned(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError("must be an unsigned integer")
    return v


def _add_gen_opts(p):
    p.add_argument("--seed", type=_unsigned, default=42, help="generator seed (default 42)")
    p.add_argument("--amp-noise", type=float, default=0.03, help="per-instant noise SD")
    p.add_argument("--jitter", type=float, default=0.02, help="keypoint phase jitter SD")
    p.add_argument("--offset", type=float, default=0.02, help="per-sample channel offset SD")
    p.add_argument("--spike-prob", type=float, default=0.0, help="per-instant spike probability")
    p.add_argument("--dropout-prob", type=float, default=0.0, help="per-sample rail dropout probability")
    p.add_argument("--templates", help="template file (default: shipped 23-sign set)")
    p.add_argument("--vocab", help="vocabulary file, one notation per line")


def _add_clean_opts(p):
    p.add_argument("--threshold", type=float, default=0.25, help="spike jump threshold")
    p.add_argument("--max-spike-len", type=int, default=1, help="longest repairable run")


def _add_capture_opts(p):
    p.add_argument("--capture-ms", type=int, default=1900)
    p.add_argument("--onset-threshold", type=float, default=0.02)
    p.add_argument("--onset-span", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flexsign", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"flexsign {__version__}")
    parser.add_argument("--config", help="INI file with option defaults")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="synthesise a labelled dataset")
    count = p.add_mutually_exclusive_group()
    count.add_argument("--total", type=_unsigned, help="total samples, spread evenly over classes")
    count.add_argument("--samples-per-class", type=_unsigned)
    _add_gen_opts(p)
    p.add_argument("-o", "--output", default="dataset.csv")

    p = sub.add_parser("clean", help="repair spikes and quarantine discontinuities")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--report", help="report prefix (writes <prefix>.txt and <prefix>.csv)")
    _add_clean_opts(p)

    p = sub.add_parser("split", help="shuffled train/test split")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--seed", type=_unsigned, default=42)
    p.add_argument("--train-out", required=True)
    p.add_argument("--test-out", required=True)

    p = sub.add_parser("train", help="fit one classifier")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--model", required=True, choices=MODEL_NAMES)
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--kernel", choices=("rbf", "linear", "poly"), help="svm kernel override")
    p.add_argument("--degree", type=int, help="poly kernel degree")

    p = sub.add_parser("eval", help="evaluate a model on a test set")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-t", "--test", required=True)
    p.add_argument("-o", "--out-dir", required=True)

    p = sub.add_parser("predict", help="print one notation per window")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("-i", "--input", required=True)

    p = sub.add_parser("bench", help="run the whole pipeline for all six models")
    p.add_argument("--total", type=_unsigned, default=1044)
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--no-clean", action="store_true")
    p.add_argument("--models", default=",".join(MODEL_NAMES))
    p.add_argument("-o", "--out-dir")
    _add_gen_opts(p)
    _add_clean_opts(p)

    p = sub.add_parser("stream-sim", help="emit wire frames for named signs")
    p.add_argument("signs", nargs="+")
    p.add_argument("--seed", type=_unsigned, default=42)
    p.add_argument("--rate", type=float, default=10.0, help="frames per second (default 10)")
    p.add_argument("--standby-ms", type=float, default=1000.0)
    p.add_argument("--capture-ms", type=int, default=1900)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--templates")
    p.add_argument("-o", "--output", default="-", help="file path or - for stdout")
    p.add_argument("--tcp", help="serve one client on host:port instead of writing a file")

    p = sub.add_parser("listen", help="recognise signs from a live frame stream")
    p.add_argument("-m", "--model", required=True)
    p.add_argument("--source", default="file:-", help="file:<path> or tcp:<host>:<port>")
    p.add_argument("--queue", type=int, default=16, help="capture hand-off queue size")
    p.add_argument("--timeout", type=float, help="tcp connect/read timeout, seconds")
    _add_capture_opts(p)
    _add_clean_opts(p)
    return parser


# -- config file -------------------------------------------------------------

def _config_defaults(path: str, command: str, sub: argparse.ArgumentParser) -> dict:
    text = Path(path).read_text()
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text if text.lstrip().startswith("[") else "[flexsign]\n" + text)
    except configparser.Error as exc:
        raise UsageError(f"bad config file: {exc}") from None
    values = {}
    for section in ("flexsign", command):
        if cp.has_section(section):
            values.update(cp.items(section))
    actions = {a.dest: a for a in sub._actions}
    out = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None:
            if cp.has_section(command) and key in cp[command]:
                raise UsageError(f"unknown config key {key!r} for {command}")
            continue  # shared keys may target other commands
        if isinstance(action, argparse._StoreTrueAction):
            out[dest] = value.strip().lower() in ("1", "true", "yes", "on")
        else:
            out[dest] = value
    return out


def _parse(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        try:
            defaults = _config_defaults(args.config, args.command, sub)
        except OSError as exc:
            raise IOError(f"cannot read config: {exc}") from None
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


# -- helpers -----------------------------------------------------------------

def _vocab_and_templates(a):
    vocab, templates = make_default_vocabulary()
    if getattr(a, "templates", None):
        templates = load_templates(a.templates)
        vocab = Vocabulary(tuple(t.notation for t in templates))
    if getattr(a, "vocab", None):
        vocab = read_vocabulary(a.vocab)
    return vocab, templates_for(vocab, templates)


def _out(path):
    p = Path(path)
    if p.parent and not p.parent.exists():
        raise FileNotFoundError(f"output directory does not exist: {p.parent}")
    return p


# -- commands ----------------------------------------------------------------

def cmd_gen(a) -> int:
    cfg = RunConfig.from_args(a).gen
    vocab, templates = _vocab_and_templates(a)
    out = _out(a.output)
    data = synthesize_dataset(vocab, templates, cfg, a.total)
    write_dataset(data, out)
    counts = class_counts(len(vocab), a.total, cfg.samples_per_class)
    for name, n in zip(vocab.signs, counts):
        print(f"{name}\t{n}")
    print(f"total\t{len(data)}")
    return EXIT_OK


def cmd_clean(a) -> int:
    cfg = RunConfig.from_args(a).cleaning
    if a.report and Path(a.report + ".csv").resolve() == Path(a.output).resolve():
        raise UsageError("--report prefix would overwrite the cleaned dataset")
    data = read_dataset(a.input)
    out = _out(a.output)
    cleaned, report = clean_dataset(data, cfg)
    write_dataset(cleaned, out)
    if a.report:
        report.write(a.report + ".txt", a.report + ".csv")
    sys.stdout.write(report.summary())
    return EXIT_OK


def cmd_split(a) -> int:
    data = read_dataset(a.input)
    train_out, test_out = _out(a.train_out), _out(a.test_out)
    sp = shuffle_split(len(data), a.ratio, a.seed)
    meta = f"split(ratio={a.ratio!r},seed={a.seed})"
    write_dataset(data.subset(sp.train, f"{data.meta} train {meta}".strip()), train_out)
    write_dataset(data.subset(sp.test, f"{data.meta} test {meta}".strip()), test_out)
    print(f"train\t{len(sp.train)}\ntest\t{len(sp.test)}")
    return EXIT_OK


def cmd_train(a) -> int:
    data = read_dataset(a.input)
    out = _out(a.output)
    overrides = {}
    if a.kernel:
        overrides["kernel"] = a.kernel
    if a.degree is not None:
        overrides["degree"] = a.degree
    try:
        spec = preset(a.model, **overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    m = fit(spec, data)
    save_model(m, out)
    status = "" if m.converged else " (not converged)"
    print(f"trained {a.model} on {len(data.usable())} samples{status}")
    return EXIT_OK


def _load_matching(model_path, data_path):
    m = load_model(model_path)
    data = read_dataset(data_path, vocabulary=m.vocabulary)
    if len(data) and data.window_shape != tuple(m.window_shape):
        raise DimensionMismatch(f"model expects windows of shape {tuple(m.window_shape)}, "
                                f"got {data.window_shape}")
    return m, data


def cmd_eval(a) -> int:
    m, test = _load_matching(a.model, a.test)
    out = Path(a.out_dir)
    rep = evaluate(m, test, m.kind if m.kind != "knn" else f"knn{m.spec.k}")
    text, csv_text = rep.to_text(m.vocabulary), rep.to_csv(m.vocabulary)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text)
    (out / "report.csv").write_text(csv_text)
    render_confusion(rep.confusion, m.vocabulary, out / "confusion", title=rep.model)
    print(f"accuracy: {rep.accuracy!r}")
    print(f"weighted f1: {rep.weighted_f1!r}")
    return EXIT_OK


def cmd_predict(a) -> int:
    m, data = _load_matching(a.model, a.input)
    labels = predict_dataset(m, data) if len(data) else []
    for lab in labels:
        print(m.vocabulary.notation(int(lab)))
    return EXIT_OK


def cmd_bench(a) -> int:
    rc = RunConfig.from_args(a)
    names = [n.strip() for n in a.models.split(",") if n.strip()]
    bad = [n for n in names if n not in MODEL_NAMES]
    if bad:
        raise UsageError(f"unknown models: {', '.join(bad)}")
    res = run_benchmark(rc.gen, a.total, a.ratio, rc.seed, not a.no_clean, rc.cleaning, names)
    if res.cleaning is not None:
        c = res.cleaning.counts
        print(f"cleaning: {c['clean']} clean, {c['repaired']} repaired, {c['quarantined']} quarantined")
    print(f"train {len(res.train)} / test {len(res.test)}")
    sys.stdout.write(format_table(res.reports))
    for n in names:
        if not res.reports[n].converged:
            print(f"note: {n} did not converge")
    print(f"elapsed {res.seconds:.1f} s")
    if a.out_dir:
        out = Path(a.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for n, rep in res.reports.items():
            (out / f"{n}_report.txt").write_text(rep.to_text(res.dataset.vocabulary))
            (out / f"{n}_report.csv").write_text(rep.to_csv(res.dataset.vocabulary))
            render_confusion(rep.confusion, res.dataset.vocabulary, out / f"{n}_confusion", title=n)
    return EXIT_OK


def simulate_stream(names, templates, vocab, seed=42, rate=10.0, standby_ms=1000.0,
                    capture_ms=1900, jitter=0.0, offset=0.0) -> list[bytes]:
    """Wire lines for a sequence of signs, each after a standby period, with a
    trailing rest so the last capture completes."""
    by_name = dict(zip(vocab.signs, templates))
    missing = [n for n in names if n not in by_name]
    if missing:
        raise DataError(f"unknown sign(s): {', '.join(missing)}")
    cfg = GenConfig(seed=seed, amp_noise_sd=0.0, time_jitter_sd=jitter, offset_sd=offset)
    rng = np.random.Generator(np.random.PCG64(seed))
    frames = []
    t0 = 0.0
    period = 1000.0 / rate
    for name in names:
        block = stream_sign(by_name[name], cfg, rate, rng, capture_ms, standby_ms, t0)
        frames += block
        t0 = block[-1].t + period
    n_tail = max(2, int(round(standby_ms * rate / 1000.0)))
    frames += rest_frames(frames[-1].values, n_tail, rate, t0)
    return [format_frame(quantize(f)) for f in frames]


def cmd_stream_sim(a) -> int:
    vocab, templates = _vocab_and_templates(a)
    if a.rate <= 0:
        raise UsageError("--rate must be > 0")
    lines = simulate_stream(a.signs, templates, vocab, a.seed, a.rate, a.standby_ms,
                            a.capture_ms, a.jitter, a.offset)
    if a.tcp:
        host, _, port = a.tcp.rpartition(":")
        if not host or not port.isdigit():
            raise UsageError("--tcp expects host:port")
        serve_lines(lines, host, int(port))
        return EXIT_OK
    data = b"".join(lines)
    if a.output == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        _out(a.output).write_bytes(data)
    return EXIT_OK


def serve_lines(lines, host: str, port: int, ready: threading.Event | None = None,
                bound: list | None = None) -> None:
    """Accept one client and send it ``lines``."""
    with socket.create_server((host, port)) as srv:
        actual = srv.getsockname()[1]
        if bound is not None:
            bound.append(actual)
        print(f"serving on {host}:{actual}", file=sys.stderr, flush=True)
        if ready is not None:
            ready.set()
        conn, _ = srv.accept()
        with conn:
            conn.sendall(b"".join(lines))


class DropOldestQueue:
    """Bounded hand-off between the stream reader and the classifier.

    When full, ``put`` discards the oldest item and counts it.
    """

    def __init__(self, maxsize: int):
        self._items = deque()
        self._maxsize = max(1, maxsize)
        self._cond = threading.Condition()
        self._closed = False
        self.dropped = 0

    def put(self, item) -> None:
        with self._cond:
            if len(self._items) >= self._maxsize:
                self._items.popleft()
                self.dropped += 1
                log.warning("classifier behind; dropped oldest capture (%d so far)", self.dropped)
            self._items.append(item)
            self._cond.notify()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def get(self):
        """Next item, or None once closed and drained."""
        with self._cond:
            while not self._items and not self._closed:
                self._cond.wait()
            return self._items.popleft() if self._items else None


@dataclass
class ListenSummary:
    recognised: int = 0
    rejected: int = 0
    dropped: int = 0
    lines: int = 0
    malformed: int = 0
    error: str = ""


def listen(model, source: str, capture: CaptureConfig, cleaning: CleaningConfig,
           out=None, queue_size: int = 16, timeout: float | None = None) -> ListenSummary:
    """Standby -> onset -> capture -> clean -> predict, one line per sign.

    Raises ConnectionError when the source cannot be opened; failures after
    that end the session and are recorded in the summary.
    """
    out = out or sys.stdout
    stream = open_stream(source, capture.channels, timeout)
    summary = ListenSummary()
    q = DropOldestQueue(queue_size)
    first = iter(stream)  # opening tcp happens lazily; force it here
    try:
        first_frame = next(first, None)
    except StreamQualityError as exc:
        summary.error = str(exc)
        first_frame = None

    def reader():
        seg = Segmenter(capture)
        try:
            if first_frame is not None:
                for frame in _chain(first_frame, first):
                    cap = seg.push(frame.normalized())
                    if cap is not None:
                        q.put(cap)
        except (OSError, StreamQualityError) as exc:
            summary.error = str(exc)
        finally:
            q.close()

    th = threading.Thread(target=reader, name="flexsign-reader", daemon=True)
    th.start()
    while True:
        cap = q.get()
        if cap is None:
            break
        window, quality = repair_sample(cap.window, cleaning)
        if quality is Quality.QUARANTINED:
            summary.rejected += 1
            print(f"{int(round(cap.start_ms))}\t{REJECTED}", file=out, flush=True)
            continue
        label = predict(model, window)
        summary.recognised += 1
        print(f"{int(round(cap.start_ms))}\t{model.vocabulary.notation(label)}", file=out, flush=True)
    th.join()
    summary.dropped = q.dropped
    summary.lines = stream.total
    summary.malformed = stream.malformed
    return summary


def _chain(head, rest):
    yield head
    yield from rest


def cmd_listen(a) -> int:
    rc = RunConfig.from_args(a)
    m = load_model(a.model)
    if tuple(m.window_shape) != (rc.capture.window_instants, rc.capture.channels):
        raise DimensionMismatch(f"model expects {tuple(m.window_shape)} windows, capture makes "
                                f"{(rc.capture.window_instants, rc.capture.channels)}")
    s = listen(m, a.source, rc.capture, rc.cleaning, queue_size=a.queue, timeout=a.timeout)
    print(f"signs {s.recognised}, rejected {s.rejected}, dropped {s.dropped}, "
          f"lines {s.lines}, malformed {s.malformed}" + (f", stopped: {s.error}" if s.error else ""),
          file=sys.stderr)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen, "clean": cmd_clean, "split": cmd_split, "train": cmd_train,
    "eval": cmd_eval, "predict": cmd_predict, "bench": cmd_bench,
    "stream-sim": cmd_stream_sim, "listen": cmd_listen,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except UsageError as exc:
        print(f"flexsign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"flexsign: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"flexsign: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DimensionMismatch, ModelFormatError, ModelError) as exc:
        print(f"flexsign: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (DataError, FrameParseError, StreamQualityError) as exc:
        print(f"flexsign: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, ConnectionError) as exc:
        print(f"flexsign: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"flexsign: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
