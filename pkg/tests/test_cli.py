import subprocess
import sys
import threading

import numpy as np
import pytest

from flexsign.acquisition import CaptureConfig
from flexsign.cleaning import CleaningConfig
from flexsign.cli import (EXIT_DATA, EXIT_IO, EXIT_MODEL, EXIT_OK, EXIT_USAGE, REJECTED,
                          DropOldestQueue, listen, main, serve_lines, simulate_stream)
from flexsign.core import Dataset, GestureWindow, LabeledSample, read_dataset, write_dataset
from flexsign.evaluate import read_report_csv
from flexsign.learn import load_model


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """gen -> clean -> split -> train(rf) once for the module."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--total", "1044", "--seed", "42", "-o", str(d / "data.csv")]) == 0
    assert main(["clean", "-i", str(d / "data.csv"), "-o", str(d / "clean.csv"),
                 "--report", str(d / "cleaning")]) == 0
    assert main(["split", "-i", str(d / "clean.csv"), "--ratio", "0.8", "--seed", "42",
                 "--train-out", str(d / "train.csv"), "--test-out", str(d / "test.csv")]) == 0
    assert main(["train", "-i", str(d / "train.csv"), "--model", "rf", "-o", str(d / "rf.model")]) == 0
    return d


def test_gen_counts(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "--total", 1044, "--seed", 42, "-o", tmp_path / "a.csv")
    assert code == 0 and out.splitlines()[-1] == "total\t1044"
    assert out.splitlines()[0] == "hello\t46" and "extra01\t45" in out
    assert len(read_dataset(tmp_path / "a.csv")) == 1044
    code, _, _ = run(capsys, "gen", "--samples-per-class", 1, "-o", tmp_path / "b.csv")
    assert code == 0 and len(read_dataset(tmp_path / "b.csv")) == 23
    run(capsys, "gen", "--total", 1044, "--seed", 42, "-o", tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_chain_outputs(workdir, capsys):
    d = workdir
    assert (d / "cleaning.txt").read_text().startswith("samples: 1044")
    assert (d / "clean.csv").exists()
    train, test = read_dataset(d / "train.csv"), read_dataset(d / "test.csv")
    assert (len(train), len(test)) == (835, 209)
    full = read_dataset(d / "clean.csv")
    # the two split files hold every input row exactly once
    rows = lambda p: [l for l in p.read_text().splitlines() if l and not l.startswith(("#", "label,"))]
    assert sorted(rows(d / "train.csv") + rows(d / "test.csv")) == sorted(rows(d / "clean.csv"))
    assert len(full) == 1044

    code, out, _ = run(capsys, "eval", "-m", d / "rf.model", "-t", d / "test.csv", "-o", d / "eval")
    assert code == 0
    printed = float(out.splitlines()[0].split(": ")[1])
    rep = read_report_csv((d / "eval" / "report.csv").read_text())
    assert printed == rep["accuracy"] and rep["total"] == 209
    assert f"accuracy: {printed!r}" in (d / "eval" / "report.txt").read_text()
    assert (d / "eval" / "confusion.svg").exists() and (d / "eval" / "confusion.csv").exists()

    code, out, _ = run(capsys, "predict", "-m", d / "rf.model", "-i", d / "test.csv")
    assert code == 0 and len(out.splitlines()) == 209
    assert set(out.split()) <= set(full.vocabulary.signs)


def test_usage_errors(tmp_path, capsys):
    assert run(capsys, "train", "-i", "x", "--model", "mlp", "-o", "y")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--seed", "-3")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--amp-noise", "loud")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--dropout-prob", "2", "-o", tmp_path / "x.csv")[0] == EXIT_USAGE
    assert not (tmp_path / "x.csv").exists()
    assert run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert run(capsys)[0] == EXIT_USAGE


def test_io_errors(tmp_path, capsys):
    assert run(capsys, "clean", "-i", tmp_path / "none.csv", "-o", tmp_path / "o.csv")[0] == EXIT_IO
    assert run(capsys, "gen", "-o", tmp_path / "no" / "dir.csv")[0] == EXIT_IO
    assert run(capsys, "--config", tmp_path / "missing.ini", "gen")[0] == EXIT_IO


def test_data_errors(tmp_path, capsys, workdir):
    bad = tmp_path / "bad.csv"
    text = (workdir / "test.csv").read_text().splitlines()
    text[8] = text[8].rsplit(",", 1)[0]
    bad.write_text("\n".join(text) + "\n")
    code, _, err = run(capsys, "clean", "-i", bad, "-o", tmp_path / "o.csv")
    assert code == EXIT_DATA and "line 9" in err
    assert not (tmp_path / "o.csv").exists()
    code, _, _ = run(capsys, "stream-sim", "goodbye", "-o", tmp_path / "s.txt")
    assert code == EXIT_DATA and not (tmp_path / "s.txt").exists()


def test_model_errors(tmp_path, capsys, workdir):
    data = read_dataset(workdir / "test.csv")
    short = Dataset(data.vocabulary, tuple(
        LabeledSample(GestureWindow(s.window.values[:10]), s.label) for s in data.samples[:5]))
    write_dataset(short, tmp_path / "short.csv")
    code, _, err = run(capsys, "eval", "-m", workdir / "rf.model", "-t", tmp_path / "short.csv",
                       "-o", tmp_path / "ev")
    assert code == EXIT_MODEL and not (tmp_path / "ev").exists()
    assert run(capsys, "predict", "-m", workdir / "rf.model", "-i", tmp_path / "short.csv")[0] == EXIT_MODEL
    broken = tmp_path / "broken.model"
    broken.write_text((workdir / "rf.model").read_text().replace("flexsign-model 1", "flexsign-model 2", 1))
    assert run(capsys, "predict", "-m", broken, "-i", workdir / "test.csv")[0] == EXIT_MODEL


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[flexsign]\nseed = 7\n\n[gen]\namp-noise = 0.1\nsamples-per-class = 2\n")
    assert run(capsys, "--config", cfg, "gen", "-o", tmp_path / "a.csv")[0] == 0
    meta = read_dataset(tmp_path / "a.csv").meta
    assert "seed=7" in meta and "amp=0.1" in meta
    assert len(read_dataset(tmp_path / "a.csv")) == 46
    assert run(capsys, "--config", cfg, "gen", "--seed", 9, "-o", tmp_path / "b.csv")[0] == 0
    meta = read_dataset(tmp_path / "b.csv").meta
    assert "seed=9" in meta and "amp=0.1" in meta
    # sectionless files apply to every command
    flat = tmp_path / "flat.ini"
    flat.write_text("seed = 5\n")
    run(capsys, "--config", flat, "gen", "--samples-per-class", 1, "-o", tmp_path / "c.csv")
    assert "seed=5" in read_dataset(tmp_path / "c.csv").meta
    typo = tmp_path / "typo.ini"
    typo.write_text("[gen]\namp-nosie = 0.1\n")
    assert run(capsys, "--config", typo, "gen", "-o", tmp_path / "d.csv")[0] == EXIT_USAGE


def test_help_mentions_precedence(capsys):
    assert main(["--help"]) == 0
    assert "flags, an" in capsys.readouterr().out


def test_clean_report_collision(tmp_path, capsys):
    code, _, _ = run(capsys, "clean", "-i", tmp_path / "in.csv", "-o", tmp_path / "x.csv",
                     "--report", tmp_path / "x")
    assert code == EXIT_USAGE


def _listen(model, lines, tmp_path, **kw):
    p = tmp_path / "stream.txt"
    p.write_bytes(b"".join(lines))
    import io
    out = io.StringIO()
    s = listen(model, f"file:{p}", CaptureConfig(), CleaningConfig(), out=out, **kw)
    return out.getvalue().splitlines(), s


def test_listen_hello(workdir, tmp_path, default_vocab):
    vocab, templates = default_vocab
    m = load_model(workdir / "rf.model")
    out, s = _listen(m, simulate_stream(["hello"], templates, vocab), tmp_path)
    assert out == ["1000\thello"] and s.recognised == 1


def test_listen_constant_stream(workdir, tmp_path):
    m = load_model(workdir / "rf.model")
    lines = [f"{i * 100},400,500,600\n".encode() for i in range(300)]
    out, s = _listen(m, lines, tmp_path)
    assert out == [] and s.lines == 300


def test_listen_five_signs(workdir, tmp_path, default_vocab):
    vocab, templates = default_vocab
    names = ["yes", "no", "busy", "ASL", "want"]
    m = load_model(workdir / "rf.model")
    out, s = _listen(m, simulate_stream(names, templates, vocab, seed=3), tmp_path)
    assert [l.split("\t")[1] for l in out] == names


def test_listen_rejects_quarantined_capture(workdir, tmp_path, default_vocab):
    vocab, templates = default_vocab
    lines = simulate_stream(["hello", "yes"], templates, vocab)
    # rail-drop the elbow channel for 5 frames in the middle of the first sign
    for i in range(14, 19):
        t, a, b, c = lines[i].decode().strip().split(",")
        lines[i] = f"{t},0,{b},{c}\n".encode()
    m = load_model(workdir / "rf.model")
    out, s = _listen(m, lines, tmp_path)
    assert out == ["1000\t" + REJECTED, "3900\tyes"]
    assert s.rejected == 1 and s.recognised == 1


def test_listen_survives_garbage(workdir, tmp_path, default_vocab):
    vocab, templates = default_vocab
    lines = simulate_stream(["hello", "thanks" if "thanks" in vocab.signs else "ok"], templates, vocab)
    rng = np.random.default_rng(0)
    for pos in sorted(rng.choice(len(lines), 5, replace=False), reverse=True):
        lines.insert(int(pos), bytes(rng.integers(0, 256, 20, dtype=np.uint8)) + b"\n")
    m = load_model(workdir / "rf.model")
    out, s = _listen(m, lines, tmp_path)
    assert [l.split("\t")[1] for l in out] == ["hello", "ok"]
    assert s.malformed == 5


def test_listen_quality_stop_is_clean(workdir, tmp_path):
    lines = [b"junk\n"] * 30
    m = load_model(workdir / "rf.model")
    out, s = _listen(m, lines, tmp_path)
    assert out == [] and "malformed" in s.error


def test_listen_tcp(workdir, default_vocab):
    import io
    vocab, templates = default_vocab
    lines = simulate_stream(["whatsup", "deaf"], templates, vocab, seed=8)
    ready, bound = threading.Event(), []
    th = threading.Thread(target=serve_lines, args=(lines, "127.0.0.1", 0, ready, bound), daemon=True)
    th.start()
    assert ready.wait(5)
    out = io.StringIO()
    s = listen(load_model(workdir / "rf.model"), f"tcp:127.0.0.1:{bound[0]}", CaptureConfig(),
               CleaningConfig(), out=out, timeout=10)
    th.join(5)
    assert [l.split("\t")[1] for l in out.getvalue().splitlines()] == ["whatsup", "deaf"]
    assert s.error == ""


def test_listen_unreachable(workdir, capsys):
    import socket
    with socket.socket() as sk:
        sk.bind(("127.0.0.1", 0))
        port = sk.getsockname()[1]
    code, _, _ = run(capsys, "listen", "-m", workdir / "rf.model", "--source", f"tcp:127.0.0.1:{port}",
                     "--timeout", 2)
    assert code == EXIT_IO


def test_pipe_stream_sim_to_listen(workdir):
    sim = subprocess.run([sys.executable, "-m", "flexsign", "stream-sim", "hello"],
                         capture_output=True, check=True)
    res = subprocess.run([sys.executable, "-m", "flexsign", "listen", "-m", str(workdir / "rf.model")],
                         input=sim.stdout, capture_output=True, check=True)
    assert res.stdout.decode().split() == ["1000", "hello"]
    assert "signs 1" in res.stderr.decode()


def test_drop_oldest_queue():
    q = DropOldestQueue(2)
    for i in range(5):
        q.put(i)
    q.close()
    assert [q.get(), q.get(), q.get()] == [3, 4, None]
    assert q.dropped == 3


def test_bench_command(tmp_path, capsys):
    code, out, _ = run(capsys, "bench", "--total", 230, "--models", "dt,knn3", "-o", tmp_path / "b")
    assert code == 0 and "train 184 / test 46" in out
    assert (tmp_path / "b" / "dt_report.csv").exists()
    assert run(capsys, "bench", "--models", "dt,mlp")[0] == EXIT_USAGE
