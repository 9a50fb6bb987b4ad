"""Numba vs numpy timings for the hot kernels, plus the whole pipeline.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--no-pipeline]

Kernel timings call both implementations directly on data shaped like the
default benchmark (835 x 57 training matrix, 23 classes). The first numba
call per kernel is a warm-up and is not timed. The pipeline timing runs
``flexsign bench`` in a subprocess once per path, toggling
``FLEXSIGN_NO_NUMBA``.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from flexsign._accel import HAVE_NUMBA
from flexsign.core import shuffle_split
from flexsign.learn import kernels as K
from flexsign.learn.tree import build_tree
from flexsign.synth import GenConfig, make_default_vocabulary, synthesize_dataset


def _data():
    vocab, templates = make_default_vocabulary()
    d = synthesize_dataset(vocab, templates, GenConfig(), 1044)
    sp = shuffle_split(len(d), 0.8, 42)
    tr, te = d.subset(sp.train), d.subset(sp.test)
    return tr.features(), tr.labels(), te.features(), len(vocab)


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(X, y, Xt, k):
    feats = np.arange(X.shape[1], dtype=np.int64)
    tree = build_tree(X, y, k)
    args_tree = (Xt, tree.feature, tree.threshold, tree.left, tree.right)
    # one OvO pair worth of rbf Gram matrix
    a, b = 0, 1
    idx = np.flatnonzero((y == a) | (y == b))
    yy = np.where(y[idx] == a, 1.0, -1.0)
    Kab = np.exp(-0.5 * K._sq_dists_np(X[idx], X[idx]))
    Q = np.ascontiguousarray(yy[:, None] * yy[None, :] * Kab)
    return {
        "best_split (835x57)": (K._best_split_nb, K._best_split_np, (X, y, k, feats)),
        "tree_apply (209 rows)": (K._tree_apply_nb, K._tree_apply_np, args_tree),
        "sq_dists (209x835)": (K._sq_dists_nb, K._sq_dists_np, (Xt, X)),
        "smo pair (n=%d)" % len(idx): (K._smo_nb, K._smo_np, (Q, yy, 1.0, 1e-3, 10 * len(idx), False)),
    }


def run_pipeline(no_numba: bool) -> float:
    env = dict(os.environ, FLEXSIGN_NO_NUMBA="1" if no_numba else "0")
    t0 = time.perf_counter()
    subprocess.run([sys.executable, "-m", "flexsign", "bench"], env=env, check=True,
                   stdout=subprocess.DEVNULL)
    return time.perf_counter() - t0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-pipeline", action="store_true")
    a = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba not installed; only the numpy path can be timed")
    X, y, Xt, k = _data()
    print(f"{'kernel':<24} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, (nb, npf, args) in kernel_cases(X, y, Xt, k).items():
        t_np = _time(lambda: npf(*args), a.repeat)
        if HAVE_NUMBA:
            nb(*args)  # compile / load cache
            t_nb = _time(lambda: nb(*args), a.repeat)
            print(f"{name:<24} {t_nb * 1e3:10.2f} {t_np * 1e3:10.2f} {t_np / t_nb:7.1f}x")
        else:
            print(f"{name:<24} {'-':>10} {t_np * 1e3:10.2f} {'-':>8}")
    if not a.no_pipeline:
        print()
        t_np = run_pipeline(True)
        print(f"pipeline, numpy path: {t_np:6.1f} s")
        if HAVE_NUMBA:
            t_nb = run_pipeline(False)
            print(f"pipeline, numba path: {t_nb:6.1f} s (includes jit/cache load)")


if __name__ == "__main__":
    main()
