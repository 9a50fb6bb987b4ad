import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_dataset
from flexsign.core import GestureWindow
from flexsign.learn import (MODEL_NAMES, ClassifierSpec, DimensionMismatch, ModelError,
                            ModelFormatError, ModelVersionError, best_split, dumps_model,
                            fit, gini, load_model, loads_model, predict, predict_batch,
                            preset, save_model)
from flexsign.learn import kernels as K
from flexsign.learn.knn import knn_predict
from flexsign.learn.logreg import augment, fit_logreg, predict_proba, softmax_loss_grad
from flexsign.learn.svm import Kernel, fit_ovo, scale_gamma, smo_fit_pair, tally_votes
from flexsign.learn.tree import build_forest, build_tree


# -- gini / best_split --------------------------------------------------------

def test_gini_examples():
    assert gini([5, 5]) == 0.5
    assert gini([7, 0]) == 0.0
    assert gini([2, 1, 1]) == 0.625
    with pytest.raises(ValueError):
        gini([0, 0])


def test_best_split_examples():
    s = best_split(np.array([[0.0], [1.0], [2.0], [3.0]]), np.array([0, 0, 1, 1]))
    assert (s.feature, s.threshold) == (0, 1.5) and s.decrease == pytest.approx(0.5, abs=1e-15)
    assert best_split(np.ones((5, 3)), np.array([0, 1, 0, 1, 1])) is None
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 2.0], [1.0, 3.0]])
    s = best_split(X, np.array([0, 0, 1, 1]))
    assert s.feature == 1 and s.threshold == 1.5


def _gini_frac(counts):
    n = sum(counts)
    return 1 - sum(Fraction(c, n) ** 2 for c in counts)


def exhaustive_split(X, y, k):
    """Every midpoint of every feature in exact arithmetic; first best wins."""
    n = len(y)
    parent = _gini_frac([int(np.sum(y == c)) for c in range(k)])
    best = None
    for f in range(X.shape[1]):
        vals = sorted(set(X[:, f].tolist()))
        for a, b in zip(vals, vals[1:]):
            thr = (a + b) / 2
            left = X[:, f] <= thr
            cl = [int(np.sum(y[left] == c)) for c in range(k)]
            cr = [int(np.sum(y[~left] == c)) for c in range(k)]
            nl, nr = sum(cl), sum(cr)
            dec = parent - Fraction(nl, n) * _gini_frac(cl) - Fraction(nr, n) * _gini_frac(cr)
            if best is None or dec > best[2]:
                best = (f, thr, dec)
    return best


@given(st.integers(2, 8), st.integers(1, 4), st.integers(2, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=400)
def test_best_split_matches_exhaustive(n, d, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 5, (n, d)) / 2.0  # coarse grid -> plenty of ties
    y = rng.integers(0, k, n)
    got = best_split(X, y, n_classes=k)
    want = exhaustive_split(X, y, k)
    if want is None:
        assert got is None
        return
    assert (got.feature, got.threshold) == (want[0], want[1])
    assert abs(got.decrease - float(want[2])) <= 1e-12


def test_best_split_feature_subset():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 2.0], [1.0, 3.0]])
    s = best_split(X, np.array([0, 0, 1, 1]), features=[0])
    assert s is None or s.feature == 0


# -- trees -------------------------------------------------------------------

def _train_acc(m, X, y):
    return float(np.mean(predict_batch(m, X) == y))


def test_dt_four_points_one_node():
    X = np.array([[0.1, 0.1], [0.2, 0.3], [0.8, 0.7], [0.9, 0.9]])
    y = np.array([0, 0, 1, 1])
    t = build_tree(X, y, 2)
    assert int(np.sum(t.feature >= 0)) == 1
    assert np.array_equal(t.predict(X), y)


@given(st.integers(2, 60), st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_dt_fits_consistent_data(n, d, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (n, d)) / 3.0
    # label is a function of the row, so duplicates agree
    y = np.array([hash(r.tobytes()) % k for r in X])
    t = build_tree(X, y, k)
    assert np.array_equal(t.predict(X), y)


def test_rf_degenerate_equals_dt(rng):
    X = rng.random((200, 6))
    y = (X[:, 0] + X[:, 1] * 2 + rng.normal(0, 0.3, 200) > 1.5).astype(int) + (X[:, 2] > 0.7)
    d = make_dataset(X, y)
    dt = fit(ClassifierSpec("dt"), d)
    rf = fit(ClassifierSpec("rf", n_trees=1, bootstrap=False, max_features=None, max_depth=None), d)
    Q = rng.random((500, 6))
    assert np.array_equal(predict_batch(dt, X), predict_batch(rf, X))
    assert np.array_equal(predict_batch(dt, Q), predict_batch(rf, Q))


def test_rf_deterministic_and_seeded(rng):
    X = rng.random((80, 9))
    y = rng.integers(0, 3, 80)
    a = build_forest(X, y, 3, n_trees=5, seed=1)
    b = build_forest(X, y, 3, n_trees=5, seed=1)
    c = build_forest(X, y, 3, n_trees=5, seed=2)
    assert all(np.array_equal(s.threshold, t.threshold) for s, t in zip(a, b))
    assert any(not np.array_equal(s.threshold, t.threshold) or len(s.threshold) != len(t.threshold)
               for s, t in zip(a, c))
    # tree i depends only on (seed, i)
    d = build_forest(X, y, 3, n_trees=2, seed=1)
    assert np.array_equal(d[1].threshold, a[1].threshold)


def test_rf_depth_limit(rng):
    X = rng.random((300, 4))
    y = rng.integers(0, 4, 300)
    trees = build_forest(X, y, 4, n_trees=3, max_depth=3, seed=0)
    assert all(t.depth <= 3 for t in trees)


def test_rf_vote_tie_lowest_label():
    from flexsign.learn.tree import TreeArrays, forest_predict
    leaf = lambda c: TreeArrays(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                                np.array([[1, 0, 0] if c == 0 else [0, 0, 1] if c == 2 else [0, 1, 0]]))
    assert forest_predict([leaf(2), leaf(1)], np.zeros((1, 2)), 3)[0] == 1


# -- knn ---------------------------------------------------------------------

def test_knn_stores_training_set(small_dataset):
    m = fit(preset("knn5"), small_dataset)
    assert np.array_equal(m.payload[0], small_dataset.features())
    assert np.array_equal(m.payload[1], small_dataset.labels())


@given(st.integers(2, 50), st.integers(1, 5), st.integers(2, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=100)
def test_knn1_training_accuracy(n, d, k, seed):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    if len({r.tobytes() for r in X}) < n:
        return
    y = rng.integers(0, k, n)
    assert np.array_equal(knn_predict(X, y, X, 1, k), y)


def test_knn_tie_rules():
    X = np.array([[0.0], [1.0], [3.0], [4.0]])
    y = np.array([2, 1, 1, 2])
    # k=2 at 0.4: one vote each for 2 (d=0.4) and 1 (d=0.6): nearest neighbour's class wins
    assert knn_predict(X, y, np.array([[0.4]]), 2, 3)[0] == 2
    # equidistant tie between classes 2 and 1 -> lowest label
    assert knn_predict(X, y, np.array([[0.5]]), 2, 3)[0] == 1


def test_knn_deterministic(rng):
    X = rng.integers(0, 3, (100, 4)) / 2.0  # many equal distances
    y = rng.integers(0, 5, 100)
    Q = rng.integers(0, 3, (200, 4)) / 2.0
    runs = [knn_predict(X, y, Q, 4, 5) for _ in range(3)]
    assert all(np.array_equal(runs[0], r) for r in runs)


# -- logistic regression -----------------------------------------------------

def test_lr_zero_weights():
    rng = np.random.default_rng(0)
    X = rng.random((30, 57))
    y = rng.integers(0, 23, 30)
    W = np.zeros((23, 58))
    loss, _ = softmax_loss_grad(W, augment(X), y, 1.0)
    assert abs(loss - math.log(23)) < 1e-12
    assert abs(math.log(23) - 3.13549) < 1e-5
    P = predict_proba(W, X)
    assert np.allclose(P, 1 / 23, rtol=0, atol=1e-15)


def test_lr_zero_weights_predict_label0(small_dataset):
    m = fit(preset("logreg"), small_dataset)
    m.payload.weights[:] = 0.0
    assert set(predict_batch(m, small_dataset.features()).tolist()) == {0}


def fd_gradient(W, Xa, y, l2, h=1e-5):
    f = np.zeros_like(W)
    for idx in np.ndindex(*W.shape):
        Wp, Wm = W.copy(), W.copy()
        Wp[idx] += h
        Wm[idx] -= h
        f[idx] = (softmax_loss_grad(Wp, Xa, y, l2)[0] - softmax_loss_grad(Wm, Xa, y, l2)[0]) / (2 * h)
    return f


def test_lr_gradient_small():
    rng = np.random.default_rng(4)
    X, y = rng.random((12, 5)), rng.integers(0, 4, 12)
    W = rng.normal(0, 1, (4, 6))
    Xa = augment(X)
    _, g = softmax_loss_grad(W, Xa, y, 0.7)
    f = fd_gradient(W, Xa, y, 0.7)
    assert np.max(np.abs(g - f)) / np.max(np.abs(g)) < 1e-7


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_lr_proba_rows_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    W = rng.normal(0, 5, (23, 58))
    P = predict_proba(W, rng.random((20, 57)))
    assert np.all(np.abs(P.sum(axis=1) - 1) <= 1e-12)


def test_lr_separable_toy():
    rng = np.random.default_rng(1)
    a = rng.normal([0.25, 0.25], 0.05, (20, 2))
    b = rng.normal([0.75, 0.75], 0.05, (20, 2))
    X, y = np.vstack([a, b]), np.repeat([0, 1], 20)
    res = fit_logreg(X, y, 2)
    assert res.converged and res.epochs < 1000
    assert np.array_equal(np.argmax(predict_proba(res.weights, X), axis=1), y)
    assert all(b <= a for a, b in zip(res.losses, res.losses[1:]))


def test_lr_epoch_cap_flag(small_dataset):
    res = fit_logreg(small_dataset.features(), small_dataset.labels(), 23, max_epochs=5)
    assert not res.converged and res.epochs == 5
    m = fit(preset("logreg", max_epochs=5), small_dataset)
    assert not m.converged
    assert predict_batch(m, small_dataset.features()).shape == (len(small_dataset),)


# -- svm ---------------------------------------------------------------------

def test_svm_two_points_analytic():
    X = np.array([[-1.0], [1.0]])
    fitp = smo_fit_pair(X, np.array([-1.0, 1.0]), C=10.0, kernel=Kernel("linear"))
    assert np.allclose(fitp.alpha, [0.5, 0.5], atol=1e-6)
    assert abs(fitp.bias) < 1e-6
    dec0 = np.sum(fitp.alpha * np.array([-1, 1]) * (X[:, 0] * 0.0)) + fitp.bias
    assert abs(dec0) < 1e-6


def test_rbf_self_similarity(rng):
    X = rng.random((10, 57))
    assert np.allclose(np.diag(Kernel("rbf", gamma=3.7)(X, X)), 1.0, atol=0, rtol=0)


def test_scale_gamma(rng):
    X = rng.random((50, 4))
    assert scale_gamma(X) == 1.0 / (4 * X.var())


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_smo_feasibility_and_monotone(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 30))
    X = rng.random((n, 3))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    C = float(rng.choice([0.1, 1.0, 10.0]))
    kern = Kernel(str(rng.choice(["rbf", "linear", "poly"])), gamma=1.0, degree=2, coef0=1.0)
    r = smo_fit_pair(X, y, C, kern, record=True)
    assert np.all(r.alpha >= 0) and np.all(r.alpha <= C)
    assert abs(np.dot(r.alpha, y)) <= 1e-9
    h = r.dual_history
    assert len(h) == r.iterations + 1
    assert np.all(np.diff(h) >= 0)
    # the accumulated gains equal the dual objective evaluated directly
    Q = (y[:, None] * y[None, :]) * kern(X, X)
    direct = r.alpha.sum() - 0.5 * r.alpha @ Q @ r.alpha
    assert abs(h[-1] - direct) <= 1e-9 * max(1.0, abs(direct))


def test_ovo_pairs_and_votes(small_dataset):
    m = fit(preset("svm"), small_dataset)
    k = len(small_dataset.vocabulary)
    assert len(m.payload.pairs) == k * (k - 1) // 2
    assert [(a, b) for a, b, *_ in m.payload.pairs] == list(combinations(range(k), 2))
    assert tally_votes([0, 0, 1], 3) == 0
    assert tally_votes([1, 0, 2], 3) == 0  # three-way tie -> lowest label


# -- common contract ---------------------------------------------------------

@pytest.mark.parametrize("name", MODEL_NAMES)
def test_fit_predict_contract(name, small_dataset):
    m = fit(preset(name), small_dataset)
    assert m.vocabulary == small_dataset.vocabulary and m.window_shape == (19, 3)
    w = small_dataset.samples[0].window
    assert 0 <= predict(m, w) < 23
    assert predict(m, w) == predict(fit(preset(name), small_dataset), w)
    with pytest.raises(DimensionMismatch):
        predict(m, GestureWindow(np.zeros((18, 3))))
    with pytest.raises(DimensionMismatch):
        predict_batch(m, np.zeros((2, 56)))


def test_fit_rejects_empty(small_dataset):
    with pytest.raises(ModelError):
        fit(preset("rf"), small_dataset.subset([]))


def test_spec_validation():
    for kw in ({"kind": "nn"}, {"kind": "knn", "k": 0}, {"kind": "svm", "C": 0},
               {"kind": "svm", "kernel": "sigmoid"}, {"kind": "rf", "max_depth": 0}):
        with pytest.raises(ValueError):
            ClassifierSpec(**kw)
    with pytest.raises(ValueError):
        preset("mlp")


def test_presets():
    rf = preset("rf")
    assert (rf.n_trees, rf.max_depth, rf.seed, rf.max_features) == (100, 10, 0, "sqrt")
    assert preset("knn5").k == 5 and preset("knn3").k == 3
    assert preset("dt").max_depth is None and preset("dt").seed == 0
    svm = preset("svm")
    assert (svm.kernel, svm.C, svm.gamma) == ("rbf", 1.0, None)
    assert (preset("logreg").l2, preset("logreg").max_epochs) == (1.0, 1000)


# -- persistence -------------------------------------------------------------

@pytest.mark.parametrize("name", MODEL_NAMES)
def test_persist_round_trip(name, small_dataset, tmp_path, rng):
    m = fit(preset(name), small_dataset)
    save_model(m, tmp_path / "m.txt")
    back = load_model(tmp_path / "m.txt")
    Q = rng.random((100, 57))
    assert np.array_equal(predict_batch(m, Q), predict_batch(back, Q))
    assert dumps_model(back) == dumps_model(m)
    assert back.converged == m.converged and back.spec == m.spec


def test_persist_poly_svm(small_dataset, rng):
    m = fit(preset("svm", kernel="poly", degree=2), small_dataset)
    back = loads_model(dumps_model(m))
    Q = rng.random((50, 57))
    assert np.array_equal(predict_batch(m, Q), predict_batch(back, Q))


def test_persist_errors(small_dataset):
    text = dumps_model(fit(preset("knn3"), small_dataset))
    with pytest.raises(ModelVersionError):
        loads_model(text.replace("flexsign-model 1", "flexsign-model 9", 1))
    with pytest.raises(ModelFormatError):
        loads_model("\n".join(text.splitlines()[:-3]) + "\n")
    with pytest.raises(ModelFormatError):
        loads_model("hello\n")
    with pytest.raises(ModelFormatError):
        loads_model(text.replace("kind knn", "kind dt", 1))


def test_knn_file_grows_linearly(default_vocab):
    from flexsign.synth import GenConfig, synthesize_dataset
    vocab, templates = default_vocab
    sizes = []
    for per in (2, 4, 8):
        d = synthesize_dataset(vocab, templates, GenConfig(samples_per_class=per))
        sizes.append(len(dumps_model(fit(preset("knn5"), d))))
    step1, step2 = sizes[1] - sizes[0], sizes[2] - sizes[1]
    assert abs(step2 - 2 * step1) / step2 < 0.05


# -- numba and numpy kernels agree -------------------------------------------

@given(st.integers(2, 40), st.integers(1, 6), st.integers(2, 5), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_split_kernels_agree(n, d, k, seed):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.integers(0, 6, (n, d)) / 5.0)
    y = rng.integers(0, k, n).astype(np.int64)
    feats = np.arange(d, dtype=np.int64)
    assert K._best_split_nb(X, y, k, feats) == K._best_split_np(X, y, k, feats)


def test_other_kernels_agree(rng):
    X = rng.random((120, 57))
    y = rng.integers(0, 4, 120)
    t = build_tree(X, y, 4)
    Q = rng.random((300, 57))
    args = (Q, t.feature, t.threshold, t.left, t.right)
    assert np.array_equal(K._tree_apply_nb(*args), K._tree_apply_np(*args))
    assert np.allclose(K._sq_dists_nb(Q, X), K._sq_dists_np(Q, X), rtol=1e-12, atol=1e-12)
    yy = np.where(y[:60] % 2 == 0, 1.0, -1.0)
    Kg = np.exp(-0.5 * K._sq_dists_np(X[:60], X[:60]))
    Qm = np.ascontiguousarray(yy[:, None] * yy[None, :] * Kg)
    a = K._smo_nb(Qm, yy, 1.0, 1e-3, 600, True)
    b = K._smo_np(Qm, yy, 1.0, 1e-3, 600, True)
    assert a[2] == b[2] and a[3] == b[3]
    assert np.allclose(a[0], b[0], rtol=0, atol=1e-9)
    assert np.allclose(a[4], b[4], rtol=0, atol=1e-9)
