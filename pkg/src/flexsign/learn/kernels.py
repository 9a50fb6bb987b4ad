"""Hot inner loops, each as a numba kernel (``*_nb``) and a numpy twin (``*_np``).

The public names at the bottom resolve to one of the two according to
``flexsign._accel.USE_NUMBA``. Both variants perform the same floating point
operations in the same order where results feed a discrete decision (split
choice, SMO pair choice), so the two paths train identical models.
"""
from __future__ import annotations

import numpy as np

from .._accel import njit, pick

SPLIT_REL_TOL = 1e-12
SMO_TAU = 1e-12
_CHUNK = 1 << 22


# -- CART split search -------------------------------------------------------

@njit
def _best_split_nb(X, y, n_classes, features):
    n = X.shape[0]
    m = features.shape[0]
    total = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        total[y[i]] += 1
    s_total = 0
    for c in range(n_classes):
        s_total += total[c] * total[c]
    parent = 1.0 - s_total / (float(n) * float(n))

    scores = np.full((m, n - 1), -np.inf)
    thresholds = np.zeros((m, n - 1))
    left = np.zeros(n_classes, dtype=np.int64)
    best = -np.inf
    for fi in range(m):
        col = X[:, features[fi]].copy()
        order = np.argsort(col)
        for c in range(n_classes):
            left[c] = 0
        s_left = 0
        s_right = s_total
        for p in range(n - 1):
            c = y[order[p]]
            s_left += 2 * left[c] + 1
            s_right -= 2 * (total[c] - left[c]) - 1
            left[c] += 1
            a = col[order[p]]
            b = col[order[p + 1]]
            if a < b:
                n_left = p + 1
                sc = s_left / float(n_left) + s_right / float(n - n_left)
                scores[fi, p] = sc
                mid = (a + b) / 2.0
                if mid >= b:
                    mid = a
                thresholds[fi, p] = mid
                if sc > best:
                    best = sc
    if best == -np.inf:
        return -1, 0.0, 0.0
    floor = best - SPLIT_REL_TOL * n
    # first feature (in given order), then lowest threshold, within tolerance of the best
    for fi in range(m):
        bf = -1
        bt = 0.0
        for p in range(n - 1):
            if scores[fi, p] >= floor:
                if bf < 0 or thresholds[fi, p] < bt:
                    bf = p
                    bt = thresholds[fi, p]
        if bf >= 0:
            return features[fi], bt, parent - (n - scores[fi, bf]) / n
    return -1, 0.0, 0.0


def _best_split_np(X, y, n_classes, features):
    n = X.shape[0]
    total = np.bincount(y, minlength=n_classes).astype(np.int64)
    s_total = int(total @ total)
    parent = 1.0 - s_total / (float(n) * float(n))
    cols = X[:, features]
    order = np.argsort(cols, axis=0)
    xs = np.take_along_axis(cols, order, axis=0)
    onehot = np.zeros((n, n_classes), dtype=np.int64)
    onehot[np.arange(n), y] = 1
    cum = np.cumsum(onehot[order], axis=0)[:-1]            # (n-1, m, K)
    s_left = (cum * cum).sum(axis=2)
    right = total[None, None, :] - cum
    s_right = (right * right).sum(axis=2)
    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    scores = s_left / n_left + s_right / (float(n) - n_left)
    a, b = xs[:-1], xs[1:]
    valid = a < b
    if not valid.any():
        return -1, 0.0, 0.0
    scores = np.where(valid, scores, -np.inf)
    mid = (a + b) / 2.0
    mid = np.where(mid >= b, a, mid)
    best = scores.max()
    ok = scores >= best - SPLIT_REL_TOL * n
    fi = int(np.argmax(ok.any(axis=0)))
    cand = np.where(ok[:, fi], mid[:, fi], np.inf)
    p = int(np.argmin(cand))
    return int(features[fi]), float(mid[p, fi]), float(parent - (n - scores[p, fi]) / n)


# -- tree traversal ----------------------------------------------------------

@njit
def _tree_apply_nb(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def _tree_apply_np(X, feature, threshold, left, right):
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        r = rows[active]
        nd = node[r]
        go_left = X[r, feature[nd]] <= threshold[nd]
        node[r] = np.where(go_left, left[nd], right[nd])
        active[r] = feature[node[r]] >= 0
    return node


# -- distances ---------------------------------------------------------------

@njit
def _sq_dists_nb(A, B):
    out = np.empty((A.shape[0], B.shape[0]))
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            s = 0.0
            for k in range(A.shape[1]):
                d = A[i, k] - B[j, k]
                s += d * d
            out[i, j] = s
    return out


def _sq_dists_np(A, B):
    out = np.empty((A.shape[0], B.shape[0]))
    step = max(1, _CHUNK // max(1, B.shape[0] * A.shape[1]))
    for s in range(0, A.shape[0], step):
        d = A[s:s + step, None, :] - B[None, :, :]
        out[s:s + step] = np.einsum("ijk,ijk->ij", d, d)
    return out


# -- SMO ---------------------------------------------------------------------

def _pair_gain_py(Q, G, y, i, j, di, dj):
    """Dual objective increase from moving alpha_i, alpha_j by (di, dj).

    Along the pair direction the change is ``|t| (|g| - |t| q / 2)`` where
    ``g`` is the directional gradient and ``q`` the curvature; the clipped
    step never overshoots the unconstrained optimum, so the bracket stays
    positive. Summing these non-negative gains keeps the recorded history
    monotone under rounding, unlike re-evaluating the objective each step.
    """
    if y[i] != y[j]:
        t = 0.5 * (di + dj)
        g = G[i] + G[j]
        q = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
    else:
        t = 0.5 * (dj - di)
        g = G[j] - G[i]
        q = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
    at = abs(t)
    return at * (abs(g) - 0.5 * at * max(q, 0.0))


_pair_gain = njit(_pair_gain_py)

@njit
def _smo_nb(Q, y, C, tol, max_iter, record):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    hist = np.zeros(max_iter + 1 if record else 1)
    it = 0
    converged = False
    while True:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * G[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            converged = True
            break
        if it >= max_iter:
            break
        ai = alpha[i]
        aj = alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = SMO_TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] = ai + delta
            alpha[j] = aj + delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = SMO_TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            alpha[i] = ai - delta
            alpha[j] = aj + delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = s
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = s
        di = alpha[i] - ai
        dj = alpha[j] - aj
        if record:
            hist[it + 1] = hist[it] + _pair_gain(Q, G, y, i, j, di, dj)
        for t in range(n):
            G[t] += Q[t, i] * di + Q[t, j] * dj
        it += 1
    return alpha, G, it, converged, hist[:it + 1] if record else hist[:0]


def _smo_np(Q, y, C, tol, max_iter, record):
    n = y.shape[0]
    alpha = np.zeros(n)
    G = -np.ones(n)
    hist = [0.0] if record else []
    it = 0
    converged = False
    pos = y > 0
    while True:
        v = -y * G
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        if not up.any() or not low.any():
            converged = True
            break
        vu = np.where(up, v, -np.inf)
        vl = np.where(low, v, np.inf)
        i = int(np.argmax(vu))
        j = int(np.argmin(vl))
        if vu[i] - vl[j] < tol:
            converged = True
            break
        if it >= max_iter:
            break
        ai, aj = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = SMO_TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            alpha[i] = ai + delta
            alpha[j] = aj + delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            else:
                if alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, -diff
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = SMO_TAU
            delta = (G[i] - G[j]) / quad
            s = ai + aj
            alpha[i] = ai - delta
            alpha[j] = aj + delta
            if s > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, s - C
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, s - C
            else:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, s
                if alpha[i] < 0:
                    alpha[i], alpha[j] = 0.0, s
        di = alpha[i] - ai
        dj = alpha[j] - aj
        if record:
            hist.append(hist[-1] + _pair_gain_py(Q, G, y, i, j, di, dj))
        G += Q[:, i] * di + Q[:, j] * dj
        it += 1
    return alpha, G, it, converged, np.array(hist)


best_split_kernel = pick(_best_split_nb, _best_split_np)
tree_apply = pick(_tree_apply_nb, _tree_apply_np)
sq_dists = pick(_sq_dists_nb, _sq_dists_np)
smo = pick(_smo_nb, _smo_np)
