"""Compiled tree-growing and traversal kernels.

Trees are stored as flat node arrays. Internal nodes send ``x <= threshold``
left. Randomness comes from SplitMix64 so a given seed yields the same tree on
every platform.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

IMPURITY_TOL = 1e-12


@njit(cache=True, nogil=True)
def _next_u64(state):
    state[0] = state[0] + _GOLDEN
    z = state[0]
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def _uniform(state):
    return np.float64(_next_u64(state) >> _S11) * _INV53


@njit(cache=True, nogil=True)
def _randint(state, n):
    k = np.int64(_uniform(state) * n)
    return k if k < n else n - 1


def splitmix64_stream(seed: int, n: int) -> np.ndarray:
    """Uniform [0, 1) draws from the tree RNG, exposed for testing."""
    st = np.array([seed], dtype=np.uint64)
    return np.array([_uniform(st) for _ in range(n)])


@njit(cache=True, nogil=True)
def build_tree(X, y_cls, y_reg, n_classes, n_samples_used, bootstrap, max_features, min_leaf, max_depth, extra, seed):
    """Grow one tree.

    ``n_classes > 0`` selects Gini classification on ``y_cls`` (codes
    0..n_classes-1); otherwise MSE regression on ``y_reg``. ``max_depth < 0``
    means unlimited.
    """
    n_total, n_features = X.shape
    state = np.empty(1, dtype=np.uint64)
    state[0] = np.uint64(seed)
    is_clf = n_classes > 0
    n_out = n_classes if is_clf else 1

    m0 = n_samples_used
    idx = np.empty(m0, dtype=np.int64)
    if bootstrap:
        for i in range(m0):
            idx[i] = _randint(state, n_total)
    else:
        for i in range(m0):
            idx[i] = i

    cap = 2 * m0 + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, n_out))
    n_node = np.zeros(cap, dtype=np.int64)
    impurity = np.zeros(cap)

    st_node = np.empty(cap, dtype=np.int64)
    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    sp = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m0
    st_depth[0] = 0
    sp = 1
    node_count = 1

    perm = np.arange(n_features)
    counts = np.zeros(n_out)
    cl = np.zeros(n_out)
    cr = np.zeros(n_out)
    vals = np.empty(m0)
    order = np.empty(m0, dtype=np.int64)

    while sp > 0:
        sp -= 1
        node = st_node[sp]
        start = st_start[sp]
        end = st_end[sp]
        depth = st_depth[sp]
        m = end - start
        n_node[node] = m

        # node statistics
        total_sum = 0.0
        total_sq = 0.0
        if is_clf:
            counts[:] = 0.0
            for i in range(start, end):
                counts[y_cls[idx[i]]] += 1.0
            sq = 0.0
            for k in range(n_out):
                value[node, k] = counts[k] / m
                sq += counts[k] * counts[k]
            imp = 1.0 - sq / (m * m)
        else:
            for i in range(start, end):
                v = y_reg[idx[i]]
                total_sum += v
                total_sq += v * v
            mean = total_sum / m
            value[node, 0] = mean
            imp = total_sq / m - mean * mean
            if imp < 0.0:
                imp = 0.0
        impurity[node] = imp

        if m < 2 * min_leaf or imp <= IMPURITY_TOL or (max_depth >= 0 and depth >= max_depth):
            continue

        # score = weighted child "purity"; larger is better
        best_score = -np.inf
        best_f = -1
        best_t = 0.0
        visited = 0
        for i in range(n_features):
            if visited >= max_features:
                break
            j = i + _randint(state, n_features - i)
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            f = perm[i]
            sl = 0.0

            lo = np.inf
            hi = -np.inf
            for p in range(start, end):
                v = X[idx[p], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi - lo <= 1e-12 * max(1.0, abs(hi)):
                continue
            visited += 1

            if extra:
                t = lo + _uniform(state) * (hi - lo)
                if t >= hi:
                    t = lo
                nl = 0
                if is_clf:
                    cl[:] = 0.0
                    for p in range(start, end):
                        r = idx[p]
                        if X[r, f] <= t:
                            cl[y_cls[r]] += 1.0
                            nl += 1
                else:
                    for p in range(start, end):
                        r = idx[p]
                        if X[r, f] <= t:
                            sl += y_reg[r]
                            nl += 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf:
                    continue
                if is_clf:
                    al = 0.0
                    ar = 0.0
                    for k in range(n_out):
                        al += cl[k] * cl[k]
                        d = counts[k] - cl[k]
                        ar += d * d
                    score = al / nl + ar / nr
                else:
                    sr = total_sum - sl
                    score = sl * sl / nl + sr * sr / nr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_t = t
            else:
                for p in range(m):
                    vals[p] = X[idx[start + p], f]
                o = np.argsort(vals[:m], kind="mergesort")
                for p in range(m):
                    order[p] = idx[start + o[p]]
                if is_clf:
                    cl[:] = 0.0
                for p in range(1, m):
                    r = order[p - 1]
                    if is_clf:
                        cl[y_cls[r]] += 1.0
                    else:
                        sl += y_reg[r]
                    nl = p
                    nr = m - p
                    if nl < min_leaf:
                        continue
                    if nr < min_leaf:
                        break
                    v0 = X[r, f]
                    v1 = X[order[p], f]
                    if v1 <= v0:
                        continue
                    if is_clf:
                        al = 0.0
                        ar = 0.0
                        for k in range(n_out):
                            al += cl[k] * cl[k]
                            d = counts[k] - cl[k]
                            ar += d * d
                        score = al / nl + ar / nr
                    else:
                        sr = total_sum - sl
                        score = sl * sl / nl + sr * sr / nr
                    if score > best_score:
                        best_score = score
                        best_f = f
                        t = 0.5 * (v0 + v1)
                        if t >= v1:
                            t = v0
                        best_t = t

        if best_f < 0:
            continue

        # partition idx[start:end] in place
        a = start
        b = end - 1
        while a <= b:
            if X[idx[a], best_f] <= best_t:
                a += 1
            else:
                tmp = idx[a]
                idx[a] = idx[b]
                idx[b] = tmp
                b -= 1
        mid = a

        feature[node] = best_f
        threshold[node] = best_t
        lchild = node_count
        rchild = node_count + 1
        node_count += 2
        left[node] = lchild
        right[node] = rchild

        st_node[sp] = rchild
        st_start[sp] = mid
        st_end[sp] = end
        st_depth[sp] = depth + 1
        sp += 1
        st_node[sp] = lchild
        st_start[sp] = start
        st_end[sp] = mid
        st_depth[sp] = depth + 1
        sp += 1

    return (
        feature[:node_count].copy(),
        threshold[:node_count].copy(),
        left[:node_count].copy(),
        right[:node_count].copy(),
        value[:node_count].copy(),
        n_node[:node_count].copy(),
        impurity[:node_count].copy(),
    )


@njit(cache=True, nogil=True)
def apply_tree(feature, threshold, left, right, X):
    """Leaf index reached by each row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def accumulate_tree(feature, threshold, left, right, value, X, out):
    n = X.shape[0]
    n_out = value.shape[1]
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        for k in range(n_out):
            out[i, k] += value[node, k]
