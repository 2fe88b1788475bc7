"""Compiled kernels for regression-tree growth and evaluation.

Trees are stored as flat arrays: ``feature`` (-1 marks a leaf),
``threshold``, ``left``, ``right`` (tree-local node ids) and ``value``.
A forest or boosted ensemble concatenates its trees and records each
tree's first node in ``offsets``.

Randomness comes from SplitMix64. Tree ``t`` of a model seeded with ``s``
starts from state ``mix64(s + (t + 1) * GOLDEN)``, so adding trees never
changes the stream of earlier ones.
"""

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

LEAF = -1


@njit(cache=True)
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True)
def tree_state(seed, t):
    return mix64(np.uint64(seed) + np.uint64(t + 1) * GOLDEN)


@njit(cache=True)
def next_u64(state):
    state[0] += GOLDEN
    return mix64(state[0])


@njit(cache=True)
def next_uniform(state):
    return np.float64(next_u64(state) >> _S11) * _INV53


@njit(cache=True)
def randbelow(state, k):
    j = np.int64(next_uniform(state) * k)
    return min(j, k - 1)


@njit(cache=True)
def sample_features(state, p, mtry):
    """``mtry`` distinct column ids from ``range(p)``, sorted ascending."""
    pool = np.arange(p)
    for i in range(mtry):
        j = i + randbelow(state, p - i)
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return np.sort(pool[:mtry])


@njit(cache=True)
def split_gain(s_left, n_left, s_right, n_right, l2_reg, boosted):
    s = s_left + s_right
    n = n_left + n_right
    if boosted:
        return 0.5 * (
            s_left * s_left / (n_left + l2_reg)
            + s_right * s_right / (n_right + l2_reg)
            - s * s / (n + l2_reg)
        )
    return s_left * s_left / n_left + s_right * s_right / n_right - s * s / n


@njit(cache=True)
def find_split(X, target, sorted_rows, start, end, features, min_n, l2_reg, loss_reduction, boosted):
    """Best ``(feature, threshold, gain)`` over the candidate columns.

    ``sorted_rows[f, start:end]`` lists the node's rows ordered by column
    ``f``. Thresholds are midpoints between consecutive distinct values;
    both children keep at least ``min_n`` rows. Lower features, then lower
    thresholds, win ties. Returns feature -1 when no split has gain above
    ``loss_reduction``.
    """
    m = end - start
    best_f = -1
    best_thr = 0.0
    best_gain = -np.inf
    total = 0.0
    for i in range(start, end):
        total += target[sorted_rows[0, i]]
    for f in features:
        s_left = 0.0
        for i in range(m - 1):
            r = sorted_rows[f, start + i]
            s_left += target[r]
            n_left = i + 1
            if n_left < min_n:
                continue
            if m - n_left < min_n:
                break
            v = X[r, f]
            v_next = X[sorted_rows[f, start + i + 1], f]
            if v == v_next:
                continue
            gain = split_gain(s_left, n_left, total - s_left, m - n_left, l2_reg, boosted)
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = 0.5 * (v + v_next)
    if best_f < 0 or not best_gain > loss_reduction:
        return -1, 0.0, best_gain
    return best_f, best_thr, best_gain


@njit(cache=True)
def presort(X):
    """Row order of every column, shape ``(p, n)``."""
    p = X.shape[1]
    out = np.empty((p, X.shape[0]), dtype=np.int64)
    for f in range(p):
        out[f] = np.argsort(X[:, f], kind="mergesort")
    return out


@njit(cache=True)
def expand_sorted(order, counts, total):
    """Per-column sorted row lists where row ``r`` appears ``counts[r]`` times."""
    p, n = order.shape
    out = np.empty((p, total), dtype=np.int64)
    for f in range(p):
        k = 0
        for i in range(n):
            r = order[f, i]
            for _ in range(counts[r]):
                out[f, k] = r
                k += 1
    return out


@njit(cache=True)
def grow_tree(X, target, sorted_rows, mtry, min_n, max_depth, l2_reg, loss_reduction, boosted, state):
    """Grow one tree depth-first (node, left subtree, right subtree).

    ``sorted_rows`` comes from :func:`expand_sorted` and is reordered in
    place. A node becomes a leaf when it has fewer than ``2 * min_n`` rows,
    sits at ``max_depth``, has a constant target, or has no split with gain
    above ``loss_reduction``. Leaves hold the mean (forest) or
    ``sum / (count + l2_reg)`` (boosting).
    """
    p, n_rows = sorted_rows.shape
    cap = 2 * n_rows + 1
    feature = np.full(cap, LEAF, dtype=np.int32)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    value = np.zeros(cap)

    goes_left = np.zeros(X.shape[0], dtype=np.bool_)
    tmp = np.empty(n_rows, dtype=np.int64)
    # stack of (node, start, end, depth)
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_rows
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        m = end - start
        s = 0.0
        lo = np.inf
        hi = -np.inf
        for i in range(start, end):
            t = target[sorted_rows[0, i]]
            s += t
            lo = min(lo, t)
            hi = max(hi, t)
        if boosted:
            value[node] = s / (m + l2_reg)
        else:
            value[node] = s / m
        if m < 2 * min_n or depth >= max_depth or lo == hi:
            continue
        features = sample_features(state, p, mtry)
        f, thr, gain = find_split(
            X, target, sorted_rows, start, end, features, min_n, l2_reg, loss_reduction, boosted
        )
        if f < 0:
            continue
        n_left = 0
        for i in range(start, end):
            r = sorted_rows[0, i]
            goes_left[r] = X[r, f] <= thr
        for i in range(start, end):
            if goes_left[sorted_rows[0, i]]:
                n_left += 1
        # stable partition of every column's list
        for k in range(p):
            a = start
            b = 0
            for i in range(start, end):
                r = sorted_rows[k, i]
                if goes_left[r]:
                    sorted_rows[k, a] = r
                    a += 1
                else:
                    tmp[b] = r
                    b += 1
            for i in range(b):
                sorted_rows[k, a + i] = tmp[i]
        feature[node] = f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # right pushed first so the left subtree is grown first
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = start + n_left
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = n_nodes
        stack[top, 1] = start
        stack[top, 2] = start + n_left
        stack[top, 3] = depth + 1
        top += 1
        n_nodes += 2
    return feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes]


@njit(cache=True)
def _append(store_f, store_t, store_l, store_r, store_v, used, f, t, l, r, v):
    k = f.shape[0]
    if used + k > store_f.shape[0]:
        size = max(2 * store_f.shape[0], used + k)
        nf = np.empty(size, dtype=np.int32)
        nt = np.empty(size)
        nl = np.empty(size, dtype=np.int32)
        nr = np.empty(size, dtype=np.int32)
        nv = np.empty(size)
        nf[:used] = store_f[:used]
        nt[:used] = store_t[:used]
        nl[:used] = store_l[:used]
        nr[:used] = store_r[:used]
        nv[:used] = store_v[:used]
        store_f, store_t, store_l, store_r, store_v = nf, nt, nl, nr, nv
    store_f[used : used + k] = f
    store_t[used : used + k] = t
    store_l[used : used + k] = l
    store_r[used : used + k] = r
    store_v[used : used + k] = v
    return store_f, store_t, store_l, store_r, store_v


@njit(cache=True)
def tree_apply(X, feature, threshold, left, right, value, offset, out, scale):
    """``out[i] += scale * tree(X[i])`` for one tree starting at ``offset``."""
    for i in range(X.shape[0]):
        node = 0
        while feature[offset + node] >= 0:
            if X[i, feature[offset + node]] <= threshold[offset + node]:
                node = left[offset + node]
            else:
                node = right[offset + node]
        out[i] += scale * value[offset + node]


@njit(cache=True)
def fit_forest(X, y, n_trees, mtry, min_n, seed, bootstrap):
    n = X.shape[0]
    size = max(16, n_trees * 8)
    sf = np.empty(size, dtype=np.int32)
    st = np.empty(size)
    sl = np.empty(size, dtype=np.int32)
    sr = np.empty(size, dtype=np.int32)
    sv = np.empty(size)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    used = 0
    max_depth = 1 << 30
    order = presort(X)
    counts = np.empty(n, dtype=np.int64)
    for t in range(n_trees):
        state = np.empty(1, dtype=np.uint64)
        state[0] = tree_state(seed, t)
        if bootstrap:
            counts[:] = 0
            for i in range(n):
                counts[randbelow(state, n)] += 1
        else:
            counts[:] = 1
        rows = expand_sorted(order, counts, n)
        f, th, l, r, v = grow_tree(X, y, rows, mtry, min_n, max_depth, 0.0, 0.0, False, state)
        sf, st, sl, sr, sv = _append(sf, st, sl, sr, sv, used, f, th, l, r, v)
        used += f.shape[0]
        offsets[t + 1] = used
    return sf[:used].copy(), st[:used].copy(), sl[:used].copy(), sr[:used].copy(), sv[:used].copy(), offsets


@njit(cache=True)
def subsample_rows(state, n, k):
    """``k`` distinct row ids from ``range(n)``, sorted ascending."""
    pool = np.arange(n)
    for i in range(k):
        j = i + randbelow(state, n - i)
        tmp = pool[i]
        pool[i] = pool[j]
        pool[j] = tmp
    return np.sort(pool[:k])


@njit(cache=True)
def fit_boosted(X, y, n_trees, mtry, min_n, max_depth, learn_rate, loss_reduction, sample_size, l2_reg, seed):
    n = X.shape[0]
    base = 0.0
    for i in range(n):
        base += y[i]
    base /= n
    pred = np.full(n, base)
    resid = np.empty(n)
    history = np.empty(n_trees + 1)
    err = 0.0
    for i in range(n):
        err += (y[i] - pred[i]) ** 2
    history[0] = err / n
    k = max(1, int(np.floor(sample_size * n + 0.5)))
    k = min(k, n)
    size = max(16, n_trees * 8)
    sf = np.empty(size, dtype=np.int32)
    st = np.empty(size)
    sl = np.empty(size, dtype=np.int32)
    sr = np.empty(size, dtype=np.int32)
    sv = np.empty(size)
    offsets = np.zeros(n_trees + 1, dtype=np.int64)
    used = 0
    order = presort(X)
    counts = np.empty(n, dtype=np.int64)
    for t in range(n_trees):
        state = np.empty(1, dtype=np.uint64)
        state[0] = tree_state(seed, t)
        if k < n:
            counts[:] = 0
            for r in subsample_rows(state, n, k):
                counts[r] = 1
        else:
            counts[:] = 1
        rows = expand_sorted(order, counts, k)
        for i in range(n):
            resid[i] = y[i] - pred[i]
        f, th, l, r, v = grow_tree(X, resid, rows, mtry, min_n, max_depth, l2_reg, loss_reduction, True, state)
        sf, st, sl, sr, sv = _append(sf, st, sl, sr, sv, used, f, th, l, r, v)
        tree_apply(X, sf, st, sl, sr, sv, used, pred, learn_rate)
        used += f.shape[0]
        offsets[t + 1] = used
        err = 0.0
        for i in range(n):
            err += (y[i] - pred[i]) ** 2
        history[t + 1] = err / n
    return (
        sf[:used].copy(),
        st[:used].copy(),
        sl[:used].copy(),
        sr[:used].copy(),
        sv[:used].copy(),
        offsets,
        base,
        history,
    )


@njit(cache=True)
def predict_sum(X, feature, threshold, left, right, value, offsets):
    """Sum of all tree outputs for every row."""
    out = np.zeros(X.shape[0])
    for t in range(offsets.shape[0] - 1):
        tree_apply(X, feature, threshold, left, right, value, offsets[t], out, 1.0)
    return out


@njit(cache=True)
def predict_each(X, feature, threshold, left, right, value, offsets):
    """Per-tree outputs, shape ``(rows, trees)``."""
    n_trees = offsets.shape[0] - 1
    out = np.zeros((X.shape[0], n_trees))
    col = np.zeros(X.shape[0])
    for t in range(n_trees):
        col[:] = 0.0
        tree_apply(X, feature, threshold, left, right, value, offsets[t], col, 1.0)
        out[:, t] = col
    return out
