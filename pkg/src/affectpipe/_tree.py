"""Compiled information-gain tree grower shared by j48 and rf."""

from __future__ import annotations

import numpy as np
from numba import njit

GAIN_EPS = 1e-12


@njit(cache=True)
def _h(a, b):
    n = a + b
    if a == 0 or b == 0:
        return 0.0
    pa = a / n
    pb = b / n
    return -(pa * np.log2(pa) + pb * np.log2(pb))


@njit(cache=True)
def grow(X, y, min_leaf, max_depth, m_try, seed):
    """Grow one tree on integer labels {0, 1}.

    ``max_depth < 0`` means unlimited; ``m_try`` features are drawn at every
    node (all of them when ``m_try >= X.shape[1]``). Among equal gains the
    lowest feature index wins, then the lowest threshold.
    """
    n, p = X.shape
    np.random.seed(seed)
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, 2), np.int64)
    idx = np.arange(n)
    # stack rows: start, end, depth, parent, is_right
    stack = np.zeros((cap, 5), np.int64)
    sp = 0
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 3] = -1
    sp = 1
    n_nodes = 0
    feats = np.arange(p)
    while sp > 0:
        sp -= 1
        s, e, depth, parent, is_right = stack[sp]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_right:
                right[parent] = node
            else:
                left[parent] = node
        m = e - s
        pos = 0
        for i in range(s, e):
            pos += y[idx[i]]
        counts[node, 0] = m - pos
        counts[node, 1] = pos
        if pos == 0 or pos == m or (max_depth >= 0 and depth >= max_depth) or m < 2 * min_leaf:
            continue
        if m_try < p:
            cand = np.sort(np.random.permutation(p)[:m_try])
        else:
            cand = feats
        parent_h = _h(m - pos, pos)
        best_gain = GAIN_EPS
        best_f = -1
        best_thr = 0.0
        sub = idx[s:e]
        for f in cand:
            vals = X[sub, f]
            order = np.argsort(vals, kind="mergesort")
            xs = vals[order]
            ys = y[sub][order]
            lp = 0
            for i in range(m - 1):
                lp += ys[i]
                nl = i + 1
                nr = m - nl
                if nl < min_leaf or nr < min_leaf or not xs[i] < xs[i + 1]:
                    continue
                h = (nl * _h(nl - lp, lp) + nr * _h(nr - (pos - lp), pos - lp)) / m
                gain = parent_h - h
                if gain > best_gain + GAIN_EPS or (best_f < 0 and gain > best_gain):
                    best_gain = gain
                    best_f = f
                    best_thr = 0.5 * (xs[i] + xs[i + 1])
        if best_f < 0:
            continue
        feature[node] = best_f
        threshold[node] = best_thr
        # partition idx[s:e] so rows going left come first
        lo = s
        for i in range(s, e):
            if X[idx[i], best_f] <= best_thr:
                t = idx[lo]
                idx[lo] = idx[i]
                idx[i] = t
                lo += 1
        # right pushed first so the left subtree gets the lower node ids
        stack[sp, 0] = lo
        stack[sp, 1] = e
        stack[sp, 2] = depth + 1
        stack[sp, 3] = node
        stack[sp, 4] = 1
        sp += 1
        stack[sp, 0] = s
        stack[sp, 1] = lo
        stack[sp, 2] = depth + 1
        stack[sp, 3] = node
        stack[sp, 4] = 0
        sp += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            counts[:n_nodes])


@njit(cache=True)
def leaf_counts(feature, threshold, left, right, counts, roots, X):
    """Sum over trees of per-tree leaf class proportions (or raw counts for one tree)."""
    n = X.shape[0]
    out = np.zeros((n, 2))
    single = roots.shape[0] == 1
    for r in roots:
        for i in range(n):
            node = r
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            c0 = counts[node, 0]
            c1 = counts[node, 1]
            if single:
                out[i, 0] += c0
                out[i, 1] += c1
            else:
                out[i, 0] += c0 / (c0 + c1)
                out[i, 1] += c1 / (c0 + c1)
    return out
