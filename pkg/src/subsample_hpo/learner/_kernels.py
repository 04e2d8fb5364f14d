"""Numba kernels for exact greedy tree growth and tree traversal."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def split_gain(GL, HL, G, H, lam, gamma):
    GR = G - GL
    HR = H - HL
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam)) - gamma


@njit(cache=True, nogil=True)
def leaf_weight(G, H, lam, alpha):
    a = abs(G) - alpha
    if a <= 0.0:
        return 0.0
    if G > 0.0:
        return -a / (H + lam)
    return a / (H + lam)


@njit(cache=True, nogil=True)
def grow_tree(X, order, sorted_vals, g, h, in_sample, features, max_depth, lam, alpha, gamma, eta,
              feat_out, thr_out, left_out, right_out, value_out, gain_out, gs, hs):
    """Grow one tree level by level, scanning each feature's presorted order once per level.

    Rows with ``in_sample[i] == False`` are ignored. Node arrays must hold
    ``2 ** (max_depth + 1) - 1`` entries; ``gs`` and ``hs`` are scratch of
    shape ``(len(features), n)`` or larger. Returns the number of nodes used.
    """
    n = X.shape[0]
    max_nodes = feat_out.shape[0]
    node_of = np.full(n, -1, np.int32)
    nodeG = np.zeros(max_nodes)
    nodeH = np.zeros(max_nodes)
    G0 = 0.0
    H0 = 0.0
    for i in range(n):
        if in_sample[i]:
            node_of[i] = 0
            G0 += g[i]
            H0 += h[i]
    # gradients in each feature's sorted order, gathered once per tree rather than once per level;
    # the per-level scan then only gathers the small node_of array
    n_feat = features.shape[0]
    for fi in range(n_feat):
        col = order[features[fi]]
        for j in range(n):
            gs[fi, j] = g[col[j]]
            hs[fi, j] = h[col[j]]
    nodeG[0] = G0
    nodeH[0] = H0
    for k in range(max_nodes):
        feat_out[k] = -1
        thr_out[k] = 0.0
        left_out[k] = -1
        right_out[k] = -1
        value_out[k] = 0.0
        gain_out[k] = 0.0

    n_nodes = 1
    level_start = 0
    level_end = 1
    for depth in range(max_depth):
        m = level_end - level_start
        if m == 0:
            break
        best_gain = np.zeros(m)
        best_feat = np.full(m, -1, np.int64)
        best_thr = np.zeros(m)
        best_GL = np.zeros(m)
        best_HL = np.zeros(m)
        GL = np.zeros(m)
        HL = np.zeros(m)
        last = np.zeros(m)
        seen = np.zeros(m, np.bool_)
        for fi in range(n_feat):
            f = features[fi]
            GL[:] = 0.0
            HL[:] = 0.0
            seen[:] = False
            col = order[f]
            vals = sorted_vals[f]
            for j in range(n):
                nd = node_of[col[j]]
                if nd < level_start:
                    continue
                loc = nd - level_start
                v = vals[j]
                if seen[loc] and v != last[loc]:
                    gl = GL[loc]
                    hl = HL[loc]
                    gain = split_gain(gl, hl, nodeG[nd], nodeH[nd], lam, gamma)
                    if gain > best_gain[loc]:
                        best_gain[loc] = gain
                        best_feat[loc] = f
                        t = 0.5 * (last[loc] + v)
                        if t <= last[loc] or t > v:
                            t = v
                        best_thr[loc] = t
                        best_GL[loc] = gl
                        best_HL[loc] = hl
                GL[loc] += gs[fi, j]
                HL[loc] += hs[fi, j]
                last[loc] = v
                seen[loc] = True

        child = np.full(m, -1, np.int64)
        for loc in range(m):
            nd = level_start + loc
            if best_feat[loc] >= 0:
                lc = n_nodes
                n_nodes += 2
                child[loc] = lc
                feat_out[nd] = best_feat[loc]
                thr_out[nd] = best_thr[loc]
                left_out[nd] = lc
                right_out[nd] = lc + 1
                gain_out[nd] = best_gain[loc]
                nodeG[lc] = best_GL[loc]
                nodeH[lc] = best_HL[loc]
                nodeG[lc + 1] = nodeG[nd] - best_GL[loc]
                nodeH[lc + 1] = nodeH[nd] - best_HL[loc]
            else:
                value_out[nd] = eta * leaf_weight(nodeG[nd], nodeH[nd], lam, alpha)
        for i in range(n):
            nd = node_of[i]
            if nd < level_start:
                continue
            loc = nd - level_start
            lc = child[loc]
            if lc < 0:
                node_of[i] = -1
            elif X[i, best_feat[loc]] < best_thr[loc]:
                node_of[i] = lc
            else:
                node_of[i] = lc + 1
        level_start = level_end
        level_end = n_nodes

    for nd in range(level_start, level_end):
        value_out[nd] = eta * leaf_weight(nodeG[nd], nodeH[nd], lam, alpha)
    return n_nodes


@njit(cache=True, nogil=True)
def add_tree_output(X, feat, thr, left, right, value, out):
    for i in range(X.shape[0]):
        nd = 0
        while feat[nd] >= 0:
            if X[i, feat[nd]] < thr[nd]:
                nd = left[nd]
            else:
                nd = right[nd]
        out[i] += value[nd]
