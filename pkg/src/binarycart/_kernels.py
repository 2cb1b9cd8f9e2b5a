"""Compiled inner loops for tree construction and prediction.

Features arrive bit-packed: coordinate ``c`` of sample ``j`` is bit
``c % 64`` of ``words[j, c // 64]``. Trees are flat arrays; ``coord[k] < 0``
marks a leaf.
"""

import numpy as np
from numba import njit

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, nogil=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def tie_hash(key, counter):
    """splitmix64 of (key, counter): a per-node random word."""
    return _mix(np.uint64(key) + _GOLDEN * (np.uint64(counter) + np.uint64(1)))


@njit(cache=True, nogil=True)
def _bit(words, j, c):
    return (words[j, c >> 6] >> np.uint64(c & 63)) & np.uint64(1)


@njit(cache=True, nogil=True)
def _pick(vals, ok, key, counter, rtol):
    """Index of the maximum of vals[ok], ties within rtol broken by hash."""
    best = -np.inf
    for c in range(vals.shape[0]):
        if ok[c] and vals[c] > best:
            best = vals[c]
    if best == -np.inf:
        return -1
    thr = best - rtol * abs(best)
    n_ties = 0
    for c in range(vals.shape[0]):
        if ok[c] and vals[c] >= thr:
            n_ties += 1
    target = np.int64(tie_hash(key, counter) % np.uint64(n_ties)) if n_ties > 1 else 0
    for c in range(vals.shape[0]):
        if ok[c] and vals[c] >= thr:
            if target == 0:
                return c
            target -= 1
    return -1


@njit(cache=True, nogil=True)
def _partition_range(idx, lo, hi, words, c, buf):
    """Stable in-place split of idx[lo:hi] into zeros then ones; returns the cut."""
    k = 0
    for p in range(lo, hi):
        if _bit(words, idx[p], c) == 0:
            buf[k] = idx[p]
            k += 1
    cut = lo + k
    for p in range(lo, hi):
        if _bit(words, idx[p], c) == 1:
            buf[k] = idx[p]
            k += 1
    for p in range(hi - lo):
        idx[lo + p] = buf[p]
    return cut


@njit(cache=True, nogil=True)
def _rows_identical(idx, lo, hi, words):
    for p in range(lo + 1, hi):
        for w in range(words.shape[1]):
            if words[idx[p], w] != words[idx[lo], w]:
                return False
    return True


@njit(cache=True, nogil=True)
def _leaf_values(coord, start, end, gidx, g_y, n_nodes):
    value = np.full(n_nodes, np.nan)
    count = np.zeros(n_nodes, np.int64)
    for k in range(n_nodes):
        if coord[k] < 0:
            s = 0.0
            for p in range(start[k], end[k]):
                s += g_y[gidx[p]]
            count[k] = end[k] - start[k]
            if count[k] > 0:
                value[k] = s / count[k]
    return value, count


@njit(cache=True, nogil=True)
def level_split_kernel(s_words, s_y, g_words, g_y, d, max_levels, min_split, key, rtol):
    """Greedy level-wise splitting.

    One coordinate per level maximizes the grouped explained second moment
    on the structure sample. Every current leaf with at least ``min_split``
    gating points and points on both sides is split on it.
    """
    ns = s_y.shape[0]
    ng = g_y.shape[0]
    cap = 2 * max(ng, 1) + 1
    coord = np.full(cap, -1, np.int64)
    child0 = np.full(cap, -1, np.int64)
    child1 = np.full(cap, -1, np.int64)
    start = np.zeros(cap, np.int64)
    end = np.zeros(cap, np.int64)
    gidx = np.arange(ng)
    buf = np.empty(max(ng, 1), np.int64)
    end[0] = ng
    n_nodes = 1
    frontier = np.zeros(cap, np.int64)
    n_front = 1
    nxt = np.zeros(cap, np.int64)

    sgroup = np.zeros(ns, np.int64)
    n_groups = 1
    used = np.zeros(d, np.bool_)
    order = np.full(d, -1, np.int64)
    n_used = 0
    vals = np.zeros(d)
    gsum = np.zeros(ns + 1)
    gcnt = np.zeros(ns + 1)

    for level in range(max_levels):
        if n_used == d:
            break
        if min_split > 2:
            live = False
            for f in range(n_front):
                k = frontier[f]
                if end[k] - start[k] >= min_split and not _rows_identical(gidx, start[k], end[k], g_words):
                    live = True
                    break
            if not live:
                break
        # grouped explained second moment of S + {c} for every free c
        gsum[:n_groups] = 0.0
        gcnt[:n_groups] = 0.0
        for j in range(ns):
            gsum[sgroup[j]] += s_y[j]
            gcnt[sgroup[j]] += 1.0
        s1 = np.zeros((n_groups, d))
        c1 = np.zeros((n_groups, d))
        for j in range(ns):
            g = sgroup[j]
            yj = s_y[j]
            for c in range(d):
                if not used[c] and _bit(s_words, j, c) == 1:
                    s1[g, c] += yj
                    c1[g, c] += 1.0
        for c in range(d):
            v = 0.0
            if not used[c]:
                for g in range(n_groups):
                    if c1[g, c] > 0:
                        v += s1[g, c] * s1[g, c] / c1[g, c]
                    c0 = gcnt[g] - c1[g, c]
                    if c0 > 0:
                        s0 = gsum[g] - s1[g, c]
                        v += s0 * s0 / c0
                if ns > 0:
                    v /= ns
            vals[c] = v
        free = ~used
        c = _pick(vals, free, key, level, rtol)

        n_next = 0
        for f in range(n_front):
            k = frontier[f]
            lo = start[k]
            hi = end[k]
            ones = 0
            for p in range(lo, hi):
                ones += _bit(g_words, gidx[p], c)
            if hi - lo >= min_split and ones >= 1 and ones <= hi - lo - 1:
                cut = _partition_range(gidx, lo, hi, g_words, c, buf)
                coord[k] = c
                child0[k] = n_nodes
                child1[k] = n_nodes + 1
                start[n_nodes] = lo
                end[n_nodes] = cut
                start[n_nodes + 1] = cut
                end[n_nodes + 1] = hi
                nxt[n_next] = n_nodes
                nxt[n_next + 1] = n_nodes + 1
                n_next += 2
                n_nodes += 2
            else:
                nxt[n_next] = k
                n_next += 1
        frontier[:n_next] = nxt[:n_next]
        n_front = n_next

        relabel = np.full(2 * n_groups, -1, np.int64)
        fresh = 0
        for j in range(ns):
            kk = 2 * sgroup[j] + np.int64(_bit(s_words, j, c))
            if relabel[kk] < 0:
                relabel[kk] = fresh
                fresh += 1
            sgroup[j] = relabel[kk]
        n_groups = max(fresh, 1)
        used[c] = True
        order[n_used] = c
        n_used += 1

    value, count = _leaf_values(coord, start, end, gidx, g_y, n_nodes)
    return coord[:n_nodes], child0[:n_nodes], child1[:n_nodes], value, count, order[:n_used]


@njit(cache=True, nogil=True)
def breiman_kernel(s_words, s_y, g_words, g_y, d, max_leaves, min_split, key, rtol):
    """Breadth-first cell-wise greedy splitting up to ``max_leaves`` leaves.

    A cell is split on the free coordinate with the largest cell-wise
    explained second moment on its structure points, among coordinates that
    leave gating points on both sides.
    """
    ns = s_y.shape[0]
    ng = g_y.shape[0]
    cap = 2 * max(ng, 1) + 1
    coord = np.full(cap, -1, np.int64)
    child0 = np.full(cap, -1, np.int64)
    child1 = np.full(cap, -1, np.int64)
    gstart = np.zeros(cap, np.int64)
    gend = np.zeros(cap, np.int64)
    sstart = np.zeros(cap, np.int64)
    send = np.zeros(cap, np.int64)
    fixed = np.zeros((cap, d), np.bool_)
    gidx = np.arange(ng)
    sidx = np.arange(ns)
    gbuf = np.empty(max(ng, 1), np.int64)
    sbuf = np.empty(max(ns, 1), np.int64)
    gend[0] = ng
    send[0] = ns
    n_nodes = 1
    queue = np.zeros(cap, np.int64)
    n_queue = 1
    nxt = np.zeros(cap, np.int64)
    n_leaves = 1
    vals = np.zeros(d)
    ok = np.zeros(d, np.bool_)
    gones = np.zeros(d, np.int64)
    s1 = np.zeros(d)
    c1 = np.zeros(d)

    while n_leaves < max_leaves and n_queue > 0:
        n_next = 0
        for q in range(n_queue):
            if n_leaves >= max_leaves:
                break
            k = queue[q]
            glo = gstart[k]
            ghi = gend[k]
            if ghi - glo < min_split:
                continue
            gones[:] = 0
            for p in range(glo, ghi):
                for c in range(d):
                    if not fixed[k, c]:
                        gones[c] += _bit(g_words, gidx[p], c)
            any_ok = False
            for c in range(d):
                ok[c] = (not fixed[k, c]) and gones[c] >= 1 and gones[c] <= ghi - glo - 1
                any_ok = any_ok or ok[c]
            if not any_ok:
                continue
            slo = sstart[k]
            shi = send[k]
            s1[:] = 0.0
            c1[:] = 0.0
            total = 0.0
            for p in range(slo, shi):
                j = sidx[p]
                total += s_y[j]
                for c in range(d):
                    if ok[c] and _bit(s_words, j, c) == 1:
                        s1[c] += s_y[j]
                        c1[c] += 1.0
            n_here = shi - slo
            for c in range(d):
                v = 0.0
                if ok[c] and n_here > 0:
                    if c1[c] > 0:
                        v += s1[c] * s1[c] / c1[c]
                    c0 = n_here - c1[c]
                    if c0 > 0:
                        v += (total - s1[c]) * (total - s1[c]) / c0
                    v /= n_here
                vals[c] = v
            c = _pick(vals, ok, key, k, rtol)
            gcut = _partition_range(gidx, glo, ghi, g_words, c, gbuf)
            scut = _partition_range(sidx, slo, shi, s_words, c, sbuf)
            coord[k] = c
            for side in range(2):
                kid = n_nodes + side
                fixed[kid, :] = fixed[k, :]
                fixed[kid, c] = True
                gstart[kid] = glo if side == 0 else gcut
                gend[kid] = gcut if side == 0 else ghi
                sstart[kid] = slo if side == 0 else scut
                send[kid] = scut if side == 0 else shi
                nxt[n_next] = kid
                n_next += 1
            child0[k] = n_nodes
            child1[k] = n_nodes + 1
            n_nodes += 2
            n_leaves += 1
        queue[:n_next] = nxt[:n_next]
        n_queue = n_next

    value, count = _leaf_values(coord, gstart, gend, gidx, g_y, n_nodes)
    return coord[:n_nodes], child0[:n_nodes], child1[:n_nodes], value, count


@njit(cache=True, nogil=True)
def predict_kernel(coord, child0, child1, value, words):
    out = np.empty(words.shape[0])
    for j in range(words.shape[0]):
        k = 0
        while coord[k] >= 0:
            if _bit(words, j, coord[k]) == 1:
                k = child1[k]
            else:
                k = child0[k]
        out[j] = value[k]
    return out


@njit(cache=True, nogil=True)
def forest_predict_kernel(coord, child0, child1, value, roots, words):
    """Per-tree predictions, shape (n_trees, n_queries); children are global indices."""
    out = np.empty((roots.shape[0], words.shape[0]))
    for b in range(roots.shape[0]):
        for j in range(words.shape[0]):
            k = roots[b]
            while coord[k] >= 0:
                if _bit(words, j, coord[k]) == 1:
                    k = child1[k]
                else:
                    k = child0[k]
            out[b, j] = value[k]
    return out
