"""Kernels for cut samples W = G_minus + H on [-L, L).

Left sites i in [-L, 0) are stored mirrored as a = -(i + 1) in [0, L), so a
cross edge {i, j} is the pair (a, j) at distance a + j + 1.
"""

import math

import numpy as np
from numba import njit

from ._kernels import uf_find, uf_union


@njit(cache=True)
def cross_edges(L, pc, pool, cursor, out_a, out_j):
    """Independent cross edges with probability pc[d] at distance d.

    Returns (count, cursor); count -1 means the pool ran out and -2 that the
    output buffers are too small.
    """
    npool = pool.shape[0]
    cap = out_a.shape[0]
    m = 0
    for d in range(1, 2 * L):
        p = pc[d]
        if p <= 0.0:
            continue
        a_lo = d - L if d - L > 0 else 0
        a_hi = d - 1 if d - 1 < L - 1 else L - 1
        span = a_hi - a_lo + 1
        lp = math.log1p(-p)
        t = -1
        while True:
            if cursor >= npool:
                return -1, cursor
            u = pool[cursor]
            cursor += 1
            gap = math.log1p(-u) / lp
            if t + 1 + gap >= span:
                break
            t += 1 + int(gap)
            if m >= cap:
                return -2, cursor
            a = a_lo + t
            out_a[m] = a
            out_j[m] = d - 1 - a
            m += 1
    return m, cursor


@njit(cache=True)
def w_summary(minus_labels, ha, hj):
    """(left cluster per H edge, R, N, F_R flag per edge) for one W."""
    L = minus_labels.shape[0]
    m = ha.shape[0]
    lc = np.empty(m, dtype=np.int64)
    deg = np.zeros(L, dtype=np.int64)
    for e in range(m):
        lc[e] = minus_labels[ha[e]]
        deg[lc[e]] += 1
    R = 0
    for e in range(m):
        if deg[lc[e]] >= 2:
            R += 1
    # each busy cluster contributes deg - 1
    busy = 0
    for v in range(L):
        if deg[v] >= 2:
            busy += 1
    R -= busy
    N = 0
    fr = np.zeros(m, dtype=np.bool_)
    for e in range(m):
        if deg[lc[e]] >= 2:
            fr[e] = True
            if hj[e] + 1 > N:
                N = hj[e] + 1
    return lc, R, N, fr


@njit(cache=True)
def corank_against(plus_labels, lc, hj, L):
    """R_0 of G_plus + W: H corank over G_minus and G_plus clusters."""
    parent = np.arange(2 * L)
    s = 0
    for e in range(lc.shape[0]):
        if uf_union(parent, lc[e], L + plus_labels[hj[e]]):
            s += 1
    return lc.shape[0] - s


@njit(cache=True)
def panel_A(X, lc, hj, fr, L):
    """A(x, W) for every panel row of X: busy-cluster endpoints agree."""
    P = X.shape[0]
    out = np.ones(P, dtype=np.int8)
    first = np.zeros(L, dtype=np.int8)
    for p in range(P):
        for e in range(lc.shape[0]):
            first[lc[e]] = 0
        for e in range(lc.shape[0]):
            if fr[e]:
                s = X[p, hj[e]]
                f = first[lc[e]]
                if f == 0:
                    first[lc[e]] = s
                elif f != s:
                    out[p] = 0
                    break
    return out


@njit(cache=True)
def paired_integrand(x, n, L, ptr, lcs, hjs, widx, PL):
    """A_n(x, G) 2^{R_n(G)} for W number widx[t] paired with conditioned sample t mod S.

    PL rows are cluster labels of the two-ghost chain on [n, L) (ghost 0 holds
    the +1 prefix sites, ghost 1 the -1 sites).
    """
    S = PL.shape[0]
    V = L - n
    T = widx.shape[0]
    out = np.empty(T)
    nr = L + 2 + V + 2
    parent_r = np.arange(nr)
    parent_a = np.arange(nr)
    gp = L
    gm = L + 1
    for t in range(T):
        w = widx[t]
        row = PL[t % S]
        g0 = row[V]
        g1 = row[V + 1]
        lo_e = ptr[w]
        hi_e = ptr[w + 1]
        # reset touched nodes only
        for e in range(lo_e, hi_e):
            a = lcs[e]
            parent_r[a] = a
            parent_a[a] = a
        parent_r[gp] = gp
        parent_a[gp] = gp
        parent_a[gm] = gm
        for e in range(lo_e, hi_e):
            j = hjs[e]
            if j >= n:
                lab = row[j - n]
                node = L + 2 + lab
                parent_r[node] = node
                parent_a[node] = node
        s = 0
        for e in range(lo_e, hi_e):
            a = lcs[e]
            j = hjs[e]
            if j < n:
                nr_ = gp
                na_ = gp if x[j] > 0 else gm
            else:
                lab = row[j - n]
                if lab == g0:
                    nr_ = gp
                    na_ = gp
                elif lab == g1:
                    nr_ = gp
                    na_ = gm
                else:
                    nr_ = L + 2 + lab
                    na_ = L + 2 + lab
            if uf_union(parent_r, a, nr_):
                s += 1
            uf_union(parent_a, a, na_)
        R = (hi_e - lo_e) - s
        if uf_find(parent_a, gp) == uf_find(parent_a, gm):
            out[t] = 0.0
        else:
            out[t] = 2.0 ** R
    return out
