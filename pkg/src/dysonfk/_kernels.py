"""Numba kernels shared by the graph, sampler and estimator modules.

All kernels work on local vertex indices 0..nv-1 and edge endpoint arrays.
Union-find roots are always the smallest index of the class so labels are
deterministic.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def uf_find(parent, v):
    root = v
    while parent[root] != root:
        root = parent[root]
    while parent[v] != root:
        nxt = parent[v]
        parent[v] = root
        v = nxt
    return root


@njit(cache=True)
def uf_union(parent, a, b):
    """Merge the classes of a and b; returns True if they were distinct."""
    ra = uf_find(parent, a)
    rb = uf_find(parent, b)
    if ra == rb:
        return False
    if ra < rb:
        parent[rb] = ra
    else:
        parent[ra] = rb
    return True


@njit(cache=True)
def cluster_labels(nv, ei, ej):
    """Label of each vertex = smallest vertex of its cluster."""
    parent = np.arange(nv)
    for e in range(ei.shape[0]):
        uf_union(parent, ei[e], ej[e])
    for v in range(nv):
        uf_find(parent, v)
    return parent


@njit(cache=True)
def count_clusters(nv, ei, ej):
    parent = np.arange(nv)
    w = nv
    for e in range(ei.shape[0]):
        if uf_union(parent, ei[e], ej[e]):
            w -= 1
    return w


@njit(cache=True)
def successful_unions(labels, ei, ej):
    """Number of merges when H-edges are added over pre-existing classes.

    ``labels`` maps each vertex to its class representative; the return value
    is the rank of the edge multiset on the quotient.
    """
    nv = labels.shape[0]
    parent = np.arange(nv)
    s = 0
    for e in range(ei.shape[0]):
        if uf_union(parent, labels[ei[e]], labels[ej[e]]):
            s += 1
    return s


@njit(cache=True)
def merge_block(labels, a, b):
    """Relabel so that every class meeting [a, b) becomes one class."""
    nv = labels.shape[0]
    out = labels.copy()
    if b <= a:
        return out
    hit = np.zeros(nv, dtype=np.bool_)
    rep = nv
    for v in range(a, b):
        hit[labels[v]] = True
        if labels[v] < rep:
            rep = labels[v]
    for v in range(nv):
        if hit[labels[v]]:
            out[v] = rep
    return out


@njit(cache=True)
def cluster_sizes(labels, n_real):
    """Size (counting real vertices only) of the cluster of each label."""
    nv = labels.shape[0]
    sizes = np.zeros(nv, dtype=np.int64)
    for v in range(n_real):
        sizes[labels[v]] += 1
    return sizes


@njit(cache=True)
def cut_stats(nv, ei, ej, cut, n_real):
    """Cut statistics of a graph whose vertices < cut form the left part.

    Returns (|H|, R0, R_limit, N) where N is measured relative to ``cut``.
    Ghost vertices (index >= n_real) count as right-hand vertices but never
    appear as H endpoints.
    """
    m = ei.shape[0]
    parent = np.arange(nv)
    nh = 0
    for e in range(m):
        a = ei[e]
        b = ej[e]
        left_a = a < cut
        left_b = b < cut
        if left_a != left_b and a < n_real and b < n_real:
            nh += 1
        else:
            uf_union(parent, a, b)
    for v in range(nv):
        uf_find(parent, v)
    hdeg = np.zeros(nv, dtype=np.int64)
    hp = np.arange(nv)
    s = 0
    for e in range(m):
        a = ei[e]
        b = ej[e]
        if (a < cut) != (b < cut) and a < n_real and b < n_real:
            left = a if a < cut else b
            hdeg[parent[left]] += 1
            if uf_union(hp, parent[a], parent[b]):
                s += 1
    r_limit = 0
    for v in range(nv):
        if hdeg[v] > 1:
            r_limit += hdeg[v] - 1
    nmax = 0
    for e in range(m):
        a = ei[e]
        b = ej[e]
        if (a < cut) != (b < cut) and a < n_real and b < n_real:
            left = a if a < cut else b
            right = b if a < cut else a
            if hdeg[parent[left]] >= 2 and right - cut + 1 > nmax:
                nmax = right - cut + 1
    return nh, nh - s, r_limit, nmax


@njit(cache=True)
def rc_log_weights(nv, ei, ej, logp, log1mp, logq):
    """log of q^w(G) prod p^G (1-p)^(1-G) for every subgraph mask of the slots."""
    m = ei.shape[0]
    out = np.empty(1 << m)
    parent = np.empty(nv, dtype=np.int64)
    for mask in range(1 << m):
        for v in range(nv):
            parent[v] = v
        w = nv
        s = 0.0
        for e in range(m):
            if (mask >> e) & 1:
                s += logp[e]
                if uf_union(parent, ei[e], ej[e]):
                    w -= 1
            else:
                s += log1mp[e]
        out[mask] = s + w * logq
    return out


@njit(cache=True)
def _labels_from(nv, ea, eb, use):
    parent = np.arange(nv)
    for e in range(ea.shape[0]):
        if use[e]:
            uf_union(parent, ea[e], eb[e])
    for v in range(nv):
        parent[v] = uf_find(parent, v)
    return parent


@njit(cache=True)
def _distinct(lab, a, b):
    nv = lab.shape[0]
    seen = np.zeros(nv, dtype=np.bool_)
    k = 0
    for v in range(a, b):
        if not seen[lab[v]]:
            seen[lab[v]] = True
            k += 1
    return k


@njit(cache=True)
def _compatible(lab, x, c, n):
    nv = lab.shape[0]
    first = np.zeros(nv, dtype=np.int8)
    for t in range(n):
        r = lab[c + t]
        if first[r] == 0:
            first[r] = x[t]
        elif first[r] != x[t]:
            return False
    return True


@njit(cache=True)
def cut_graph_violations(L, ea, eb, x, merge, w_only):
    """Violations of the cut identities for one graph on 2L vertices cut at L.

    Checks, in order: the cluster-count split, the w_n / R_n relation for
    n = 0..L, monotonicity of R_n, R_n = R_limit for n >= N (only when
    ``w_only``), non-decreasing corank under contraction of ``merge``, and
    B = A_n * B(G_plus) for n = 1..L.
    """
    nv = 2 * L
    m = ea.shape[0]
    out = np.zeros(6, dtype=np.int64)
    allu = np.ones(m, dtype=np.bool_)
    plus = np.zeros(m, dtype=np.bool_)
    minus = np.zeros(m, dtype=np.bool_)
    hmask = np.zeros(m, dtype=np.bool_)
    nh = 0
    for e in range(m):
        if ea[e] >= L:
            plus[e] = True
        elif eb[e] < L:
            minus[e] = True
        else:
            hmask[e] = True
            nh += 1
    rest = plus | minus
    wmask = minus | hmask
    full = _labels_from(nv, ea, eb, allu)
    lp = _labels_from(nv, ea, eb, plus)
    lr = _labels_from(nv, ea, eb, rest)
    w_full = _distinct(full, 0, nv)
    w_plus = _distinct(lp, L, nv)
    w_minus = _distinct(lr, 0, L)

    R = np.zeros(L + 1, dtype=np.int64)
    for n in range(L + 1):
        lab = merge_block(lr, L, L + n)
        parent = np.arange(nv)
        s = 0
        for e in range(m):
            if hmask[e] and uf_union(parent, lab[ea[e]], lab[eb[e]]):
                s += 1
        R[n] = nh - s
    if w_full != w_plus + w_minus - nh + R[0]:
        out[0] += 1
    for n in range(L + 1):
        if _distinct(lp, L, L + n) - _distinct(full, L, L + n) != R[n] - R[0]:
            out[1] += 1
        if n > 0 and R[n] < R[n - 1]:
            out[2] += 1

    if w_only:
        deg = np.zeros(nv, dtype=np.int64)
        for e in range(m):
            if hmask[e]:
                deg[lr[ea[e]]] += 1
        Rlim = 0
        for v in range(nv):
            if deg[v] > 1:
                Rlim += deg[v] - 1
        N = 0
        for e in range(m):
            if hmask[e] and deg[lr[ea[e]]] >= 2 and eb[e] - L + 1 > N:
                N = eb[e] - L + 1
        for n in range(N, L + 1):
            if R[n] != Rlim:
                out[3] += 1

    # corank = |E| - |V| + w before and after merging the marked vertices
    before = m - nv + w_full
    parent = full.copy()
    first = -1
    k = 0
    for v in range(nv):
        if merge[v]:
            k += 1
            if first < 0:
                first = v
            else:
                uf_union(parent, first, v)
    if k > 0:
        w_after = 0
        for v in range(nv):
            if uf_find(parent, v) == v:
                w_after += 1
        if m - (nv - k + 1) + w_after < before:
            out[4] += 1

    # W contracted along G_plus clusters: start from the G_plus labels
    quot = lp.copy()
    for e in range(m):
        if wmask[e]:
            uf_union(quot, lp[ea[e]], lp[eb[e]])
    for v in range(nv):
        quot[v] = uf_find(quot, lp[v])
    for n in range(1, L + 1):
        bp = _compatible(lp, x, L, n)
        a = True if not bp else _compatible(quot, x, L, n)
        if _compatible(full, x, L, n) != (a and bp):
            out[5] += 1
    return out


@njit(cache=True)
def cut_graph_batch(L, n_graphs, seed, max_density):
    """Random graphs on 2L vertices; every odd-numbered graph has no G_plus edges."""
    np.random.seed(seed)
    nv = 2 * L
    tot = np.zeros(6, dtype=np.int64)
    ea_buf = np.empty(nv * (nv - 1) // 2, dtype=np.int64)
    eb_buf = np.empty(nv * (nv - 1) // 2, dtype=np.int64)
    x = np.empty(L, dtype=np.int8)
    merge = np.zeros(nv, dtype=np.bool_)
    for g in range(n_graphs):
        w_only = g % 2 == 1
        pd = max_density * np.random.random()
        m = 0
        for a in range(nv):
            for b in range(a + 1, nv):
                if w_only and a >= L:
                    continue
                if np.random.random() < pd:
                    ea_buf[m] = a
                    eb_buf[m] = b
                    m += 1
        for t in range(L):
            x[t] = 1 if np.random.random() < 0.5 else -1
        pm = np.random.random() * 0.5
        for v in range(nv):
            merge[v] = np.random.random() < pm
        tot += cut_graph_violations(L, ea_buf[:m], eb_buf[:m], x, merge, w_only)
    return tot
