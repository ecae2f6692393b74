"""Single-edge heat-bath sweep for long-range random-cluster chains.

Slot encoding (sweep order): an internal slot {i, i+k} is ``k*V + i`` for
k = 1..V-1, i = 0..V-k-1; a ghost slot {j, V+g} is ``V*V + g*V + j``.

A sweep resamples every slot in increasing code order.  Each slot gets one
uniform U: it is present if U < p_conn when its endpoints are connected in
G minus the slot, if U < p_free when they are not, and never if that would
join two distinct ghosts while ``forbid`` is set.  Since p_free <= p_conn,
slots with U >= p_conn are absent without any query, so only slots with
U < p_conn ("candidates") and currently present slots generate events.
Candidates are found by geometric skipping per distance k.
"""

import math

import numpy as np
from numba import njit

from ._kernels import cluster_labels, cluster_sizes, cut_stats

INF = np.inf


@njit(cache=True)
def build_events(V, ng, pk, pg, pool, cursor, present, npres, ev_code, ev_u, ev_was):
    """Merge this sweep's candidates with the present slots.

    Returns (status, cursor, n_events); status -1 means the uniform pool ran
    out and -2 means the event buffers are too small.  No state is touched
    on failure, so the call can be retried after refilling.
    """
    npool = pool.shape[0]
    cap = ev_code.shape[0]
    nev = 0
    ptr = 0
    VV = V * V
    for k in range(1, V):
        p = pk[k]
        if p <= 0.0:
            continue
        lp = math.log1p(-p)
        span = V - k
        i = -1
        while True:
            if cursor >= npool:
                return -1, cursor, 0
            u = pool[cursor]
            cursor += 1
            gap = math.log1p(-u) / lp
            if i + 1 + gap >= span:
                break
            i += 1 + int(gap)
            if cursor >= npool:
                return -1, cursor, 0
            uu = pool[cursor] * p
            cursor += 1
            code = k * V + i
            while ptr < npres and present[ptr] < code:
                if nev >= cap:
                    return -2, cursor, 0
                ev_code[nev] = present[ptr]
                ev_u[nev] = INF
                ev_was[nev] = True
                nev += 1
                ptr += 1
            if nev >= cap:
                return -2, cursor, 0
            ev_code[nev] = code
            ev_u[nev] = uu
            if ptr < npres and present[ptr] == code:
                ev_was[nev] = True
                ptr += 1
            else:
                ev_was[nev] = False
            nev += 1
    for g in range(ng):
        for j in range(V):
            p = pg[g, j]
            if p <= 0.0:
                continue
            if cursor >= npool:
                return -1, cursor, 0
            u = pool[cursor]
            cursor += 1
            if u >= p:
                continue
            code = VV + g * V + j
            while ptr < npres and present[ptr] < code:
                if nev >= cap:
                    return -2, cursor, 0
                ev_code[nev] = present[ptr]
                ev_u[nev] = INF
                ev_was[nev] = True
                nev += 1
                ptr += 1
            if nev >= cap:
                return -2, cursor, 0
            ev_code[nev] = code
            ev_u[nev] = u
            if ptr < npres and present[ptr] == code:
                ev_was[nev] = True
                ptr += 1
            else:
                ev_was[nev] = False
            nev += 1
    while ptr < npres:
        if nev >= cap:
            return -2, cursor, 0
        ev_code[nev] = present[ptr]
        ev_u[nev] = INF
        ev_was[nev] = True
        nev += 1
        ptr += 1
    return 0, cursor, nev


@njit(cache=True)
def _decode(code, V):
    VV = V * V
    if code < VV:
        k = code // V
        i = code - k * V
        return i, i + k, k, -1
    r = code - VV
    g = r // V
    j = r - g * V
    return j, V + g, 0, g


@njit(cache=True)
def _add(adj, deg, a, b):
    adj[a, deg[a]] = b
    deg[a] += 1
    adj[b, deg[b]] = a
    deg[b] += 1


@njit(cache=True)
def _drop(adj, deg, a, b):
    d = deg[a]
    for t in range(d):
        if adj[a, t] == b:
            adj[a, t] = adj[a, d - 1]
            deg[a] = d - 1
            break
    d = deg[b]
    for t in range(d):
        if adj[b, t] == a:
            adj[b, t] = adj[b, d - 1]
            deg[b] = d - 1
            break


@njit(cache=True)
def _probe(adj, deg, a, b, mark, tag, qa, qb):
    """Interleaved BFS from a and b.

    Returns (connected, exhausted_side, size_of_exhausted_queue); when not
    connected the exhausted side's whole cluster is in its queue.
    """
    qa[0] = a
    qb[0] = b
    ha = 0
    ta = 1
    hb = 0
    tb = 1
    mark[a] = tag
    mark[b] = tag + 1
    while True:
        if ha == ta:
            return False, 0, ta
        v = qa[ha]
        ha += 1
        for t in range(deg[v]):
            nb = adj[v, t]
            m = mark[nb]
            if m == tag + 1:
                return True, -1, 0
            if m != tag:
                mark[nb] = tag
                qa[ta] = nb
                ta += 1
        if hb == tb:
            return False, 1, tb
        v = qb[hb]
        hb += 1
        for t in range(deg[v]):
            nb = adj[v, t]
            m = mark[nb]
            if m == tag:
                return True, -1, 0
            if m != tag + 1:
                mark[nb] = tag + 1
                qb[tb] = nb
                tb += 1


@njit(cache=True)
def apply_events(V, ng, forbid, pk, pck, pg, pgc, ev_code, ev_u, ev_was, start, nev,
                 adj, deg, out, nout, mark, tag, qa, qb):
    """Resample the event slots in order.

    Returns (next_event, nout, tag); next_event < nev signals that the
    adjacency capacity must grow before resuming at that event.
    """
    cap = adj.shape[1]
    for e in range(start, nev):
        code = ev_code[e]
        a, b, k, g = _decode(code, V)
        was = ev_was[e]
        if not was and (deg[a] >= cap or deg[b] >= cap):
            return e, nout, tag
        if was:
            _drop(adj, deg, a, b)
        u = ev_u[e]
        if g < 0:
            p_conn = pk[k]
            p_free = pck[k]
        else:
            p_conn = pg[g, a]
            p_free = pgc[g, a]
        keep = False
        if u < p_conn:
            if u < p_free and not forbid:
                keep = True
            else:
                tag += 2
                conn, side, size = _probe(adj, deg, a, b, mark, tag, qa, qb)
                if conn:
                    keep = True
                elif u < p_free:
                    # not connected, forbid set: refuse to join two ghosts
                    q = qa if side == 0 else qb
                    own = -1
                    for t in range(size):
                        if q[t] >= V:
                            own = q[t]
                            break
                    if own < 0:
                        keep = True
                    else:
                        other_end = b if side == 0 else a
                        keep = True
                        for h in range(V, V + ng):
                            if h != own:
                                tag += 2
                                c2, s2, z2 = _probe(adj, deg, other_end, h, mark, tag, qa, qb)
                                if c2:
                                    keep = False
        if keep:
            _add(adj, deg, a, b)
            out[nout] = code
            nout += 1
    return nev, nout, tag


@njit(cache=True)
def codes_to_edges(codes, V):
    n = codes.shape[0]
    ei = np.empty(n, dtype=np.int64)
    ej = np.empty(n, dtype=np.int64)
    for t in range(n):
        a, b, k, g = _decode(codes[t], V)
        ei[t] = a
        ej[t] = b
    return ei, ej


@njit(cache=True)
def sweep_stats(codes, V, ng, origin, cut):
    """(w, largest, origin_size, n_edges, |H|, R0, R_limit, N) of the current graph."""
    nv = V + ng
    ei, ej = codes_to_edges(codes, V)
    labels = cluster_labels(nv, ei, ej)
    sizes = cluster_sizes(labels, V)
    w = 0
    for v in range(nv):
        if labels[v] == v:
            w += 1
    largest = 0
    for v in range(nv):
        if sizes[v] > largest:
            largest = sizes[v]
    osz = sizes[labels[origin]] if 0 <= origin < V else 0
    nh = 0
    r0 = 0
    rl = 0
    nf = 0
    if cut > 0:
        nh, r0, rl, nf = cut_stats(nv, ei, ej, cut, V)
    return w, largest, osz, ei.shape[0], nh, r0, rl, nf
