import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dysonfk.graphs import (A_n, FiniteGraph, R_limit, R_sequence, compatibility_B, clusters,
                            contract, corank_Rn, count_wF, cut, cut_identity_suite, frontier_and_N,
                            rank_corank, read_edge_csv, w_n, wired_cluster_count, write_edge_csv)


def G(lo, hi, edges, ghosts=0):
    return FiniteGraph(lo, hi, np.array(edges, dtype=np.int64).reshape(-1, 2), ghosts)


@st.composite
def graphs(draw, lo=-4, hi=4, max_edges=14):
    pairs = list(itertools.combinations(range(lo, hi), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), max_size=max_edges, unique=True))
    return G(lo, hi, chosen)


def nx_graph(g):
    X = nx.MultiGraph()
    X.add_nodes_from(range(g.lo, g.hi + g.n_ghosts))
    X.add_edges_from(map(tuple, g.edges))
    return X


def brute_Rn(g, n, c=0):
    """Corank of H on the quotient by G minus H components and the block [c, c+n)."""
    rest = nx.Graph()
    rest.add_nodes_from(range(g.lo, g.hi))
    H = []
    for a, b in g.edges:
        if a < c <= b:
            H.append((a, b))
        else:
            rest.add_edge(a, b)
    for v in range(c, min(c + n, g.hi) - 1):
        rest.add_edge(v, v + 1)
    comp = {v: k for k, cc in enumerate(nx.connected_components(rest)) for v in cc}
    Q = nx.MultiGraph()
    Q.add_nodes_from(set(comp.values()))
    Q.add_edges_from((comp[a], comp[b]) for a, b in H)
    rank = Q.number_of_nodes() - nx.number_connected_components(Q)
    return len(H) - rank


def test_cluster_examples():
    assert clusters(G(0, 5, [])).w == 5
    assert clusters(G(0, 5, [(0, 1), (1, 2), (2, 3), (3, 4)])).w == 1
    part = clusters(G(0, 5, [(0, 1), (3, 4)]))
    assert part.w == 3 and sorted(part.sizes().values()) == [1, 2, 2]
    assert part.members() == [[0, 1], [2], [3, 4]]


def test_graph_validation():
    with pytest.raises(ValueError):
        G(0, 3, [(1, 1)])
    with pytest.raises(ValueError):
        G(0, 3, [(0, 3)])
    with pytest.raises(ValueError):
        G(0, 3, [(0, 1), (1, 0)])
    assert G(0, 3, [(2, 0)]).edges.tolist() == [[0, 2]]


@given(graphs())
def test_clusters_match_networkx(g):
    X = nx_graph(g)
    assert clusters(g).w == nx.number_connected_components(X)
    lab = clusters(g).labels
    for comp in nx.connected_components(X):
        assert {int(lab[v - g.lo]) for v in comp} == {min(comp)}


def test_rank_corank_examples():
    tree = G(0, 5, [(0, 1), (1, 2), (1, 3), (3, 4)])
    assert rank_corank(tree) == (4, 0)
    cyc = G(0, 5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)])
    assert rank_corank(cyc)[1] == 1
    assert rank_corank(G(0, 5, []))[0] == 0


@given(graphs())
def test_rank_plus_corank(g):
    r, c = rank_corank(g)
    assert r + c == g.n_edges and r >= 0 and c >= 0
    X = nx.Graph(nx_graph(g))
    assert c == len(nx.cycle_basis(X))


def test_wired_cluster_count():
    g = G(0, 6, [(1, 2)])
    assert wired_cluster_count(g, (0, 6)) == clusters(g).w
    assert wired_cluster_count(G(0, 6, []), (1, 4)) == 3 + 1
    conn = G(0, 4, [(0, 1), (1, 2), (2, 3)])
    assert wired_cluster_count(conn, (1, 3)) == 1


def test_cut_examples():
    d = cut(G(-3, 3, [(0, 1), (1, 2)]), 0)
    assert d.H.n_edges == 0 and d.G_minus.n_edges == 0 and d.G_plus.n_edges == 2
    d = cut(G(-3, 3, [(-1, 0)]), 0)
    assert d.H.edge_set() == {(-1, 0)} and d.G_plus.n_edges == 0 and d.G_minus.n_edges == 0
    d = cut(G(-3, 3, [(-2, -1), (-1, 0), (0, 1)]), 0)
    assert (d.G_minus.n_edges, d.H.n_edges, d.G_plus.n_edges) == (1, 1, 1)


@given(graphs(), st.integers(-4, 4))
def test_cut_recombines(g, c):
    d = cut(g, c)
    assert d.recombine().edge_set() == g.edge_set()
    assert d.W.edge_set() | d.G_plus.edge_set() == g.edge_set()


def test_contract_examples():
    g = G(0, 4, [(0, 2), (1, 3)])
    q = contract(g, [])
    assert q.n_vertices == 4 and q.n_edges == 2 and q.n_loops == 0
    tri = G(0, 3, [(0, 1), (1, 2), (0, 2)])
    q = contract(tri, [[0, 1]])
    assert q.n_loops == 1 and q.n_edges == 3
    assert rank_corank(q) == (1, 2)
    with pytest.raises(ValueError):
        contract(tri, [[0, 1], [1, 2]])


@given(graphs(), st.data())
def test_contraction_properties(g, data):
    comps = clusters(g).members()
    S = data.draw(st.sampled_from(comps))
    assert contract(g, [S]).w == clusters(g).w
    T = data.draw(st.lists(st.integers(g.lo, g.hi - 1), min_size=1, unique=True))
    assert rank_corank(contract(g, [T]))[1] >= rank_corank(g)[1]


def test_Rn_examples():
    g = G(-8, 8, [(-1, 0), (-1, 5)])
    d = cut(g, 0)
    assert corank_Rn(d, 1) == 0
    assert corank_Rn(d, 6) == 1
    assert np.all(R_sequence(cut(G(-4, 4, [(0, 1), (-2, -1)]), 0), 4) == 0)
    # two H edges into one G_plus cluster from unlinked left vertices
    g = G(-4, 4, [(-2, 1), (-1, 3), (1, 3)])
    seq = R_sequence(cut(g, 0), 4)
    assert seq.tolist() == [brute_Rn(g, n) for n in range(5)]


@given(graphs())
def test_Rn_brute_force_and_monotone(g):
    d = cut(g, 0)
    seq = R_sequence(d, 4)
    assert seq.tolist() == [brute_Rn(g, n) for n in range(5)]
    assert np.all(np.diff(seq) >= 0)


def test_R_limit_and_frontier_examples():
    W = cut(G(-4, 8, [(-1, 0), (-2, 1)]), 0)
    assert R_limit(W) == 0 and frontier_and_N(W) == (frozenset(), 0)
    W = cut(G(-4, 8, [(-1, 0), (-1, 2), (-1, 5)]), 0)
    assert R_limit(W) == 2
    W = cut(G(-4, 8, [(-1, 0), (-1, 2), (-3, 4), (-3, 5)]), 0)
    assert R_limit(W) == 2
    W = cut(G(-4, 8, [(-2, -1), (-2, 3), (-1, 7)]), 0)
    assert frontier_and_N(W) == (frozenset({3, 7}), 8)


@given(graphs(max_edges=16))
def test_Rn_reaches_limit_on_W_graphs(g):
    W = g.subgraph(g.edges[:, 0] < 0)
    d = cut(W, 0)
    _, N = frontier_and_N(d)
    seq = R_sequence(d, 4)
    assert all(seq[n] == R_limit(d) for n in range(N, 5))


def test_compatibility_and_wF():
    assert compatibility_B([1, -1, 1], G(0, 3, []), [0, 1, 2])
    assert not compatibility_B([1, -1], G(0, 3, [(0, 1)]), [0, 1])
    assert compatibility_B([1, 1, 1], G(0, 3, [(0, 1), (1, 2)]), [0, 1, 2])
    assert count_wF(G(0, 4, []), [0, 2, 3]) == 3
    assert count_wF(G(0, 3, [(0, 1), (1, 2)]), [1, 2]) == 1
    assert count_wF(G(0, 3, [(0, 1)]), []) == 0
    assert w_n(G(0, 4, [(0, 3)]), 4) == 3


@given(graphs(), st.lists(st.sampled_from([-1, 1]), min_size=4, max_size=4))
def test_cut_identities(g, x):
    d = cut(g, 0)
    r0 = corank_Rn(d, 0)
    assert clusters(g).w == clusters(d.G_plus).w + clusters(d.G_minus).w - d.H.n_edges + r0
    for n in range(5):
        assert w_n(d.G_plus, n) - w_n(g, n) == corank_Rn(d, n) - r0
    for n in range(1, 5):
        F = range(n)
        xs = x[:n]
        assert compatibility_B(xs, g, F) == bool(A_n(xs, g, n) and compatibility_B(xs, d.G_plus, F))


def test_edge_csv_roundtrip(tmp_path):
    g = G(0, 4, [(0, 1), (2, 5)], ghosts=2)
    p = tmp_path / "g.csv"
    write_edge_csv(g, p)
    h = read_edge_csv(p)
    assert (h.lo, h.hi, h.n_ghosts) == (0, 4, 2) and h.edge_set() == g.edge_set()
    bad = tmp_path / "bad.csv"
    bad.write_text("0,1\n")
    with pytest.raises(ValueError):
        read_edge_csv(bad)


def test_cut_identity_suite_small():
    res = cut_identity_suite(2000, L=5, seed=3)
    assert set(res) == {"mat1", "wR", "Rn_monotone", "Rn_limit", "contraction_corank", "Bnfac"}
    assert all(v == 0 for v in res.values())
