"""Finite spanning subgraphs of the complete graph on an integer interval.

Vertices are the half-open interval ``[lo, hi)``; a graph may additionally
carry ``n_ghosts`` boundary supervertices, numbered ``hi, hi+1, ...``, which
is how wired boundaries are represented.  Edges are stored as a sorted
``(m, 2)`` int64 array of positions with ``i < j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from . import _kernels as K

__all__ = [
    "FiniteGraph",
    "ClusterPartition",
    "CutDecomposition",
    "ContractedGraph",
    "clusters",
    "rank_corank",
    "wired_cluster_count",
    "cut",
    "contract",
    "corank_Rn",
    "R_sequence",
    "R_limit",
    "frontier_and_N",
    "compatibility_B",
    "count_wF",
    "w_n",
    "A_n",
    "read_edge_csv",
    "write_edge_csv",
    "cut_identity_suite",
]


@dataclass(frozen=True, eq=False)
class FiniteGraph:
    lo: int
    hi: int
    edges: np.ndarray
    n_ghosts: int = 0

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError("empty or reversed vertex interval")
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            e = np.sort(e, axis=1)
            if np.any(e[:, 0] == e[:, 1]):
                raise ValueError("loops are not allowed")
            top = self.hi + self.n_ghosts
            if e.min() < self.lo or e.max() >= top:
                raise ValueError("edge endpoint outside the vertex interval")
            e = e[np.lexsort((e[:, 1], e[:, 0]))]
            if np.any(np.all(e[1:] == e[:-1], axis=1)):
                raise ValueError("multi-edges are not allowed")
        object.__setattr__(self, "edges", e)

    @classmethod
    def empty(cls, lo: int, hi: int, n_ghosts: int = 0) -> "FiniteGraph":
        return cls(lo, hi, np.zeros((0, 2), dtype=np.int64), n_ghosts)

    @property
    def n_vertices(self) -> int:
        return self.hi - self.lo + self.n_ghosts

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def _local(self):
        loc = self.edges - self.lo
        return np.ascontiguousarray(loc[:, 0]), np.ascontiguousarray(loc[:, 1])

    @cached_property
    def _labels(self) -> np.ndarray:
        ei, ej = self._local
        return K.cluster_labels(self.n_vertices, ei, ej)

    def edge_set(self) -> set:
        return {(int(a), int(b)) for a, b in self.edges}

    def subgraph(self, mask) -> "FiniteGraph":
        return FiniteGraph(self.lo, self.hi, self.edges[np.asarray(mask, dtype=bool)], self.n_ghosts)

    def union(self, other: "FiniteGraph") -> "FiniteGraph":
        lo = min(self.lo, other.lo)
        hi = max(self.hi, other.hi)
        e = np.unique(np.vstack([self.edges, other.edges]), axis=0)
        return FiniteGraph(lo, hi, e)

    def __repr__(self):
        return f"FiniteGraph([{self.lo},{self.hi}), {self.n_edges} edges, ghosts={self.n_ghosts})"


@dataclass(frozen=True)
class ClusterPartition:
    lo: int
    labels: np.ndarray   # representative (smallest position) of each vertex's cluster
    w: int

    def sizes(self) -> dict:
        reps, counts = np.unique(self.labels, return_counts=True)
        return {int(r): int(c) for r, c in zip(reps, counts)}

    def cluster_of(self, v: int) -> int:
        return int(self.labels[v - self.lo])

    def members(self) -> list:
        out = {}
        for i, r in enumerate(self.labels):
            out.setdefault(int(r), []).append(self.lo + i)
        return [out[r] for r in sorted(out)]


def clusters(G: FiniteGraph) -> ClusterPartition:
    """Connected components via union-find; ids are smallest member positions."""
    lab = G._labels
    return ClusterPartition(G.lo, lab + G.lo, int(np.unique(lab).size))


@dataclass(frozen=True, eq=False)
class ContractedGraph:
    """Quotient of a graph by a vertex partition; edges kept as a multiset."""

    classes: tuple          # tuple of tuples of original positions, ordered by min
    edges: np.ndarray       # (m, 2) class indices, loops and repeats kept

    @property
    def n_vertices(self) -> int:
        return len(self.classes)

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def n_loops(self) -> int:
        return int(np.sum(self.edges[:, 0] == self.edges[:, 1]))

    @property
    def w(self) -> int:
        return int(K.count_clusters(self.n_vertices, np.ascontiguousarray(self.edges[:, 0]),
                                    np.ascontiguousarray(self.edges[:, 1])))


def rank_corank(G: Union[FiniteGraph, ContractedGraph]) -> tuple:
    """(|V| - w, |E| - |V| + w)."""
    if isinstance(G, ContractedGraph):
        w = G.w
    else:
        w = clusters(G).w
    rank = G.n_vertices - w
    return rank, G.n_edges - rank


def wired_cluster_count(G: FiniteGraph, Lambda: Sequence[int]) -> int:
    """Cluster count after merging every vertex outside ``[a, b)`` into one."""
    a, b = int(Lambda[0]), int(Lambda[1])
    if a < G.lo or b > G.hi or b < a:
        raise ValueError("Lambda must be a subinterval of the vertex interval")
    outside = [v for v in range(G.lo, G.hi + G.n_ghosts) if not a <= v < b]
    if len(outside) <= 1:
        return clusters(G).w
    return contract(G, [outside]).w


def contract(G: FiniteGraph, merge_sets: Iterable[Iterable[int]]) -> ContractedGraph:
    n = G.n_vertices
    cls = np.arange(n)
    seen = np.zeros(n, dtype=bool)
    for S in merge_sets:
        S = [int(v) - G.lo for v in S]
        if not S:
            continue
        if min(S) < 0 or max(S) >= n:
            raise ValueError("merge set outside the vertex interval")
        if np.any(seen[S]):
            raise ValueError("merge sets must be disjoint")
        seen[S] = True
        cls[S] = min(S)
    reps = np.unique(cls)
    index = np.full(n, -1)
    index[reps] = np.arange(reps.size)
    classes = [[] for _ in range(reps.size)]
    for v in range(n):
        classes[index[cls[v]]].append(G.lo + v)
    ei, ej = G._local
    q = np.stack([index[cls[ei]], index[cls[ej]]], axis=1) if ei.size else np.zeros((0, 2), dtype=np.int64)
    q = np.sort(q, axis=1).astype(np.int64)
    return ContractedGraph(tuple(tuple(c) for c in classes), q)


@dataclass(frozen=True, eq=False)
class CutDecomposition:
    """G = G_plus + H + G_minus for the bipartition at ``cut_point``."""

    G_plus: FiniteGraph      # on [cut_point, hi)
    H: FiniteGraph           # on [lo, hi), edges i < cut_point <= j
    G_minus: FiniteGraph     # on [lo, cut_point)
    cut_point: int = 0

    @property
    def lo(self) -> int:
        return self.H.lo

    @property
    def hi(self) -> int:
        return self.H.hi

    @property
    def W(self) -> FiniteGraph:
        return FiniteGraph(self.lo, self.hi, np.vstack([self.G_minus.edges, self.H.edges]))

    def recombine(self) -> FiniteGraph:
        return FiniteGraph(self.lo, self.hi,
                           np.vstack([self.G_minus.edges, self.H.edges, self.G_plus.edges]))

    @cached_property
    def _rest_labels(self) -> np.ndarray:
        # clusters of G \ H on the full interval, local indices
        rest = np.vstack([self.G_minus.edges, self.G_plus.edges]) - self.lo
        return K.cluster_labels(self.hi - self.lo, np.ascontiguousarray(rest[:, 0]),
                                np.ascontiguousarray(rest[:, 1]))

    @cached_property
    def _h_local(self):
        h = self.H.edges - self.lo
        return np.ascontiguousarray(h[:, 0]), np.ascontiguousarray(h[:, 1])


def cut(G: FiniteGraph, cut_point: int = 0) -> CutDecomposition:
    if G.n_ghosts:
        raise ValueError("cut decomposition is defined for graphs without ghost vertices")
    c = int(cut_point)
    if not G.lo <= c <= G.hi:
        raise ValueError("cut point outside the vertex interval")
    e = G.edges
    left = e < c
    minus = left[:, 0] & left[:, 1]
    plus = ~left[:, 0] & ~left[:, 1]
    cross = ~(minus | plus)
    return CutDecomposition(
        G_plus=FiniteGraph(c, G.hi, e[plus]),
        H=FiniteGraph(G.lo, G.hi, e[cross]),
        G_minus=FiniteGraph(G.lo, c, e[minus]),
        cut_point=c,
    )


def corank_Rn(decomp: CutDecomposition, n: int) -> int:
    """Corank of H after contracting [0, n) and every path of G \\ H."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    c = decomp.cut_point - decomp.lo
    top = min(c + n, decomp.hi - decomp.lo)
    lab = K.merge_block(decomp._rest_labels, c, top)
    hi_, hj = decomp._h_local
    return int(hi_.size - K.successful_unions(lab, hi_, hj))


def R_sequence(decomp: CutDecomposition, n_max: int) -> np.ndarray:
    """R_n for n = 0..n_max."""
    return np.array([corank_Rn(decomp, n) for n in range(n_max + 1)], dtype=np.int64)


def _w_parts(W):
    if isinstance(W, CutDecomposition):
        return W.G_minus, W.H, W.cut_point
    G_minus, H = W
    return G_minus, H, G_minus.hi


def _minus_degrees(W):
    G_minus, H, c = _w_parts(W)
    part = clusters(G_minus)
    left = H.edges[:, 0]
    reps = part.labels[left - G_minus.lo] if left.size else np.zeros(0, dtype=np.int64)
    return part, reps, H


def R_limit(W) -> int:
    """sum over G_minus clusters of (H-degree - 1)_+."""
    _, reps, _ = _minus_degrees(W)
    if reps.size == 0:
        return 0
    _, deg = np.unique(reps, return_counts=True)
    return int(np.sum(np.maximum(deg - 1, 0)))


def frontier_and_N(W) -> tuple:
    """(F_R, N): right endpoints joined through a G_minus cluster of H-degree >= 2."""
    _, reps, H = _minus_degrees(W)
    c = _w_parts(W)[2]
    if reps.size == 0:
        return frozenset(), 0
    u, deg = np.unique(reps, return_counts=True)
    busy = set(u[deg >= 2].tolist())
    F = frozenset(int(j) for r, j in zip(reps, H.edges[:, 1]) if int(r) in busy)
    N = (max(F) - c + 1) if F else 0
    return F, N


def _spins_on(x, F) -> dict:
    F = [int(v) for v in F]
    if isinstance(x, Mapping):
        return {v: int(x[v]) for v in F}
    x = list(x)
    if len(x) != len(F):
        raise ValueError("spin word must be indexed by F")
    return dict(zip(F, (int(s) for s in x)))


def compatibility_B(x, G: FiniteGraph, F: Iterable[int]) -> bool:
    """True iff no cluster of G contains two F-vertices of opposite spin."""
    spins = _spins_on(x, F)
    lab = G._labels
    seen = {}
    for v, s in spins.items():
        r = int(lab[v - G.lo])
        if seen.setdefault(r, s) != s:
            return False
    return True


def count_wF(G: FiniteGraph, F: Iterable[int]) -> int:
    """Number of clusters of G meeting F."""
    F = np.fromiter((int(v) for v in F), dtype=np.int64)
    if F.size == 0:
        return 0
    return int(np.unique(G._labels[F - G.lo]).size)


def w_n(G: FiniteGraph, n: int, start: int = 0) -> int:
    """Clusters of G meeting [start, start + n)."""
    top = min(start + n, G.hi)
    return count_wF(G, range(max(start, G.lo), top))


def A_n(x, G: FiniteGraph, n: int, cut_point: int = 0) -> int:
    """Compatibility of x on the merged block C~_n through W, given G_plus.

    Equals 1 when G_plus is itself incompatible with x on [0, n).  Otherwise
    every G_plus-cluster meeting [0, n) carries a definite spin; W is
    contracted along the G_plus-clusters and those spins are tested for
    compatibility on the quotient.
    """
    d = cut(G, cut_point)
    F = list(range(cut_point, cut_point + n))
    spins = _spins_on(x, F)
    if not compatibility_B(spins, d.G_plus, F):
        return 1
    plus_lab = d.G_plus._labels + cut_point
    cl_spin = {}
    for v, s in spins.items():
        cl_spin[int(plus_lab[v - cut_point])] = s
    groups = {}
    for v in range(cut_point, G.hi):
        groups.setdefault(int(plus_lab[v - cut_point]), []).append(v)
    Q = contract(d.W, [g for g in groups.values() if len(g) > 1])
    where = {v: i for i, cls in enumerate(Q.classes) for v in cls}
    lab = K.cluster_labels(Q.n_vertices, np.ascontiguousarray(Q.edges[:, 0]),
                           np.ascontiguousarray(Q.edges[:, 1]))
    seen = {}
    for rep, s in cl_spin.items():
        r = int(lab[where[rep]])
        if seen.setdefault(r, s) != s:
            return 0
    return 1


def write_edge_csv(G: FiniteGraph, path) -> None:
    with open(path, "w") as fh:
        head = f"# vertices {G.lo} {G.hi}"
        if G.n_ghosts:
            head += f" ghosts {G.n_ghosts}"
        fh.write(head + "\n")
        for a, b in G.edges:
            fh.write(f"{a},{b}\n")


def read_edge_csv(path) -> FiniteGraph:
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) < 4 or head[:2] != ["#", "vertices"]:
            raise ValueError(f"{path}: missing '# vertices lo hi' header")
        lo, hi = int(head[2]), int(head[3])
        ghosts = int(head[5]) if len(head) >= 6 and head[4] == "ghosts" else 0
        rows = [tuple(int(t) for t in line.split(",")) for line in fh if line.strip()]
    return FiniteGraph(lo, hi, np.array(rows, dtype=np.int64).reshape(-1, 2), ghosts)


CUT_CHECKS = ("mat1", "wR", "Rn_monotone", "Rn_limit", "contraction_corank", "Bnfac")


def cut_identity_suite(n_graphs: int, L: int = 8, seed: int = 0, max_density: float = 0.4) -> dict:
    """Violation counts of the cut identities over random graphs on [-L, L)."""
    counts = K.cut_graph_batch(int(L), int(n_graphs), int(seed), float(max_density))
    return dict(zip(CUT_CHECKS, (int(c) for c in counts)))
