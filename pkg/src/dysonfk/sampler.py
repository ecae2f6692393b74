"""Bernoulli graphs, random-cluster chains, spin assignment and exact RC laws.

Edge probabilities follow the Ising pair weight exp(beta J x_i x_j):
p(ij) = 1 - exp(-2 beta J(|i-j|)), capped at 1 - 1e-15.  A wired boundary
is one ghost vertex joined to site i with the aggregated coupling of all
exterior sites, so the whole exterior acts as a single supervertex.

Randomness: chain c of a run with seed s draws its uniforms sequentially
from Philox seeded by SeedSequence([s, c]); spins use SeedSequence([s, c, 1]).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

from . import _kernels as K
from . import _mcmc
from ._laws import GRAPH, ExactLaw, normalise_log_weights
from .couplings import CouplingFamily, coupling_array, coupling_value, spin_word, tail_array
from .graphs import FiniteGraph

__all__ = [
    "P_CAP",
    "RCConfig",
    "SweepRecord",
    "SlotModel",
    "RCChain",
    "chain_seed",
    "edge_probability",
    "slot_model",
    "conditional_model",
    "bernoulli_graph",
    "rc_mcmc",
    "spin_assignment",
    "exact_rc",
]

P_CAP = 1.0 - 1e-15
FREE = "free"
WIRED = "wired"


def _p_of(J):
    """Open probability for an aggregated coupling (vectorised)."""
    return np.minimum(-np.expm1(-2.0 * np.asarray(J, dtype=float)), P_CAP)


def _p_free(p, q):
    p = np.asarray(p, dtype=float)
    return p / (p + q * (1.0 - p))


@dataclass(frozen=True)
class RCConfig:
    """Random-cluster run on the volume [lo, hi).

    ``exterior`` (wired only) selects which outside sites feed the boundary
    supervertex: "Z" for all of Z minus the volume, "N" for the sites >= hi
    only.  Sweeps are post-burn-in; every ``thinning``-th emits a record.
    """

    lo: int
    hi: int
    fam: CouplingFamily
    q: float = 2.0
    boundary: str = FREE
    exterior: str = "Z"
    sweeps: int = 1000
    burn_in: int = 100
    seed: int = 0
    thinning: int = 1
    origin: Optional[int] = None

    def __post_init__(self):
        if self.hi <= self.lo:
            raise ValueError("volume must be a nonempty interval [lo, hi)")
        if not self.q >= 1:
            raise ValueError("q must be >= 1")
        if self.boundary not in (FREE, WIRED):
            raise ValueError(f"boundary must be 'free' or 'wired', got {self.boundary!r}")
        if self.exterior not in ("Z", "N"):
            raise ValueError("exterior must be 'Z' or 'N'")
        if self.sweeps < 0 or self.burn_in < 0:
            raise ValueError("sweeps and burn_in must be nonnegative")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if self.origin is not None and not self.lo <= self.origin < self.hi:
            raise ValueError("origin must lie in the volume")

    @property
    def n_sites(self) -> int:
        return self.hi - self.lo

    @property
    def origin_site(self) -> int:
        if self.origin is not None:
            return self.origin
        return 0 if self.lo <= 0 < self.hi else self.lo

    def as_dict(self) -> dict:
        return {
            "lo": self.lo, "hi": self.hi, "family": self.fam.label(), "q": self.q,
            "boundary": self.boundary, "exterior": self.exterior, "sweeps": self.sweeps,
            "burn_in": self.burn_in, "seed": self.seed, "thinning": self.thinning,
            "origin": self.origin_site,
        }


@dataclass
class SweepRecord:
    chain: int
    sweep: int
    w: int
    largest: int
    origin_size: int
    n_edges: int
    h_size: int
    r0: int
    r_limit: int
    n_frontier: int
    spins: Optional[list] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "chain": self.chain, "sweep": self.sweep, "w": self.w, "largest": self.largest,
            "origin_size": self.origin_size, "n_edges": self.n_edges, "H": self.h_size,
            "R0": self.r0, "R_limit": self.r_limit, "N": self.n_frontier,
        }
        if self.spins is not None:
            d["spins"] = self.spins
        if self.extra:
            d["extra"] = self.extra
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "SweepRecord":
        d = json.loads(line)
        return cls(d["chain"], d["sweep"], d["w"], d["largest"], d["origin_size"], d["n_edges"],
                   d["H"], d["R0"], d["R_limit"], d["N"], d.get("spins"), d.get("extra", {}))


def chain_seed(seed: int, chain: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & (2**64 - 1), int(chain)])


def _spin_seed(ss: np.random.SeedSequence) -> np.random.SeedSequence:
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (1,))


def _generator(ss) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(ss))


def edge_probability(cfg: RCConfig, i: int, j: int) -> tuple:
    """(p, p_check) for the pair {i, j}, with p_check = p / (2 - p)."""
    if i == j:
        raise ValueError("edge endpoints must differ")
    for v in (i, j):
        if not cfg.lo <= v < cfg.hi:
            raise ValueError(f"vertex {v} outside the volume [{cfg.lo},{cfg.hi})")
    p = float(_p_of(coupling_value(cfg.fam, abs(i - j))))
    return p, p / (2.0 - p)


@dataclass(frozen=True, eq=False)
class SlotModel:
    """Slot probabilities on V = hi - lo sites plus ``ng`` ghost vertices.

    pk[k]: p for internal distance k; pg[g, j]: p for the slot {lo+j, ghost g}.
    ``forbid`` keeps distinct ghosts in distinct clusters.
    """

    lo: int
    n: int
    q: float
    pk: np.ndarray
    pg: np.ndarray
    forbid: bool = False

    @property
    def hi(self) -> int:
        return self.lo + self.n

    @property
    def n_ghosts(self) -> int:
        return int(self.pg.shape[0])

    @property
    def pck(self) -> np.ndarray:
        return _p_free(self.pk, self.q)

    @property
    def pgc(self) -> np.ndarray:
        return _p_free(self.pg, self.q)


def _boundary_coupling(cfg: RCConfig) -> np.ndarray:
    V = cfg.n_sites
    r = tail_array(cfg.fam, V)
    j = np.arange(V)
    right = r[V - 1 - j]  # sites >= hi
    if cfg.exterior == "N":
        return right
    return right + r[j]  # sites < lo


def slot_model(cfg: RCConfig) -> SlotModel:
    V = cfg.n_sites
    pk = _p_of(coupling_array(cfg.fam, V - 1))
    pk[0] = 0.0
    if cfg.boundary == WIRED:
        pg = _p_of(_boundary_coupling(cfg))[None, :]
    else:
        pg = np.zeros((0, V))
    return SlotModel(cfg.lo, V, float(cfg.q), pk, pg)


def conditional_model(fam: CouplingFamily, L: int, prefix, q: float = 2.0) -> SlotModel:
    """RC on [n, L) given spins ``prefix`` on [0, n), in two-ghost form.

    Ghost 0 stands for the +1 sites of the prefix and ghost 1 for the -1
    sites; they may never be joined.  Vertices are the sites n..L-1.
    """
    x = spin_word(prefix)
    n = x.size
    if not 0 < n < L:
        raise ValueError("prefix length must be in (0, L)")
    V = L - n
    Jv = coupling_array(fam, L - 1)
    pk = _p_of(Jv[:V])
    pk[0] = 0.0
    dist = (np.arange(n, L)[:, None] - np.arange(n)[None, :])  # V x n
    Jd = Jv[dist]
    jplus = Jd[:, x > 0].sum(axis=1)
    jminus = Jd[:, x < 0].sum(axis=1)
    pg = np.stack([_p_of(jplus), _p_of(jminus)])
    return SlotModel(n, V, float(q), pk, pg, forbid=True)


class RCChain:
    """Heat-bath random-cluster chain over a SlotModel, started from the empty graph."""

    def __init__(self, model: SlotModel, seed_seq: np.random.SeedSequence, cap: int = 8):
        self.model = model
        V = model.n
        nv = V + model.n_ghosts
        self._pk = np.ascontiguousarray(model.pk, dtype=np.float64)
        self._pck = np.ascontiguousarray(model.pck, dtype=np.float64)
        self._pg = np.ascontiguousarray(model.pg, dtype=np.float64).reshape(model.n_ghosts, V)
        self._pgc = np.ascontiguousarray(model.pgc, dtype=np.float64).reshape(model.n_ghosts, V)
        self._rng = _generator(seed_seq)
        self._block = 1 << 16
        self._pool = self._rng.random(self._block)
        self._cursor = 0
        self.present = np.zeros(0, dtype=np.int64)
        self._adj = np.zeros((nv, cap), dtype=np.int64)
        self._deg = np.zeros(nv, dtype=np.int64)
        self._mark = np.zeros(nv, dtype=np.int64)
        self._tag = 0
        self._qa = np.zeros(nv, dtype=np.int64)
        self._qb = np.zeros(nv, dtype=np.int64)
        self._ev = self._alloc_events(1024)
        self.sweeps_done = 0

    @staticmethod
    def _alloc_events(n):
        return (np.zeros(n, dtype=np.int64), np.zeros(n), np.zeros(n, dtype=np.bool_))

    def _refill(self):
        rest = self._pool[self._cursor:]
        self._pool = np.concatenate([rest, self._rng.random(self._block)])
        self._cursor = 0

    def sweep(self) -> None:
        m = self.model
        V, ng = m.n, m.n_ghosts
        while True:
            code, u, was = self._ev
            st, cur, nev = _mcmc.build_events(V, ng, self._pk, self._pg, self._pool, self._cursor,
                                              self.present, self.present.shape[0], code, u, was)
            if st == -1:
                self._block = max(self._block, 2 * (self._pool.shape[0] - self._cursor) + 1024)
                self._refill()
            elif st == -2:
                self._ev = self._alloc_events(2 * code.shape[0])
            else:
                break
        self._cursor = cur
        out = np.empty(nev, dtype=np.int64)
        start, nout = 0, 0
        while True:
            code, u, was = self._ev
            nxt, nout, self._tag = _mcmc.apply_events(
                V, ng, m.forbid, self._pk, self._pck, self._pg, self._pgc, code, u, was,
                start, nev, self._adj, self._deg, out, nout, self._mark, self._tag, self._qa, self._qb)
            if nxt == nev:
                break
            grown = np.zeros((self._adj.shape[0], 2 * self._adj.shape[1]), dtype=np.int64)
            grown[:, : self._adj.shape[1]] = self._adj
            self._adj = grown
            start = nxt
        self.present = out[:nout]
        self.sweeps_done += 1

    def edges(self) -> np.ndarray:
        """Present edges as site positions (ghost g at hi + g)."""
        ei, ej = _mcmc.codes_to_edges(self.present, self.model.n)
        return np.stack([ei, ej], axis=1) + self.model.lo

    def graph(self) -> FiniteGraph:
        return FiniteGraph(self.model.lo, self.model.hi, self.edges(), self.model.n_ghosts)

    def local_labels(self) -> np.ndarray:
        ei, ej = _mcmc.codes_to_edges(self.present, self.model.n)
        return K.cluster_labels(self.model.n + self.model.n_ghosts, ei, ej)

    def stats(self, origin_local: int, cut_local: int) -> tuple:
        return _mcmc.sweep_stats(self.present, self.model.n, self.model.n_ghosts,
                                 origin_local, cut_local)


def bernoulli_graph(cfg: RCConfig, rng: np.random.Generator) -> FiniteGraph:
    """Independent edges with probability p.

    Enumeration order: distances k = 1..V-1 (one binomial count and one
    uniform choice of positions per k), then boundary slots in site order.
    """
    m = slot_model(cfg)
    V = m.n
    rows = []
    for k in range(1, V):
        p = m.pk[k]
        if p <= 0:
            continue
        span = V - k
        cnt = rng.binomial(span, p)
        if cnt:
            i = np.sort(rng.choice(span, size=cnt, replace=False))
            rows.append(np.stack([i, i + k], axis=1))
    for g in range(m.n_ghosts):
        on = np.flatnonzero(rng.random(V) < m.pg[g])
        rows.append(np.stack([on, np.full(on.size, V + g)], axis=1))
    edges = np.concatenate(rows) if rows else np.zeros((0, 2), dtype=np.int64)
    return FiniteGraph(cfg.lo, cfg.hi, edges.astype(np.int64) + cfg.lo, m.n_ghosts)


def rc_mcmc(cfg: RCConfig, rng: Optional[np.random.SeedSequence] = None,
            observers: Sequence[Callable] = (), chain: int = 0,
            record_spins: bool = False, boundary_spin: int = 1) -> Iterator[SweepRecord]:
    """Stream of SweepRecords from the heat-bath chain.

    ``rng`` defaults to ``chain_seed(cfg.seed, chain)``.  Each observer is
    called as ``obs(record, graph)`` and may return a dict stored in
    ``record.extra``.  Cut statistics are taken at site 0 when the volume
    straddles it.
    """
    ss = rng if rng is not None else chain_seed(cfg.seed, chain)
    ch = RCChain(slot_model(cfg), ss)
    spin_rng = _generator(_spin_seed(ss)) if record_spins else None
    origin_local = cfg.origin_site - cfg.lo
    cut_local = -cfg.lo if cfg.lo < 0 < cfg.hi else 0
    for _ in range(cfg.burn_in):
        ch.sweep()
    for s in range(cfg.sweeps):
        ch.sweep()
        if s % cfg.thinning:
            continue
        st = ch.stats(origin_local, cut_local)
        rec = SweepRecord(chain, s, *(int(v) for v in st))
        G = ch.graph() if (observers or record_spins) else None
        if record_spins:
            rec.spins = spin_assignment(G, spin_rng, boundary_spin if G.n_ghosts else None).tolist()
        for obs in observers:
            extra = obs(rec, G)
            if extra:
                rec.extra.update(extra)
        yield rec


def spin_assignment(G: FiniteGraph, rng: np.random.Generator, boundary_spin=None) -> np.ndarray:
    """Uniform independent spin per cluster, copied to its members.

    With ghosts present, ``boundary_spin`` (a spin, or one per ghost) fixes
    the spin of every cluster containing a ghost.
    """
    labels = G._labels
    nv = labels.shape[0]
    V = G.hi - G.lo
    draw = np.where(rng.random(nv) < 0.5, -1, 1).astype(np.int8)
    if G.n_ghosts and boundary_spin is not None:
        bs = np.broadcast_to(np.asarray(boundary_spin, dtype=np.int8), (G.n_ghosts,))
        for g in range(G.n_ghosts):
            draw[labels[V + g]] = bs[g]
    return draw[labels[:V]]


def exact_rc(lo: int, hi: int, fam: CouplingFamily, q: float = 2.0, boundary: str = FREE,
             exterior: str = "Z", max_slots: int = 24) -> ExactLaw:
    """Full RC_q law over subgraphs of the slots with p > 0.

    Slots are ordered as in the chain: internal slots by (distance, left
    end), then boundary slots by site.
    """
    cfg = RCConfig(lo, hi, fam, q=q, boundary=boundary, exterior=exterior, sweeps=0, burn_in=0)
    m = slot_model(cfg)
    V = m.n
    rows, probs = [], []
    for k in range(1, V):
        if m.pk[k] > 0:
            for i in range(V - k):
                rows.append((i, i + k))
                probs.append(m.pk[k])
    for g in range(m.n_ghosts):
        for j in range(V):
            if m.pg[g, j] > 0:
                rows.append((j, V + g))
                probs.append(m.pg[g, j])
    if len(rows) > max_slots:
        raise ValueError(f"{len(rows)} candidate edges exceed the enumeration limit {max_slots}")
    slots = np.array(rows, dtype=np.int64).reshape(-1, 2)
    p = np.array(probs, dtype=float)
    logw = K.rc_log_weights(V + m.n_ghosts, slots[:, 0].copy(), slots[:, 1].copy(),
                            np.log(p), np.log1p(-p), math.log(q))
    P, logz = normalise_log_weights(logw)
    return ExactLaw(GRAPH, lo, hi, P, logz, slots + lo, m.n_ghosts)
