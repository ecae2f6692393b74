"""Dense probability tables over small finite supports."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import FiniteGraph

SPIN = "spin"
GRAPH = "graph"
JOINT = "joint"


def normalise_log_weights(logw: np.ndarray):
    """Probabilities and log normaliser from log weights (-inf allowed)."""
    top = float(np.max(logw))
    if not math.isfinite(top):
        raise ValueError("all weights vanish")
    rel = np.exp(logw - top)
    z = math.fsum(rel)
    return rel / z, top + math.log(z)


@dataclass(frozen=True, eq=False)
class ExactLaw:
    """Exact law with atoms encoded as integers.

    spin atoms: bit i set iff vertex lo+i carries +1.
    graph atoms: bit e set iff slot e (row of ``slots``) is present.
    joint atoms: graph_code * 2**n_sites + spin_code.
    """

    kind: str
    lo: int
    hi: int
    probs: np.ndarray
    log_normaliser: float
    slots: np.ndarray = None
    n_ghosts: int = 0

    @property
    def n_sites(self) -> int:
        return self.hi - self.lo

    @property
    def n_slots(self) -> int:
        return 0 if self.slots is None else int(self.slots.shape[0])

    @property
    def n_atoms(self) -> int:
        return int(self.probs.shape[0])

    def total(self) -> float:
        return math.fsum(self.probs)

    def word(self, code: int) -> np.ndarray:
        if self.kind == JOINT:
            code = int(code) & ((1 << self.n_sites) - 1)
        bits = (int(code) >> np.arange(self.n_sites)) & 1
        return (2 * bits - 1).astype(np.int8)

    def graph(self, code: int) -> FiniteGraph:
        if self.kind == SPIN:
            raise ValueError("spin law has no graph atoms")
        if self.kind == JOINT:
            code = int(code) >> self.n_sites
        mask = ((int(code) >> np.arange(self.n_slots)) & 1).astype(bool)
        return FiniteGraph(self.lo, self.hi, self.slots[mask], self.n_ghosts)

    def spin_marginal(self) -> np.ndarray:
        if self.kind == SPIN:
            return self.probs
        if self.kind != JOINT:
            raise ValueError("graph law has no spin marginal")
        return self.probs.reshape(-1, 1 << self.n_sites).sum(axis=0)

    def graph_marginal(self) -> np.ndarray:
        if self.kind == GRAPH:
            return self.probs
        if self.kind != JOINT:
            raise ValueError("spin law has no graph marginal")
        return self.probs.reshape(-1, 1 << self.n_sites).sum(axis=1)

    def edge_marginals(self) -> np.ndarray:
        """P(slot e present) for each slot."""
        pg = self.graph_marginal()
        codes = np.arange(pg.shape[0])
        return np.array([math.fsum(pg[(codes >> e) & 1 == 1]) for e in range(self.n_slots)])

    def cylinder(self, F, xF) -> float:
        """P(x_i = xF_i for i in F) under the spin (marginal) law."""
        ps = self.spin_marginal()
        codes = np.arange(ps.shape[0])
        keep = np.ones(ps.shape[0], dtype=bool)
        for i, s in zip(F, xF):
            bit = (codes >> (int(i) - self.lo)) & 1
            keep &= bit == (1 if s > 0 else 0)
        return math.fsum(ps[keep])

    def expect(self, f) -> float:
        """E[f(atom)] where f receives a word, a graph or a (word, graph) pair."""
        terms = []
        for code in np.flatnonzero(self.probs):
            if self.kind == SPIN:
                arg = self.word(code)
            elif self.kind == GRAPH:
                arg = self.graph(code)
            else:
                arg = (self.word(code), self.graph(code))
            terms.append(self.probs[code] * f(arg))
        return math.fsum(terms)
