"""Brute-force laws at tiny volumes and exact checks of the cut identities.

All sums use ``math.fsum``.  The two-sided volume is [-L, L) with the cut at
0; the one-sided law lives on [0, L) and its mirror on [-L, 0) via
j -> -(j + 1).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._laws import JOINT, SPIN, ExactLaw, normalise_log_weights
from .couplings import CouplingFamily, coupling_array, tail_array
from .graphs import A_n, FiniteGraph, clusters, compatibility_B, corank_Rn, cut, w_n
from .sampler import exact_rc

__all__ = [
    "ExactLaw",
    "TOLERANCE",
    "exact_spin_gibbs",
    "exact_rc",
    "exact_fk_joint",
    "monotone_functions",
    "IdentityReport",
    "verify_identities",
    "cosh_identity",
]

TOLERANCE = 1e-10
MAX_SPIN_SITES = 20


def _all_words(V: int) -> np.ndarray:
    codes = np.arange(1 << V, dtype=np.int64)
    return (2 * ((codes[:, None] >> np.arange(V)) & 1) - 1).astype(float)


def exact_spin_gibbs(lo: int, hi: int, fam: CouplingFamily, boundary: dict | None = None) -> ExactLaw:
    """P(x) proportional to exp(sum_{i<j} beta J x_i x_j + sum_{i, b} beta J x_i x_b).

    ``boundary`` maps outside sites to fixed spins.
    """
    V = hi - lo
    if not 1 <= V <= MAX_SPIN_SITES:
        raise ValueError(f"spin enumeration needs 1 <= |volume| <= {MAX_SPIN_SITES}, got {V}")
    X = _all_words(V)
    J = coupling_array(fam, V - 1)
    idx = np.arange(V)
    Jm = J[np.abs(idx[:, None] - idx[None, :])]
    energy = 0.5 * np.einsum("ai,ij,aj->a", X, Jm, X)
    if boundary:
        field_ = np.zeros(V)
        for b, s in boundary.items():
            b = int(b)
            if lo <= b < hi:
                raise ValueError(f"boundary site {b} lies inside the volume")
            if s not in (-1, 1):
                raise ValueError("boundary spins must be +1 or -1")
            d = np.abs(idx + lo - b)
            Jd = coupling_array(fam, int(d.max()))[d]
            field_ += s * Jd
        energy = energy + X @ field_
    P, logz = normalise_log_weights(energy)
    return ExactLaw(SPIN, lo, hi, P, logz)


def exact_fk_joint(lo: int, hi: int, fam: CouplingFamily, max_slots: int = 20,
                   check: bool = True) -> ExactLaw:
    """Joint law of compatible (spin word, subgraph) pairs with weight prod p^G (1-p)^(1-G).

    With ``check`` the two marginals are compared atomwise with the exact
    Ising and RC(q=2) laws and a ValueError is raised above 1e-12.
    """
    rc = exact_rc(lo, hi, fam, q=1.0, max_slots=max_slots)  # product law, same slot order
    V = hi - lo
    if V > MAX_SPIN_SITES:
        raise ValueError("volume too large for spin enumeration")
    slots = rc.slots - lo
    X = _all_words(V)
    same = X[:, slots[:, 0]] == X[:, slots[:, 1]]  # words x slots
    bad = (~same).astype(np.int64) @ (1 << np.arange(slots.shape[0], dtype=np.int64))
    gcodes = np.arange(rc.n_atoms, dtype=np.int64)
    compat = (gcodes[:, None] & bad[None, :]) == 0
    w = rc.probs[:, None] * compat
    z = math.fsum(w.ravel())
    law = ExactLaw(JOINT, lo, hi, (w / z).ravel(), math.log(z), rc.slots, 0)
    if check:
        e1 = np.max(np.abs(law.spin_marginal() - exact_spin_gibbs(lo, hi, fam).probs))
        e2 = np.max(np.abs(law.graph_marginal() - exact_rc(lo, hi, fam, q=2.0, max_slots=max_slots).probs))
        if max(e1, e2) > 1e-12:
            raise ValueError(f"FK marginals disagree: spin {e1:.3e}, graph {e2:.3e}")
    return law


def monotone_functions(k: int) -> np.ndarray:
    """All increasing Boolean functions of k bits as a (count, 2^k) 0/1 table."""
    n = 1 << k
    if n > 16:
        raise ValueError("k <= 4 supported")
    f = ((np.arange(1 << n)[:, None] >> np.arange(n)) & 1).astype(bool)
    ok = np.ones(f.shape[0], dtype=bool)
    for pt in range(n):
        for b in range(k):
            if not pt >> b & 1:
                ok &= ~f[:, pt] | f[:, pt | (1 << b)]
    return f[ok]


@dataclass
class IdentityReport:
    L: int
    family: str
    discrepancies: dict = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.discrepancies.values())

    def failures(self) -> list:
        return [k for k, v in self.discrepancies.items() if not v < self.tolerance]

    def table(self) -> str:
        rows = [f"{'identity':<24}{'max discrepancy':>18}  status"]
        for k, v in self.discrepancies.items():
            rows.append(f"{k:<24}{v:>18.3e}  {'pass' if v < self.tolerance else 'FAIL'}")
        return "\n".join(rows)

    def as_dict(self) -> dict:
        return {"L": self.L, "family": self.family, "tolerance": self.tolerance,
                "discrepancies": self.discrepancies, "passed": self.passed}


def _law_lookup(law: ExactLaw) -> dict:
    """Edge tuple set -> probability for a graph law."""
    out = {}
    for code in range(law.n_atoms):
        out[frozenset(law.graph(code).edge_set())] = law.probs[code]
    return out


def _mirror(edges) -> frozenset:
    return frozenset((-(b + 1), -(a + 1)) for a, b in edges)


def verify_identities(L: int, fam: CouplingFamily, range_cutoff: int | None = 3,
                      max_slots: int = 20, hn_check: bool = True) -> IdentityReport:
    """Evaluate every identity by full enumeration on [-L, L).

    The family is truncated at ``range_cutoff`` (None keeps it whole).
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    model = fam.truncated(range_cutoff) if range_cutoff is not None else fam
    lo, hi = -L, L
    mu = exact_rc(lo, hi, model, q=2.0, max_slots=max_slots)
    mu_spin = exact_spin_gibbs(lo, hi, model)
    nu = exact_rc(0, L, model, q=2.0, max_slots=max_slots)
    nu_spin = exact_spin_gibbs(0, L, model)
    rep = IdentityReport(L, model.label())
    d = rep.discrepancies

    graphs = [mu.graph(c) for c in range(mu.n_atoms)]
    labels = np.array([G._labels for G in graphs])            # atoms x V
    V = hi - lo

    # probability of cylinders from cluster counts and compatibility
    worst = 0.0
    same = labels[:, :, None] == labels[:, None, :]
    for r in range(1, V + 1):
        for F in itertools.combinations(range(V), r):
            Fl = list(F)
            sub = labels[:, Fl]
            wF = np.array([len(set(row)) for row in sub]) if r > 1 else np.ones(mu.n_atoms, dtype=int)
            for xs in itertools.product((-1, 1), repeat=r):
                ok = np.ones(mu.n_atoms, dtype=bool)
                for a in range(r):
                    for b in range(a + 1, r):
                        if xs[a] != xs[b]:
                            ok &= ~same[:, Fl[a], Fl[b]]
                lhs = math.fsum(mu.probs * ok * np.exp2(-wF))
                rhs = mu_spin.cylinder([lo + i for i in F], xs)
                worst = max(worst, abs(lhs - rhs))
    d["probcyl"] = worst

    # per-atom combinatorics: mat1, wR, Bnfac; inputs for represent2
    nu_p = _law_lookup(nu)
    ph = [(a, b, p) for a, b, p in zip(mu.slots[:, 0], mu.slots[:, 1], _slot_ps(mu, model))
          if a < 0 <= b]
    mat1 = wr = 0
    R0 = np.zeros(mu.n_atoms, dtype=np.int64)
    xi = np.zeros(mu.n_atoms)
    nu_plus = np.zeros(mu.n_atoms)
    bnfac = 0
    for c, G in enumerate(graphs):
        dec = cut(G, 0)
        r0 = corank_Rn(dec, 0)
        R0[c] = r0
        wG = clusters(G).w
        mat1 = max(mat1, abs(wG - (clusters(dec.G_plus).w + clusters(dec.G_minus).w
                                   - dec.H.n_edges + r0)))
        for n in range(0, L + 1):
            lhs = w_n(dec.G_plus, n) - w_n(G, n)
            wr = max(wr, abs(lhs - (corank_Rn(dec, n) - r0)))
        hset = dec.H.edge_set()
        eta_h = math.prod((pc if (a, b) in hset else 1.0 - pc) for a, b, pc in
                          ((a, b, p / (2.0 - p)) for a, b, p in ph))
        xi[c] = nu_p[_mirror(dec.G_minus.edge_set())] * eta_h
        nu_plus[c] = nu_p[frozenset(dec.G_plus.edge_set())]
        if c % 7 == 0:
            for n in range(1, L + 1):
                for xs in itertools.product((-1, 1), repeat=n):
                    F = range(n)
                    lhs = compatibility_B(xs, G, F)
                    rhs = A_n(xs, G, n) * compatibility_B(xs, dec.G_plus, F)
                    bnfac = max(bnfac, abs(int(lhs) - int(rhs)))
    d["mat1"] = float(mat1)
    d["wR"] = float(wr)
    d["Bnfac"] = float(bnfac)

    prod = nu_plus * xi * np.exp2(R0)
    K0 = math.fsum(prod)
    d["represent2"] = float(np.max(np.abs(mu.probs - prod / K0)))

    joint = exact_fk_joint(lo, hi, model, max_slots=max_slots, check=False)
    d["fk_spin_marginal"] = float(np.max(np.abs(joint.spin_marginal() - mu_spin.probs)))
    d["fk_graph_marginal"] = float(np.max(np.abs(joint.graph_marginal() - mu.probs)))

    # Edwards-Sokal: given G, spins uniform over cluster-constant words
    tab = joint.probs.reshape(mu.n_atoms, 1 << V)
    es = 0.0
    words = _all_words(V)
    for c in range(mu.n_atoms):
        pg = math.fsum(tab[c])
        if pg <= 0:
            continue
        lab = labels[c]
        ok = np.ones(1 << V, dtype=bool)
        for v in range(V):
            ok &= words[:, v] == words[:, lab[v]]
        target = ok / ok.sum()
        es = max(es, float(np.max(np.abs(tab[c] / pg - target))))
    d["edwards_sokal"] = es

    d["sandwich"] = _sandwich_violation(mu, model)

    if hn_check:
        d["hnint"] = _hn_discrepancy(L, model, mu_spin, nu_spin, nu, nu_p, ph, K0)
    return rep


def _slot_ps(law: ExactLaw, fam: CouplingFamily) -> np.ndarray:
    if law.n_slots == 0:
        return np.zeros(0)
    J = coupling_array(fam, int(np.max(law.slots[:, 1] - law.slots[:, 0])))
    return -np.expm1(-2.0 * J[law.slots[:, 1] - law.slots[:, 0]])


def _sandwich_violation(mu: ExactLaw, fam: CouplingFamily) -> float:
    """Largest violation of eta(p_check) <= RC_2(p) <= eta(p) over upsets on 4-slot subsets."""
    p = _slot_ps(mu, fam)
    E = mu.n_slots
    k = min(4, E)
    ups = monotone_functions(k).astype(float)
    codes = np.arange(mu.n_atoms)
    pts = np.arange(1 << k)
    worst = 0.0
    for S in itertools.combinations(range(E), k):
        sub = np.zeros(mu.n_atoms, dtype=np.int64)
        for t, e in enumerate(S):
            sub |= ((codes >> e) & 1) << t
        rc = np.bincount(sub, weights=mu.probs, minlength=1 << k)
        bits = (pts[:, None] >> np.arange(k)) & 1
        ps = p[list(S)]
        pc = ps / (2.0 - ps)
        hi_ = np.prod(np.where(bits, ps, 1 - ps), axis=1)
        lo_ = np.prod(np.where(bits, pc, 1 - pc), axis=1)
        a, b, c = ups @ lo_, ups @ rc, ups @ hi_
        worst = max(worst, float(np.max(a - b)), float(np.max(b - c)), 0.0)
    return worst


def _hn_discrepancy(L, fam, mu_spin, nu_spin, nu, nu_p, ph, K0) -> float:
    """Cylinder ratio h_n versus its cut-decomposition integral, n = 1..L."""
    plus_graphs = [nu.graph(c) for c in range(nu.n_atoms)]
    minus_sets = [_mirror(G.edge_set()) for G in plus_graphs]
    worst = 0.0
    for n in range(1, L + 1):
        for xs in itertools.product((-1, 1), repeat=n):
            direct = mu_spin.cylinder(range(n), xs) / nu_spin.cylinder(range(n), xs)
            alpha = np.array([2.0 ** -w_n(G, n) * compatibility_B(xs, G, range(n)) * nu.probs[c]
                              for c, G in enumerate(plus_graphs)])
            alpha /= math.fsum(alpha)
            terms = []
            for hmask in range(1 << len(ph)):
                hed = [(a, b) for t, (a, b, _) in enumerate(ph) if hmask >> t & 1]
                eta_h = math.prod((p / (2 - p)) if hmask >> t & 1 else 1 - p / (2 - p)
                                  for t, (_, _, p) in enumerate(ph))
                for ms, pm in zip(minus_sets, nu.probs):
                    pxi = pm * eta_h
                    for c, Gp in enumerate(plus_graphs):
                        if alpha[c] == 0:
                            continue
                        G = FiniteGraph(-L, L, np.array(sorted(ms) + hed + [tuple(e) for e in Gp.edges],
                                                        dtype=np.int64).reshape(-1, 2))
                        dec = cut(G, 0)
                        terms.append(alpha[c] * pxi * A_n(xs, G, n) * 2.0 ** corank_Rn(dec, n))
            worst = max(worst, abs(direct - math.fsum(terms) / K0))
    return worst


def cosh_identity(L: int, fam: CouplingFamily) -> tuple:
    """(E_nu[exp(r(x))], E_nu[prod_C cosh r(C)]) on the one-sided volume [0, L)."""
    r = tail_array(fam, L - 1)
    spins = exact_spin_gibbs(0, L, fam)
    X = _all_words(L)
    lhs = math.fsum(spins.probs * np.exp(X @ r))
    nu = exact_rc(0, L, fam, q=2.0)
    terms = []
    for c in range(nu.n_atoms):
        lab = nu.graph(c)._labels
        rc = np.bincount(lab, weights=r, minlength=L)
        terms.append(nu.probs[c] * math.prod(math.cosh(v) for v in rc))
    return lhs, math.fsum(terms)
