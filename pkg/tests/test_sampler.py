import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dysonfk.couplings import dyson, finite_range
from dysonfk.estimators import batch_means
from dysonfk.graphs import FiniteGraph, compatibility_B, count_wF
from dysonfk.sampler import (P_CAP, RCChain, RCConfig, SweepRecord, bernoulli_graph, chain_seed,
                             conditional_model, edge_probability, exact_rc, rc_mcmc, slot_model,
                             spin_assignment)

HALF = math.log(2.0) / 2


def slot_index(law):
    return {(int(a), int(b)): k for k, (a, b) in enumerate(law.slots)}


def chain_marginals(model, law, sweeps, seed, burn=200):
    idx = slot_index(law)
    ch = RCChain(model, chain_seed(seed))
    for _ in range(burn):
        ch.sweep()
    X = np.zeros((sweeps, law.n_slots))
    for s in range(sweeps):
        ch.sweep()
        for a, b in ch.edges():
            X[s, idx[(int(a), int(b))]] = 1.0
    return X


def test_edge_probability_values():
    cfg = RCConfig(0, 4, finite_range([0, HALF]))
    p, pc = edge_probability(cfg, 0, 1)
    assert p == pytest.approx(0.5, abs=1e-15) and pc == pytest.approx(1 / 3, abs=1e-15)
    assert edge_probability(cfg, 0, 2) == (0.0, 0.0)
    with pytest.raises(ValueError):
        edge_probability(cfg, 0, 0)
    with pytest.raises(ValueError):
        edge_probability(cfg, 0, 9)
    big = RCConfig(0, 4, dyson(2, 1e6))
    assert edge_probability(big, 0, 3)[0] == P_CAP


@given(st.floats(0.0, 3.0), st.floats(0.01, 3.0), st.integers(1, 9))
def test_edge_probability_monotone_in_beta(b, db, k):
    lo = edge_probability(RCConfig(0, 10, dyson(2, b)), 0, k)[0]
    hi = edge_probability(RCConfig(0, 10, dyson(2, b + db)), 0, k)[0]
    assert hi >= lo


def test_config_validation():
    fam = dyson(2, 0.5)
    for kw in ({"q": 0.5}, {"boundary": "periodic"}, {"exterior": "X"}, {"thinning": 0},
               {"sweeps": -1}, {"origin": 20}):
        with pytest.raises(ValueError):
            RCConfig(0, 10, fam, **kw)
    with pytest.raises(ValueError):
        RCConfig(3, 3, fam)
    assert RCConfig(-5, 5, fam).origin_site == 0 and RCConfig(2, 5, fam).origin_site == 2


def test_bernoulli_extremes():
    rng = np.random.default_rng(0)
    g = bernoulli_graph(RCConfig(0, 6, dyson(2, 0.0)), rng)
    assert g.n_edges == 0
    g = bernoulli_graph(RCConfig(0, 6, dyson(2, 1e6)), rng)
    assert g.n_edges == 15


def test_bernoulli_frequencies():
    cfg = RCConfig(0, 5, dyson(2, 0.4))
    law = exact_rc(0, 5, cfg.fam, q=1.0)
    idx = slot_index(law)
    rng = np.random.default_rng(1)
    n = 100000
    counts = np.zeros(law.n_slots)
    for _ in range(n):
        for a, b in bernoulli_graph(cfg, rng).edges:
            counts[idx[(int(a), int(b))]] += 1
    p = np.array([edge_probability(cfg, a, b)[0] for a, b in law.slots])
    sd = np.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(counts / n - p) < 4 * sd)


def test_bernoulli_wired_slots():
    cfg = RCConfig(0, 4, dyson(2, 0.5), boundary="wired")
    g = bernoulli_graph(cfg, np.random.default_rng(0))
    assert g.n_ghosts == 1


def test_exact_rc_basics():
    fam = dyson(2, 0.5)
    law = exact_rc(0, 4, fam, q=1.0)
    p = np.array([edge_probability(RCConfig(0, 4, fam), a, b)[0] for a, b in law.slots])
    codes = np.arange(law.n_atoms)
    bits = (codes[:, None] >> np.arange(law.n_slots)) & 1
    prod = np.prod(np.where(bits, p, 1 - p), axis=1)
    assert np.allclose(law.probs, prod, atol=1e-15)
    assert math.fsum(exact_rc(0, 4, fam, q=2.0).probs) == pytest.approx(1.0, abs=1e-15)


def test_exact_rc_single_edge():
    fam = finite_range([0, 0.8])
    law = exact_rc(0, 2, fam, q=2.0)
    p = -math.expm1(-1.6)
    assert law.edge_marginals()[0] == pytest.approx(p / (p + 2 * (1 - p)), abs=1e-15)
    assert law.edge_marginals()[0] == pytest.approx(p / (2 - p), abs=1e-15)


def test_exact_rc_slot_limit():
    with pytest.raises(ValueError):
        exact_rc(0, 9, dyson(2, 0.5), max_slots=20)


def test_q1_chain_is_bernoulli():
    fam = dyson(2, 0.6)
    cfg = RCConfig(0, 5, fam, q=1.0)
    law = exact_rc(0, 5, fam, q=1.0)
    X = chain_marginals(slot_model(cfg), law, 20000, seed=11, burn=1)
    p = law.edge_marginals()
    for k in range(law.n_slots):
        e = batch_means(X[:, k])
        assert abs(e.mean - p[k]) < 4 * e.std_error + 1e-12
    # successive q = 1 sweeps are independent
    lag = np.mean([np.corrcoef(X[:-1, k], X[1:, k])[0, 1] for k in range(law.n_slots)])
    assert abs(lag) < 0.03


@pytest.mark.parametrize("boundary,V", [("free", 5), ("wired", 4)])
def test_q2_chain_matches_exact(boundary, V):
    fam = dyson(2, 0.6)
    cfg = RCConfig(0, V, fam, q=2.0, boundary=boundary)
    law = exact_rc(0, V, fam, q=2.0, boundary=boundary)
    X = chain_marginals(slot_model(cfg), law, 40000, seed=5)
    p = law.edge_marginals()
    for k in range(law.n_slots):
        e = batch_means(X[:, k])
        assert abs(e.mean - p[k]) < 4.5 * e.std_error


def test_zero_coupling_records_are_empty():
    cfg = RCConfig(-4, 4, dyson(2, 0.0), sweeps=20, burn_in=0, seed=1)
    recs = list(rc_mcmc(cfg))
    assert len(recs) == 20
    assert all(r.n_edges == 0 and r.w == 8 and r.largest == 1 for r in recs)


def test_mcmc_determinism_and_chains():
    cfg = RCConfig(-16, 16, dyson(2, 0.5), sweeps=30, burn_in=5, seed=9)
    a = [r.to_json() for r in rc_mcmc(cfg)]
    b = [r.to_json() for r in rc_mcmc(cfg)]
    c = [r.to_json() for r in rc_mcmc(cfg, chain=1)]
    assert a == b and a != c


def test_thinning_and_spins():
    cfg = RCConfig(0, 12, dyson(2, 0.5), sweeps=10, burn_in=0, thinning=3, seed=2)
    recs = list(rc_mcmc(cfg, record_spins=True))
    assert [r.sweep for r in recs] == [0, 3, 6, 9]
    assert all(len(r.spins) == 12 for r in recs)


def test_observers():
    cfg = RCConfig(0, 8, dyson(2, 0.5), sweeps=5, burn_in=0, seed=2)
    recs = list(rc_mcmc(cfg, observers=[lambda rec, g: {"edges": g.n_edges}]))
    assert all(r.extra["edges"] == r.n_edges for r in recs)


def test_sweep_record_roundtrip():
    r = SweepRecord(0, 3, 5, 2, 1, 4, 1, 0, 0, 0, spins=[1, -1], extra={"a": 1})
    assert SweepRecord.from_json(r.to_json()) == r


def test_spin_assignment():
    rng = np.random.default_rng(3)
    complete = FiniteGraph(0, 5, [(a, b) for a in range(5) for b in range(a + 1, 5)])
    for _ in range(20):
        x = spin_assignment(complete, rng)
        assert len(set(x.tolist())) == 1
    empty = FiniteGraph.empty(0, 6)
    X = np.array([spin_assignment(empty, rng) for _ in range(20000)])
    assert np.all(np.abs(X.mean(axis=0)) < 4 / math.sqrt(20000))
    assert np.abs(np.corrcoef(X.T)[0, 1]) < 0.05
    g = FiniteGraph(0, 4, [(0, 4), (1, 2)], n_ghosts=1)
    for _ in range(10):
        x = spin_assignment(g, rng, boundary_spin=-1)
        assert x[0] == -1 and x[1] == x[2]


@given(st.integers(0, 2**32), st.integers(2, 8))
def test_spin_assignment_compatible(seed, V):
    rng = np.random.default_rng(seed)
    cfg = RCConfig(0, V, dyson(2, 0.7))
    g = bernoulli_graph(cfg, rng)
    x = spin_assignment(g, rng)
    for k in range(1, V + 1):
        assert compatibility_B(x[:k], g, range(k))


def test_conditional_model_matches_conditioned_law():
    fam = dyson(2, 0.7)
    L, prefix = 5, np.array([1, -1], dtype=np.int8)
    n = prefix.size
    nu = exact_rc(0, L, fam)
    weights, plus_link = [], []
    for c in range(nu.n_atoms):
        g = nu.graph(c)
        w = nu.probs[c] * 2.0 ** -count_wF(g, range(n)) * compatibility_B(prefix, g, range(n))
        lab = g._labels
        weights.append(w)
        plus_link.append([lab[j] == lab[0] for j in range(n, L)])
    weights = np.array(weights) / np.sum(weights)
    exact = weights @ np.array(plus_link, dtype=float)
    ch = RCChain(conditional_model(fam, L, prefix), chain_seed(4))
    for _ in range(200):
        ch.sweep()
    V = L - n
    rows = []
    for _ in range(40000):
        ch.sweep()
        lab = ch.local_labels()
        assert lab[V] != lab[V + 1]
        rows.append([lab[j] == lab[V] for j in range(V)])
    rows = np.array(rows, dtype=float)
    for j in range(V):
        e = batch_means(rows[:, j])
        assert abs(e.mean - exact[j]) < 4.5 * e.std_error


def test_wired_dominates_free_on_upsets():
    import itertools

    from dysonfk.oracle import monotone_functions

    fam = dyson(2, 0.6)
    free = exact_rc(0, 4, fam, boundary="free")
    wired = exact_rc(0, 4, fam, boundary="wired")
    E = free.n_slots
    assert np.array_equal(wired.slots[:E], free.slots)
    ups = monotone_functions(4).astype(float)

    def projected(law, S):
        codes = np.arange(law.n_atoms)
        sub = np.zeros(law.n_atoms, dtype=np.int64)
        for t, e in enumerate(S):
            sub |= ((codes >> e) & 1) << t
        return np.bincount(sub, weights=law.probs, minlength=16)

    for S in itertools.combinations(range(E), 4):
        assert np.all(ups @ projected(free, S) <= ups @ projected(wired, S) + 1e-12)


def test_chain_spins_match_ising():
    from dysonfk.oracle import exact_spin_gibbs

    fam = dyson(2, 0.6)
    cfg = RCConfig(0, 5, fam, sweeps=30000, burn_in=200, seed=12)
    X = np.array([r.spins for r in rc_mcmc(cfg, record_spins=True)])
    law = exact_spin_gibbs(0, 5, fam)
    for F, x in (([0, 1], [1, 1]), ([0, 4], [1, -1]), ([1, 2, 3], [-1, -1, -1])):
        hit = np.all(X[:, F] == np.array(x), axis=1).astype(float)
        e = batch_means(hit)
        assert abs(e.mean - law.cylinder(F, x)) < 4 * e.std_error
