import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dysonfk.couplings import dyson, tail_r
from dysonfk.estimators import (Estimate, batch_means, beta_scan, cauchy_schwarz_violations,
                                cluster_tail, conditional_product_check, cosh_product, cut_statistics,
                                cylinder_probability, hn_convergence, likelihood_ratio_hn, log_cosh,
                                m_constant, make_panel, moment_check, poisson_cosh_check,
                                ratio_estimate)
from dysonfk.graphs import FiniteGraph
from dysonfk.oracle import exact_spin_gibbs
from dysonfk.sampler import RCChain, RCConfig, SweepRecord, bernoulli_graph, chain_seed, slot_model


def chain_graphs(lo, hi, fam, n, seed, burn=200, boundary="free"):
    ch = RCChain(slot_model(RCConfig(lo, hi, fam, boundary=boundary)), chain_seed(seed))
    for _ in range(burn):
        ch.sweep()
    out = []
    for _ in range(n):
        ch.sweep()
        out.append(ch.graph())
    return out


def rec(size, H=0, R=0, N=0):
    return SweepRecord(0, 0, 1, size, size, 0, H, R, R, N)


def test_batch_means_and_ratio():
    e = batch_means(np.ones(100))
    assert e.mean == 1.0 and e.std_error == 0.0
    x = np.random.default_rng(0).normal(2.0, 1.0, 64000)
    e = batch_means(x)
    assert abs(e.mean - 2.0) < 4 * e.std_error
    assert e.std_error == pytest.approx(1 / math.sqrt(64000), rel=0.3)
    lo, hi = e.ci()
    assert lo < e.mean < hi
    r = ratio_estimate(2 * x, x)
    assert r.mean == pytest.approx(2.0) and r.std_error < 1e-12
    assert isinstance(Estimate(1.0, 0.1, 3).as_dict(), dict)


def test_cylinder_zero_coupling():
    gs = chain_graphs(0, 6, dyson(2, 0.0), 500, 1, burn=0)
    for F in ([0], [1, 3], [0, 2, 4]):
        e = cylinder_probability([1] * len(F), F, gs)
        assert e.mean == 2.0 ** -len(F) and e.std_error == 0.0


def test_cylinder_matches_exact():
    fam = dyson(2, 0.6)
    gs = chain_graphs(0, 5, fam, 30000, 2)
    law = exact_spin_gibbs(0, 5, fam)
    for F, x in (([0], [1]), ([0, 4], [1, -1]), ([1, 2, 3], [1, 1, 1])):
        e = cylinder_probability(x, F, gs)
        assert abs(e.mean - law.cylinder(F, x)) <= 4 * e.std_error + 1e-12
    e = cylinder_probability([-1], [2], gs)
    assert abs(e.mean - 0.5) < 1e-12


def test_likelihood_ratio():
    gs0 = chain_graphs(-3, 3, dyson(2, 0.0), 200, 3, burn=0)
    gs1 = chain_graphs(0, 3, dyson(2, 0.0), 200, 4, burn=0)
    e = likelihood_ratio_hn([1, -1], 2, gs0, gs1)
    assert e.mean == 1.0
    fam = dyson(2, 0.6)
    two = chain_graphs(-2, 3, fam, 30000, 5)
    one = chain_graphs(0, 3, fam, 30000, 6)
    x = [1, 1]
    exact = exact_spin_gibbs(-2, 3, fam).cylinder([0, 1], x) / exact_spin_gibbs(0, 3, fam).cylinder([0, 1], x)
    e = likelihood_ratio_hn(x, 2, two, one)
    assert abs(e.mean - exact) < 4 * e.std_error
    with pytest.raises(ValueError):
        likelihood_ratio_hn([1], 2, two, one)


def test_log_cosh_and_product():
    v = np.array([0.0, 0.3, 5.0, 800.0])
    assert np.allclose(log_cosh(v)[:3], np.log(np.cosh(v[:3])), rtol=1e-14)
    assert math.isfinite(log_cosh(800.0))
    assert cosh_product(FiniteGraph.empty(0, 4), dyson(2, 0.0)) == 0.0
    z = tail_r(dyson(2, 1), 0)
    assert cosh_product(FiniteGraph.empty(0, 1), dyson(2, 1)) == pytest.approx(math.log(math.cosh(z)))
    ref = float(mpmath.log(mpmath.cosh(mpmath.zeta(2))))
    assert cosh_product(FiniteGraph.empty(0, 1), dyson(2, 1)) == pytest.approx(ref, abs=1e-14)
    with pytest.raises(ValueError):
        cosh_product(FiniteGraph.empty(-1, 1), dyson(2, 1))


@given(st.integers(0, 2**32))
def test_cosh_product_relabel_invariant(seed):
    rng = np.random.default_rng(seed)
    fam = dyson(2, 0.8)
    g = bernoulli_graph(RCConfig(0, 10, fam), rng)
    perm_edges = g.edges[rng.permutation(g.n_edges)]
    assert cosh_product(FiniteGraph(0, 10, perm_edges), fam) == pytest.approx(cosh_product(g, fam))


def test_poisson_cosh():
    assert poisson_cosh_check(0.0, 1) == 1.0
    assert poisson_cosh_check(1.0, 60) == pytest.approx(1.5430806348, abs=1e-10)
    assert poisson_cosh_check(2.0, 80) == pytest.approx(3.7621956911, abs=1e-10)
    for lam in (0.0, 0.5, 1.0, 2.0):
        assert abs(poisson_cosh_check(lam, 80) - math.cosh(lam)) < 1e-10
    with pytest.raises(ValueError):
        poisson_cosh_check(-1.0, 5)


def test_cluster_tail_degenerate():
    fit = cluster_tail([rec(1)] * 1000)
    assert fit.degenerate and fit.survival[1] == 0.0
    with pytest.raises(ValueError):
        moment_check([rec(1)] * 10, 3, fit)
    with pytest.raises(ValueError):
        cluster_tail([])


def test_cluster_tail_geometric():
    rng = np.random.default_rng(7)
    c = 0.4
    sizes = rng.geometric(1 - math.exp(-c), 50000)
    fit = cluster_tail(sizes)
    lo, hi = fit.c_ci()
    assert lo < c < hi and lo > 0
    assert np.all(np.diff(fit.survival) <= 0)
    mc = moment_check(sizes, 4, fit)
    assert all(row["pass"] for row in mc)
    assert [row["n"] for row in mc] == [1, 2, 3, 4]
    m = [row["moment"] for row in mc]
    assert all(a <= b for a, b in zip(m, m[1:]))


def test_moment_check_singletons():
    # a fit from other data, evaluated on all-singleton samples
    rng = np.random.default_rng(2)
    fit = cluster_tail(rng.geometric(0.5, 5000))
    mc = moment_check([1] * 100, 3, fit)
    assert all(row["moment"] == 1.0 for row in mc)


def _m_direct(K, c, R, terms=400):
    return math.fsum(math.exp(math.log(K) + (n - 1) * math.log(R) + math.lgamma(n + 2)
                              - (n + 1) * math.log(c) - math.lgamma(2 * n + 1)) for n in range(1, terms))


@pytest.mark.parametrize("K,c,R", [(1.0, 0.5, 2.0), (3.0, 0.1, 10.0), (0.4, 1.2, 0.3)])
def test_m_constant(K, c, R):
    part, rem = m_constant(K, c, R)
    assert part + rem == pytest.approx(_m_direct(K, c, R), rel=1e-12)
    assert 0 <= rem <= 1e-14 * part
    with pytest.raises(ValueError):
        m_constant(-1.0, c, R)


@given(st.integers(0, 2**32), st.floats(0.1, 2.0))
def test_cauchy_schwarz_never_violated(seed, beta):
    fam = dyson(2, beta)
    g = bernoulli_graph(RCConfig(0, 20, fam), np.random.default_rng(seed))
    assert cauchy_schwarz_violations(g, fam) == 0


def test_conditional_product_check():
    fam = dyson(2, 0.3)
    gs = chain_graphs(0, 16, fam, 400, 8)
    assert conditional_product_check(gs, fam, 1e3)["pass"]
    assert not conditional_product_check(gs, fam, 0.0)["pass"]


def test_cut_statistics():
    res = cut_statistics([rec(1)] * 50)
    assert res["R_limit"] == {0: 50} and res["N"] == {0: 50}
    assert res["mean_2R"]["mean"] == 1.0
    rows = [rec(1, H=2, R=1, N=3), rec(1, H=1, R=0, N=0), rec(1, H=3, R=2, N=5)]
    res = cut_statistics(rows * 10)
    assert all(a >= b for a, b in zip(res["xi_N_gt_n"], res["xi_N_gt_n"][1:]))
    assert res["xi_N_gt_n"][-1] == 0.0
    assert res["mean_2R"]["mean"] == pytest.approx((2 + 1 + 4) / 3)
    with pytest.raises(ValueError):
        cut_statistics([])


def test_make_panel():
    X = make_panel(5, 8, 1)
    assert X.shape == (7, 8)
    assert np.all(X[-2] == 1) and np.all(X[-1] == -1)
    assert np.array_equal(X, make_panel(5, 8, 1))


def test_hn_convergence_small():
    res = hn_convergence(dyson(2, 0.3), 64, ns=(2, 4, 8), n_w=4000, n_alpha=60, panel_size=6,
                         seed=1, burn_in=100, alpha_burn_in=50)
    assert res.panel.shape == (8, 8)
    assert all(np.all(res.h[n][0] > 0) for n in res.ns)
    for n in (2, 4):
        d, se = res.sup_diff(n)
        # the tail integral bounds the difference of successive estimates
        assert d <= res.tail_integral[n].mean + 4 * (se + res.tail_integral[n].std_error)
    xi = [res.xi_tail[n].mean for n in res.ns]
    assert all(a >= b for a, b in zip(xi, xi[1:]))
    assert res.K0.mean >= 1.0
    assert set(res.as_dict()) >= {"K0", "bound", "sup_diff", "inf_h"}


def test_hn_zero_coupling():
    res = hn_convergence(dyson(2, 0.0), 32, ns=(2, 4), n_w=500, n_alpha=10, panel_size=3, seed=0,
                         burn_in=0, alpha_burn_in=0)
    for n in res.ns:
        assert np.allclose(res.h[n][0], 1.0)
    assert res.K0.mean == 1.0 and res.bound[2] == 0.0


def test_beta_scan():
    res = beta_scan(dyson(2, 1.0), [0.0, 0.3], [16, 32], sweeps=200, seed=0)
    zero = [r for r in res["rows"] if r["beta"] == 0.0]
    assert all(r["largest_fraction"] == pytest.approx(1 / r["volume"]) for r in zero)
    for V in (16, 32):
        f = [r["largest_fraction"] for r in res["rows"] if r["volume"] == V]
        assert f[0] <= f[1]
    with pytest.raises(ValueError):
        beta_scan(dyson(2, 1.0), [0.3, 0.1], [16], 10, 0)
