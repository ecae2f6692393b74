"""Monte Carlo estimators over random-cluster samples.

Standard errors are batch means over 32 contiguous batches unless stated
otherwise.  Products of cosh factors and powers of two are accumulated in
log domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _cutkernels as CK
from .couplings import CouplingFamily, coupling_array, spin_word, tail_array
from .graphs import FiniteGraph, compatibility_B, count_wF
from .sampler import (RCChain, RCConfig, chain_seed, conditional_model, rc_mcmc, slot_model,
                      _generator, _p_of)

__all__ = [
    "N_BATCHES",
    "Estimate",
    "batch_means",
    "ratio_estimate",
    "cylinder_probability",
    "likelihood_ratio_hn",
    "log_cosh",
    "cosh_product",
    "poisson_cosh_check",
    "TailFit",
    "cluster_tail",
    "moment_check",
    "m_constant",
    "cauchy_schwarz_violations",
    "conditional_product_check",
    "cut_statistics",
    "HnPanel",
    "hn_convergence",
    "beta_scan",
]

N_BATCHES = 32
Z95 = 1.959963984540054


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    n_samples: int
    log_domain: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("an estimate needs at least one sample")
        if not self.std_error >= 0:
            raise ValueError("standard error must be nonnegative")

    def ci(self, z: float = Z95) -> tuple:
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_samples": self.n_samples,
                "log_domain": self.log_domain}


def _batches(n: int, n_batches: int) -> np.ndarray:
    """Batch id of each of n consecutive samples."""
    b = min(n_batches, n)
    return (np.arange(n) * b) // n


def batch_means(values, n_batches: int = N_BATCHES) -> Estimate:
    v = np.asarray(values, dtype=float)
    n = v.size
    if n == 0:
        raise ValueError("empty sample stream")
    if n == 1:
        return Estimate(float(v[0]), math.inf, 1)
    ids = _batches(n, n_batches)
    means = np.bincount(ids, weights=v) / np.bincount(ids)
    se = float(np.std(means, ddof=1) / math.sqrt(means.size))
    return Estimate(float(v.mean()), se, n)


def ratio_estimate(num, den, n_batches: int = N_BATCHES) -> Estimate:
    """Paired ratio sum(num)/sum(den) with a batch-means delta-method error."""
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("numerator and denominator must be nonempty and paired")
    if b.sum() == 0:
        raise ZeroDivisionError("vanishing denominator")
    ids = _batches(a.size, n_batches)
    cnt = np.bincount(ids)
    return _ratio_from_batches(np.bincount(ids, weights=a) / cnt, np.bincount(ids, weights=b) / cnt,
                               a.size)


def _ratio_from_batches(am, bm, n) -> Estimate:
    r = am.mean() / bm.mean()
    if am.size < 2:
        return Estimate(float(r), math.inf, n)
    resid = am - r * bm
    se = float(np.std(resid, ddof=1) / math.sqrt(am.size) / abs(bm.mean()))
    return Estimate(float(r), se, n)


def cylinder_probability(xF, F: Sequence[int], sample_stream: Iterable[FiniteGraph],
                         n_batches: int = N_BATCHES) -> Estimate:
    """Mean of 2^{-w_F(G)} B_F(x, G) over the graphs of the stream."""
    F = [int(v) for v in F]
    xF = [int(s) for s in xF]
    vals = [math.ldexp(1.0, -count_wF(G, F)) if compatibility_B(xF, G, F) else 0.0
            for G in sample_stream]
    return batch_means(vals, n_batches)


def likelihood_ratio_hn(x, n: int, two_sided_stream, one_sided_stream,
                        n_batches: int = N_BATCHES) -> Estimate:
    """Ratio of the cylinder estimates on [0, n) from two independent streams."""
    x = spin_word(x)
    if n < 1 or n > x.size:
        raise ValueError("need 1 <= n <= len(x)")
    F = list(range(n))
    num = cylinder_probability(x[:n], F, two_sided_stream, n_batches)
    den = cylinder_probability(x[:n], F, one_sided_stream, n_batches)
    if den.mean <= 0:
        raise ZeroDivisionError("one-sided cylinder estimate vanished")
    r = num.mean / den.mean
    se = math.hypot(num.std_error / den.mean, num.mean * den.std_error / den.mean ** 2)
    return Estimate(r, se, min(num.n_samples, den.n_samples))


def log_cosh(v):
    v = np.abs(np.asarray(v, dtype=float))
    return v + np.log1p(np.exp(-2.0 * v)) - math.log(2.0)


def _cluster_r(G: FiniteGraph, r: np.ndarray) -> np.ndarray:
    lab = G._labels[: G.hi - G.lo]
    return np.bincount(lab, weights=r[G.lo: G.hi], minlength=lab.size)


def cosh_product(G: FiniteGraph, fam: CouplingFamily) -> float:
    """sum over clusters C of log cosh(r(C)), r(C) = sum_{n in C} r_n."""
    if G.lo < 0:
        raise ValueError("cosh product is defined on one-sided volumes")
    r = tail_array(fam, G.hi)
    return float(np.sum(log_cosh(_cluster_r(G, r))))


def poisson_cosh_check(lam: float, terms: int) -> float:
    """e^{-lam} + (1/2) sum_{k=1}^{terms} 2^k e^{-lam} lam^k / k!."""
    if lam < 0 or terms < 1:
        raise ValueError("need lam >= 0 and terms >= 1")
    parts = [math.exp(-lam)]
    t = math.exp(-lam)
    for k in range(1, terms + 1):
        t *= 2.0 * lam / k
        parts.append(0.5 * t)
    return math.fsum(parts)


@dataclass
class TailFit:
    n: np.ndarray
    survival: np.ndarray
    counts: np.ndarray
    K: float
    c: float
    c_se: float
    K_envelope: float
    window: int
    degenerate: bool
    n_samples: int

    def c_ci(self, z: float = Z95) -> tuple:
        return self.c - z * self.c_se, self.c + z * self.c_se

    def as_dict(self) -> dict:
        lo, hi = self.c_ci()
        return {"K": self.K, "c": self.c, "c_se": self.c_se, "c_ci95": [lo, hi],
                "K_envelope": self.K_envelope, "window": self.window,
                "degenerate": self.degenerate, "n_samples": self.n_samples}


def _sizes(sample_stream) -> np.ndarray:
    out = []
    for s in sample_stream:
        out.append(s.origin_size if hasattr(s, "origin_size") else int(s))
    return np.asarray(out, dtype=np.int64)


def _fit_line(n, logS):
    A = np.stack([np.ones_like(n, dtype=float), -n.astype(float)], axis=1)
    coef, *_ = np.linalg.lstsq(A, logS, rcond=None)
    return coef[0], coef[1]


def cluster_tail(sample_stream, min_count: int = 30, n_batches: int = N_BATCHES) -> TailFit:
    """Survival of the origin-cluster size and a fit log P(|C|>n) ~ log K - c n.

    The fit uses n = 1.. up to the last n with at least ``min_count``
    exceedances.  The standard error of c is a delete-one-batch jackknife.
    ``K_envelope`` is the smallest K with S(n) <= K e^{-cn} for every n.
    """
    s = _sizes(sample_stream)
    if s.size == 0:
        raise ValueError("empty sample stream")
    top = int(s.max())
    counts = np.array([(s > n).sum() for n in range(top + 1)])
    n = np.arange(top + 1)
    surv = counts / s.size
    window = int(np.max(np.nonzero(counts >= min_count)[0])) if np.any(counts >= min_count) else -1
    if window < 2:
        return TailFit(n, surv, counts, math.nan, math.nan, math.nan, math.nan, window, True, s.size)
    fn = n[1: window + 1]
    logK, c = _fit_line(fn, np.log(surv[1: window + 1]))
    ids = _batches(s.size, n_batches)
    B = ids.max() + 1
    jack = []
    for b in range(B):
        keep = s[ids != b]
        cnt = np.array([(keep > k).sum() for k in fn])
        if np.any(cnt == 0):
            continue
        jack.append(_fit_line(fn, np.log(cnt / keep.size))[1])
    jack = np.asarray(jack)
    c_se = float(math.sqrt((jack.size - 1) / jack.size * np.sum((jack - jack.mean()) ** 2))) \
        if jack.size > 1 else math.inf
    pos = surv > 0
    K_env = float(np.max(surv[pos] * np.exp(c * n[pos])))
    return TailFit(n, surv, counts, float(math.exp(logK)), float(c), c_se, K_env, window, False, s.size)


def moment_check(sample_stream, n_max: int, fit: TailFit, n_batches: int = N_BATCHES) -> list:
    """Empirical E|C|^k against K e^c k!/c^k for k = 1..n_max.

    The e^c factor accounts for integer sizes: P(|C| > t) <= K e^{c} e^{-ct}.
    K is the fit's envelope constant.  Passes when the lower CI end of the
    empirical moment is below the bound.
    """
    s = _sizes(sample_stream).astype(float)
    if fit.degenerate or not fit.c > 0:
        raise ValueError("moment check needs a nondegenerate fit with c > 0")
    out = []
    for k in range(1, n_max + 1):
        est = batch_means(s ** k, n_batches)
        bound = float(math.exp(math.log(fit.K_envelope) + fit.c + gammaln(k + 1) - k * math.log(fit.c)))
        out.append({"n": k, "moment": est.mean, "std_error": est.std_error, "bound": bound,
                    "pass": bool(est.mean - Z95 * est.std_error <= bound)})
    return out


def m_constant(K: float, c: float, R_sq: float, tol: float = 1e-15) -> tuple:
    """M = sum_{n>=1} K R^{n-1} (n+1)! c^{-(n+1)} / (2n)! with a remainder bound.

    Term ratios R(n+2)/(c(2n+1)(2n+2)) decrease in n, so once a ratio rho < 1
    the remainder is at most next_term/(1 - rho).  Returns (partial, remainder).
    """
    if not (K > 0 and c > 0 and R_sq >= 0):
        raise ValueError("need K > 0, c > 0, R_sq >= 0")
    logt = math.log(K) - 2 * math.log(c)  # n = 1 term K/c^2
    parts = []
    n = 1
    while True:
        parts.append(math.exp(logt))
        rho = (R_sq * (n + 2) / (c * (2 * n + 1) * (2 * n + 2)))
        nxt = logt + (math.log(rho) if rho > 0 else -math.inf)
        if rho < 1 and math.exp(nxt) / (1 - rho) <= tol * max(1.0, math.fsum(parts)):
            return math.fsum(parts), math.exp(nxt) / (1 - rho)
        logt = nxt
        n += 1
        if n > 100000:
            raise RuntimeError("M series did not certify")


def cauchy_schwarz_violations(G: FiniteGraph, fam: CouplingFamily) -> int:
    """Number of clusters with r(C)^2 > (sum_i r_i^2) |C|."""
    r = tail_array(fam, max(G.hi, 1) + 200000)
    R_sq = float(np.sum(r ** 2))
    rc = _cluster_r(G, r)
    size = np.bincount(G._labels[: G.hi - G.lo], minlength=rc.size)
    mask = size > 0
    return int(np.sum(rc[mask] ** 2 > R_sq * size[mask] * (1 + 1e-12)))


def conditional_product_check(graphs: Sequence[FiniteGraph], fam: CouplingFamily, M: float) -> dict:
    """Mean of prod_C cosh r(C) against exp(M sum_k r_{iota_k}^2), iota_k = min C_k."""
    logs, logb = [], []
    for G in graphs:
        r = tail_array(fam, G.hi)
        logs.append(cosh_product(G, fam))
        lab = G._labels[: G.hi - G.lo]
        mins = np.unique(lab)  # labels are cluster minima
        logb.append(M * float(np.sum(r[G.lo + mins] ** 2)))
    logs = np.asarray(logs)
    est = batch_means(np.exp(logs))
    bound = float(np.exp(np.min(logb)))
    return {"mean_product": est.mean, "std_error": est.std_error, "bound": bound,
            "pass": bool(est.mean - Z95 * est.std_error <= bound)}


def cut_statistics(two_sided_stream, n_max: Optional[int] = None) -> dict:
    """Distributions of |H|, R0, R_limit, N and the survival xi(N > n).

    Accepts SweepRecords or dicts with keys H, R0, R_limit, N.
    """
    rows = []
    for r in two_sided_stream:
        if isinstance(r, dict):
            rows.append((r["H"], r["R0"], r["R_limit"], r["N"]))
        else:
            rows.append((r.h_size, r.r0, r.r_limit, r.n_frontier))
    if not rows:
        raise ValueError("empty sample stream")
    a = np.asarray(rows, dtype=np.int64)
    H, R0, RL, N = a.T
    m = a.shape[0]
    log_mean_2R = float(logsumexp(RL * math.log(2.0)) - math.log(m))
    top = int(N.max()) if n_max is None else n_max
    surv = [float((N > n).mean()) for n in range(top + 1)]
    hist = lambda v: {int(k): int(c) for k, c in zip(*np.unique(v, return_counts=True))}
    return {
        "n_samples": m,
        "H": hist(H), "R0": hist(R0), "R_limit": hist(RL), "N": hist(N),
        "log_mean_2R": log_mean_2R,
        "mean_2R": batch_means(np.exp2(RL.astype(float))).as_dict(),
        "xi_N_gt_n": surv,
    }


# --- factorised likelihood-ratio estimator ------------------------------

@dataclass
class HnPanel:
    """Results of the factorised h_n estimator over a panel of words."""

    L: int
    ns: tuple
    panel: np.ndarray
    n_w: int
    K0: Estimate
    mean_2R: Estimate
    xi_tail: dict           # n -> Estimate of xi(N > n)
    tail_integral: dict     # n -> Estimate of E[2^R 1{N>n}] / K0
    bound: dict             # n -> (1/K0) xi(N>n) E[2^R]
    h: dict                 # n -> (means, std errors) over the panel
    diff: dict              # n -> (|h_2n - h_n| per word, std errors)
    extra: dict = field(default_factory=dict)

    def sup_diff(self, n) -> tuple:
        d, se = self.diff[n]
        k = int(np.argmax(d))
        return float(d[k]), float(se[k])

    def as_dict(self) -> dict:
        out = {"L": self.L, "ns": list(self.ns), "n_w": self.n_w, "panel_size": int(self.panel.shape[0]),
               "K0": self.K0.as_dict(), "mean_2R": self.mean_2R.as_dict(),
               "xi_tail": {str(n): e.as_dict() for n, e in self.xi_tail.items()},
               "tail_integral": {str(n): e.as_dict() for n, e in self.tail_integral.items()},
               "bound": {str(n): v for n, v in self.bound.items()},
               "sup_diff": {str(n): list(self.sup_diff(n)) for n in self.diff},
               "inf_h": {str(n): float(np.min(self.h[n][0])) for n in self.h}}
        out.update(self.extra)
        return out


def make_panel(n_words: int, length: int, seed: int) -> np.ndarray:
    """Seeded uniform random words plus the two constant words (last rows)."""
    rng = _generator(np.random.SeedSequence([int(seed), 3]))
    X = np.where(rng.random((n_words, length)) < 0.5, -1, 1).astype(np.int8)
    const = np.stack([np.ones(length, np.int8), -np.ones(length, np.int8)])
    return np.vstack([X, const])


def _ratio_rows(num_b, den_b, counts, n):
    """Row-wise batch ratio: num_b (rows x B), den_b (B,) -> (means, se)."""
    am = num_b / counts
    bm = den_b / counts
    r = am.mean(axis=1) / bm.mean()
    resid = am - r[:, None] * bm[None, :]
    se = np.std(resid, axis=1, ddof=1) / math.sqrt(am.shape[1]) / abs(bm.mean())
    return r, se


def hn_convergence(fam: CouplingFamily, L: int, ns: Sequence[int] = (4, 8, 16, 32, 64),
                   n_w: int = 200000, n_alpha: int = 600, panel_size: int = 100, seed: int = 0,
                   burn_in: int = 500, alpha_burn_in: int = 200,
                   panel: Optional[np.ndarray] = None, n_batches: int = N_BATCHES) -> HnPanel:
    """Estimate h_n on a panel through the cut decomposition of [-L, L).

    h_n(x) = E[A_n 2^{R_n}] / K0, the expectation over nu(G_plus | x on
    [0, n)) times xi(W).  On {N <= n} the integrand is A(x, W) 2^{R(W)},
    which needs no G_plus; the conditioned G_plus is sampled only for the W
    with N > n.  K0 = E[2^{R0}] over nu x xi.  Every h_n shares the same W
    samples, so differences h_2n - h_n have small paired errors.
    """
    ns = tuple(sorted(int(n) for n in ns))
    if ns[0] < 1 or ns[-1] >= L:
        raise ValueError("need 1 <= n < L for every n")
    nmax = ns[-1]
    X = make_panel(panel_size, nmax, seed) if panel is None else np.asarray(panel, dtype=np.int8)
    if X.shape[1] < nmax:
        raise ValueError("panel words must cover the largest n")
    P = X.shape[0]

    cfg = RCConfig(0, L, fam, q=2.0, sweeps=0, burn_in=0)
    minus = RCChain(slot_model(cfg), chain_seed(seed, 0))
    plus = RCChain(slot_model(cfg), chain_seed(seed, 1))
    for _ in range(burn_in):
        minus.sweep()
        plus.sweep()
    p = _p_of(coupling_array(fam, 2 * L))
    p[0] = 0.0
    pc = p / (2.0 - p)
    hrng = _generator(np.random.SeedSequence([int(seed), 2]))
    pool = hrng.random(1 << 20)
    cursor = 0
    buf_a = np.empty(1024, dtype=np.int64)
    buf_j = np.empty(1024, dtype=np.int64)

    ptr = np.zeros(n_w + 1, dtype=np.int64)
    lcs, hjs, frs = [], [], []
    Rw = np.zeros(n_w, dtype=np.int64)
    Nw = np.zeros(n_w, dtype=np.int64)
    R0w = np.zeros(n_w, dtype=np.int64)
    total = 0
    for m in range(n_w):
        minus.sweep()
        plus.sweep()
        while True:
            cnt, cur = CK.cross_edges(L, pc, pool, cursor, buf_a, buf_j)
            if cnt == -1:
                pool = np.concatenate([pool[cursor:], hrng.random(1 << 20)])
                cursor = 0
            elif cnt == -2:
                buf_a = np.empty(2 * buf_a.size, dtype=np.int64)
                buf_j = np.empty(2 * buf_j.size, dtype=np.int64)
            else:
                break
        cursor = cur
        ha = buf_a[:cnt].copy()
        hj = buf_j[:cnt].copy()
        lc, R, N, fr = CK.w_summary(minus.local_labels(), ha, hj)
        R0w[m] = CK.corank_against(plus.local_labels(), lc, hj, L)
        Rw[m], Nw[m] = R, N
        lcs.append(lc)
        hjs.append(hj)
        frs.append(fr)
        total += cnt
        ptr[m + 1] = total
    lcs = np.concatenate(lcs) if total else np.zeros(0, dtype=np.int64)
    hjs = np.concatenate(hjs) if total else np.zeros(0, dtype=np.int64)
    frs = np.concatenate(frs) if total else np.zeros(0, dtype=np.bool_)

    ids = _batches(n_w, n_batches)
    B = int(ids.max()) + 1
    counts = np.bincount(ids, minlength=B).astype(float)
    bsum = lambda v: np.bincount(ids, weights=np.asarray(v, dtype=float), minlength=B)
    k_b = bsum(np.exp2(R0w))
    K0 = _ratio_from_batches(k_b / counts, counts / counts, n_w)
    two_R = np.exp2(Rw.astype(float))
    mean_2R = batch_means(two_R, n_batches)

    # A(x, W) for W with R > 0 and N <= nmax
    sparse = np.flatnonzero((Rw > 0) & (Nw <= nmax))
    A_sp = np.empty((sparse.size, P), dtype=np.int8)
    for t, m in enumerate(sparse):
        s, e = ptr[m], ptr[m + 1]
        A_sp[t] = CK.panel_A(X, lcs[s:e], hjs[s:e], frs[s:e], L)

    h, xi_tail, tail_int, bound = {}, {}, {}, {}
    zsum = {}
    for n in ns:
        base = np.zeros((P, B))
        easy = (Rw == 0)
        base += bsum(easy)[None, :]
        sel = Nw[sparse] <= n
        if np.any(sel):
            vals = A_sp[sel].astype(float) * two_R[sparse[sel]][:, None]
            acc = np.zeros((B, P))
            np.add.at(acc, ids[sparse[sel]], vals)
            base += acc.T
        widx = np.flatnonzero(Nw > n)
        if widx.size:
            for pidx in range(P):
                x = X[pidx, :n]
                model = conditional_model(fam, L, x)
                ch = RCChain(model, np.random.SeedSequence([int(seed), 4, n, pidx]))
                for _ in range(alpha_burn_in):
                    ch.sweep()
                PL = np.empty((n_alpha, model.n + 2), dtype=np.int64)
                for s in range(n_alpha):
                    ch.sweep()
                    PL[s] = ch.local_labels()
                Y = CK.paired_integrand(x, n, L, ptr, lcs, hjs, widx, PL)
                base[pidx] += np.bincount(ids[widx], weights=Y, minlength=B)
        zsum[n] = base
        h[n] = _ratio_rows(base, k_b, counts, n_w)
        ind = (Nw > n).astype(float)
        xi_tail[n] = batch_means(ind, n_batches)
        tail_int[n] = _ratio_from_batches(bsum(ind * two_R) / counts, k_b / counts, n_w)
        bound[n] = xi_tail[n].mean * mean_2R.mean / K0.mean
    diff = {}
    for n in ns:
        if 2 * n in zsum:
            r, se = _ratio_rows(zsum[2 * n] - zsum[n], k_b, counts, n_w)
            diff[n] = (np.abs(r), se)
    extra = {"mean_H": float(ptr[-1] / n_w)}
    return HnPanel(L, ns, X, n_w, K0, mean_2R, xi_tail, tail_int, bound, h, diff, extra)


# --- beta scan -------------------------------------------------------------

def beta_scan(fam: CouplingFamily, beta_grid: Sequence[float], volumes: Sequence[int],
              sweeps: int, seed: int, burn_in: Optional[int] = None,
              boundary: str = "free") -> dict:
    """Largest-cluster fraction and P(origin in the largest cluster) per beta and volume.

    The crossing is the first grid interval where the fraction at the largest
    volume overtakes the fraction at the smallest; it is a finite-volume
    estimate only.
    """
    grid = [float(b) for b in beta_grid]
    if grid != sorted(grid):
        raise ValueError("beta grid must be sorted ascending")
    burn = sweeps // 5 if burn_in is None else burn_in
    rows = []
    for V in volumes:
        for k, b in enumerate(grid):
            cfg = RCConfig(0, int(V), fam.with_beta(b), q=2.0, boundary=boundary,
                           exterior="N", sweeps=sweeps, burn_in=burn, seed=seed + 1000 * k + V)
            recs = list(rc_mcmc(cfg))
            frac = batch_means([r.largest / V for r in recs])
            orig = batch_means([float(r.origin_size == r.largest) for r in recs])
            rows.append({"volume": int(V), "beta": b, "largest_fraction": frac.mean,
                         "largest_fraction_se": frac.std_error, "origin_in_largest": orig.mean,
                         "origin_in_largest_se": orig.std_error})
    crossing = None
    if len(volumes) >= 2:
        small, large = min(volumes), max(volumes)
        fs = {r["beta"]: r["largest_fraction"] for r in rows if r["volume"] == small}
        fl = {r["beta"]: r["largest_fraction"] for r in rows if r["volume"] == large}
        d = [fl[b] - fs[b] for b in grid]
        for i in range(1, len(grid)):
            if d[i - 1] < 0 <= d[i]:
                t = -d[i - 1] / (d[i] - d[i - 1])
                crossing = grid[i - 1] + t * (grid[i] - grid[i - 1])
                break
    return {"rows": rows, "crossing": crossing,
            "crossing_label": "finite-volume estimate" if crossing is not None else "no crossing in grid"}
