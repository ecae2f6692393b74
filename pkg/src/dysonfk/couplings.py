"""Interaction families J(k), their tails r_n and the one-point potential.

A family is stored unscaled together with the inverse temperature ``beta``;
every public quantity (``coupling_value``, ``tail_r``, ``one_point_potential``)
is returned already multiplied by ``beta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import zeta

__all__ = [
    "CouplingFamily",
    "dyson",
    "finite_range",
    "custom",
    "spin_word",
    "coupling_value",
    "coupling_array",
    "tail_r",
    "tail_array",
    "one_point_potential",
    "r_of_set",
    "condition_diagnostics",
    "family_from_config",
]

DYSON = "dyson"
FINITE = "finite"
CUSTOM = "custom"


@dataclass(frozen=True)
class CouplingFamily:
    """Unscaled ferromagnetic pair interaction J0(k) and its scale ``beta``.

    ``kind`` is one of ``"dyson"`` (J0(k) = k**-alpha, alpha > 1),
    ``"finite"`` (J0(k) = values[k], values[0] == 0) or ``"custom"``
    (``generator(k)`` with a certified tail bound ``tail_bound(n)`` for
    sum_{k>n} J0(k)).
    """

    kind: str
    beta: float = 1.0
    alpha: Optional[float] = None
    values: tuple = ()
    generator: Optional[Callable[[int], float]] = field(default=None, compare=False)
    tail_bound: Optional[Callable[[int], float]] = field(default=None, compare=False)
    description: str = ""

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError(f"beta must be a finite nonnegative real, got {self.beta!r}")
        if self.kind == DYSON:
            if self.alpha is None or not self.alpha > 1:
                raise ValueError(f"Dyson family needs alpha > 1 for summability, got {self.alpha!r}")
        elif self.kind == FINITE:
            vals = tuple(float(v) for v in self.values)
            if not vals:
                vals = (0.0,)
            if vals[0] != 0:
                raise ValueError("finite family must have J(0) = 0")
            if any(v < 0 or not math.isfinite(v) for v in vals):
                raise ValueError("finite family values must be finite and nonnegative")
            object.__setattr__(self, "values", vals)
        elif self.kind == CUSTOM:
            if self.generator is None or self.tail_bound is None:
                raise ValueError("custom family needs a generator and a tail bound")
        else:
            raise ValueError(f"unknown coupling kind {self.kind!r}")

    @property
    def range(self) -> Optional[int]:
        """Largest k with J0(k) > 0 for finite families, else None."""
        if self.kind != FINITE:
            return None
        nz = [k for k, v in enumerate(self.values) if v > 0]
        return nz[-1] if nz else 0

    def with_beta(self, beta: float) -> "CouplingFamily":
        return replace(self, beta=float(beta))

    def truncated(self, cutoff: int) -> "CouplingFamily":
        """Finite-range copy with J0(k) = 0 for k > cutoff."""
        if cutoff < 0:
            raise ValueError("cutoff must be nonnegative")
        vals = [0.0] + [_unscaled(self, k) for k in range(1, cutoff + 1)]
        return CouplingFamily(FINITE, beta=self.beta, values=tuple(vals))

    def label(self) -> str:
        if self.kind == DYSON:
            return f"dyson(alpha={self.alpha:g}, beta={self.beta:g})"
        if self.kind == FINITE:
            return f"finite(J={','.join(f'{v:g}' for v in self.values)}, beta={self.beta:g})"
        return f"custom({self.description or 'generator'}, beta={self.beta:g})"


def dyson(alpha: float, beta: float = 1.0) -> CouplingFamily:
    return CouplingFamily(DYSON, beta=float(beta), alpha=float(alpha))


def finite_range(values: Sequence[float], beta: float = 1.0) -> CouplingFamily:
    return CouplingFamily(FINITE, beta=float(beta), values=tuple(values))


def custom(generator, tail_bound, beta: float = 1.0, description: str = "") -> CouplingFamily:
    return CouplingFamily(CUSTOM, beta=float(beta), generator=generator,
                          tail_bound=tail_bound, description=description)


def spin_word(x: Iterable[int]) -> np.ndarray:
    """Validate and return a +-1 word as an int8 array."""
    arr = np.asarray(list(x) if not isinstance(x, np.ndarray) else x, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("spin word must be one-dimensional")
    if arr.size and not np.all(np.abs(arr) == 1):
        raise ValueError("spin word entries must be +1 or -1")
    return arr.astype(np.int8)


def _unscaled(fam: CouplingFamily, k: int) -> float:
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return 0.0
    if fam.kind == DYSON:
        return float(k) ** (-fam.alpha)
    if fam.kind == FINITE:
        return fam.values[k] if k < len(fam.values) else 0.0
    return float(fam.generator(k))


def coupling_value(fam: CouplingFamily, k: int) -> float:
    """beta * J0(k); zero at k = 0."""
    return fam.beta * _unscaled(fam, int(k))


def coupling_array(fam: CouplingFamily, kmax: int) -> np.ndarray:
    """Array of beta*J0(k) for k = 0..kmax."""
    out = np.zeros(kmax + 1)
    if kmax < 1:
        return out
    k = np.arange(1, kmax + 1, dtype=float)
    if fam.kind == DYSON:
        out[1:] = k ** (-fam.alpha)
    elif fam.kind == FINITE:
        m = min(kmax + 1, len(fam.values))
        out[:m] = fam.values[:m]
    else:
        out[1:] = [fam.generator(int(i)) for i in k]
    return fam.beta * out


@lru_cache(maxsize=65536)
def _dyson_tail_unscaled(alpha: float, n: int) -> float:
    # Hurwitz zeta: sum_{k>=n+1} k**-alpha
    return float(zeta(alpha, n + 1))


@lru_cache(maxsize=4096)
def _custom_tail_unscaled(fam: CouplingFamily, n: int, tol: float) -> float:
    terms = []
    k = n + 1
    while fam.tail_bound(k - 1) > tol:
        terms.append(float(fam.generator(k)))
        k += 1
        if k - n > 10**8:
            raise ValueError("custom tail did not certify within 1e8 terms")
    total = math.fsum(terms)
    # remainder is in [0, tail_bound]; report the midpoint
    return total + 0.5 * fam.tail_bound(k - 1)


def tail_r(fam: CouplingFamily, n: int, tol: float = 1e-12) -> float:
    """r_n = beta * sum_{k>n} J0(k), to absolute accuracy ``tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if fam.beta == 0:
        return 0.0
    if fam.kind == DYSON:
        return fam.beta * _dyson_tail_unscaled(fam.alpha, n)
    if fam.kind == FINITE:
        return fam.beta * math.fsum(fam.values[n + 1:])
    return fam.beta * _custom_tail_unscaled(fam, n, tol / fam.beta)


def tail_array(fam: CouplingFamily, nmax: int, tol: float = 1e-12) -> np.ndarray:
    """r_n for n = 0..nmax."""
    if fam.kind == DYSON and fam.beta > 0:
        n = np.arange(nmax + 1, dtype=float)
        return fam.beta * zeta(fam.alpha, n + 1)
    return np.array([tail_r(fam, n, tol) for n in range(nmax + 1)])


def one_point_potential(fam: CouplingFamily, x) -> float:
    """x0 * sum_{k=1}^{len-1} beta*J0(k) x_k (unseen coordinates omitted)."""
    x = spin_word(x)
    if x.size == 0:
        raise ValueError("one-point potential needs a nonempty word")
    if x.size == 1:
        return 0.0
    J = coupling_array(fam, x.size - 1)
    return float(x[0]) * float(np.dot(J[1:], x[1:].astype(float)))


def r_of_set(fam: CouplingFamily, C: Iterable[int], tol: float = 1e-12) -> float:
    """r(C) = sum_{n in C} r_n."""
    C = sorted(set(int(c) for c in C))
    if not C:
        return 0.0
    each = tol / len(C)
    return math.fsum(tail_r(fam, n, each) for n in C)


def condition_diagnostics(fam: CouplingFamily, N: int) -> dict:
    """Partial sums for the square-summability and Berbee conditions.

    Verdicts for Dyson families are analytic: square summable iff alpha > 3/2
    (or beta == 0); the Berbee series sum_n exp(-r_1-...-r_n) diverges iff
    alpha > 2, or alpha == 2 and beta <= 1.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    r = tail_array(fam, N)
    square_partial = float(4.0 * np.sum(r ** 2))
    berbee_partial = float(np.sum(np.exp(-np.cumsum(r[1:]))))

    tail_bound = None
    if fam.kind == DYSON:
        a, b = fam.alpha, fam.beta
        if b == 0:
            tail_bound, sq, berbee = 0.0, "yes", "yes"
        else:
            # r_n <= b n^{1-a}/(a-1), so sum_{n>N} 4 r_n^2 <= 4b^2 N^{3-2a}/((a-1)^2 (2a-3))
            tail_bound = (4 * b * b * N ** (3 - 2 * a) / ((a - 1) ** 2 * (2 * a - 3))
                          if a > 1.5 else math.inf)
            sq = "yes" if a > 1.5 else "no"
            if a > 2:
                berbee = "yes"
            elif a == 2:
                berbee = "yes" if b <= 1 else "no"
            else:
                berbee = "no"
    elif fam.kind == FINITE:
        tail_bound = 4.0 * math.fsum(tail_r(fam, n) ** 2 for n in range(N + 1, fam.range or 0))
        sq, berbee = "yes", "yes"
    else:
        sq, berbee = "unknown", "unknown"

    return {
        "N": int(N),
        "square_sum_partial": square_partial,
        "square_sum_tail_bound": tail_bound,
        "berbee_partial": berbee_partial,
        "verdicts": {"square_summable": sq, "berbee_divergent": berbee},
    }


def family_from_config(cfg: dict) -> CouplingFamily:
    """Build a family from ``key = value`` style settings.

    Recognised: ``coupling`` (dyson | finite), ``alpha``, ``beta``, ``J``
    (comma separated, starting at k = 0).
    """
    kind = str(cfg.get("coupling", DYSON)).strip().lower()
    beta = float(cfg.get("beta", 1.0))
    if kind == DYSON:
        if "alpha" not in cfg:
            raise ValueError("alpha: required for coupling = dyson")
        return dyson(float(cfg["alpha"]), beta)
    if kind == FINITE:
        raw = cfg.get("J")
        if raw is None:
            raise ValueError("J: required for coupling = finite")
        vals = [float(v) for v in str(raw).split(",") if v.strip()] if isinstance(raw, str) else list(raw)
        return finite_range(vals, beta)
    raise ValueError(f"coupling: unknown kind {kind!r}")
