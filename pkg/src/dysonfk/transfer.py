"""Range-m truncation of the transfer operator on one-sided spin words.

States are words w = (w_0, ..., w_{m-1}) indexed by sum_i bit(w_i) 2^i with
+1 -> bit 1.  Prepending a symbol a gives the word a.w of length m+1 whose
first m symbols (front) have index bit(a) + 2*(w mod 2^{m-1}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .couplings import CouplingFamily, coupling_array

__all__ = [
    "MAX_MEMORY",
    "TransferMatrix",
    "NotConverged",
    "build_transfer_matrix",
    "apply_transfer",
    "leading_eigenpair",
    "power_iteration",
    "doeblin_g",
    "eigenfunction_profile",
    "state_word",
]

MAX_MEMORY = 24


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    """entries[w, b] = exp(phi(a.w)) with a = -1 for b = 0 and a = +1 for b = 1."""

    memory: int
    entries: np.ndarray
    front: np.ndarray

    @property
    def n_states(self) -> int:
        return 1 << self.memory


class NotConverged(RuntimeError):
    def __init__(self, lam, h, residual, iterations):
        super().__init__(f"power iteration stopped at residual {residual:.3e} after {iterations} iterations")
        self.lam = lam
        self.h = h
        self.residual = residual
        self.iterations = iterations


def state_word(index: int, m: int) -> np.ndarray:
    """Spin word of length m for a state index."""
    bits = (int(index) >> np.arange(m)) & 1
    return (2 * bits - 1).astype(np.int8)


def _front_index(m: int) -> np.ndarray:
    w = np.arange(1 << m, dtype=np.int64)
    low = w & ((1 << (m - 1)) - 1) if m > 1 else np.zeros_like(w)
    return np.stack([2 * low, 1 + 2 * low], axis=1)


def build_transfer_matrix(fam: CouplingFamily, m: int) -> TransferMatrix:
    if not (isinstance(m, (int, np.integer)) and 1 <= m <= MAX_MEMORY):
        raise ValueError(f"memory m must be an integer in [1, {MAX_MEMORY}], got {m!r}")
    m = int(m)
    J = coupling_array(fam, m)
    w = np.arange(1 << m, dtype=np.int64)
    field = np.zeros(1 << m)
    for k in range(1, m + 1):
        if J[k] != 0.0:
            field += J[k] * (2.0 * ((w >> (k - 1)) & 1) - 1.0)
    entries = np.exp(np.stack([-field, field], axis=1))
    return TransferMatrix(m, entries, _front_index(m))


def apply_transfer(M: TransferMatrix, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (M.n_states,):
        raise ValueError(f"table has shape {f.shape}, expected ({M.n_states},)")
    return M.entries[:, 0] * f[M.front[:, 0]] + M.entries[:, 1] * f[M.front[:, 1]]


def leading_eigenpair(M: TransferMatrix, tol: float = 1e-12, max_iters: int = 100000):
    """Power iteration from the all-ones table.

    Returns (lambda, h, residual) with max h = 1 and residual the relative
    sup-norm of L h - lambda h.  Raises NotConverged (carrying the last
    iterate) if ``tol`` is not reached within ``max_iters``.
    """
    lam, h, res, _ = power_iteration(M, tol, max_iters)
    return lam, h, res


def power_iteration(M: TransferMatrix, tol: float = 1e-12, max_iters: int = 100000):
    """leading_eigenpair plus the number of iterations used."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    h = np.ones(M.n_states)
    lam = np.nan
    res = np.inf
    for it in range(1, max_iters + 1):
        v = apply_transfer(M, h)
        lam = float(v.max())
        res = float(np.max(np.abs(v - lam * h)) / lam)
        if res <= tol:
            return lam, h, res, it
        h = v / lam
    raise NotConverged(lam, h, res, max_iters)


def doeblin_g(M: TransferMatrix, lam: float, h) -> np.ndarray:
    """g(a.w) indexed by bit(a) + 2*w; sums to one over a for an exact eigenpair."""
    h = np.asarray(h, dtype=float)
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if h.shape != (M.n_states,) or np.any(h <= 0):
        raise ValueError("h must be a strictly positive table over the states")
    g = M.entries * h[M.front] / (lam * h[:, None])
    return g.reshape(-1)


def eigenfunction_profile(h, m: int) -> list:
    """var_k(h) for k = 0..m: largest spread of h among states sharing the first k symbols."""
    h = np.asarray(h, dtype=float)
    if h.shape != (1 << m,):
        raise ValueError("h must have 2^m entries")
    out = []
    for k in range(m + 1):
        blocks = h.reshape(1 << (m - k), 1 << k)
        out.append(float(np.max(blocks.max(axis=0) - blocks.min(axis=0))))
    return out
