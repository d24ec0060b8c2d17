"""Nash distributions over empirical league games.

Payoff matrices here are antisymmetric, so the game value is 0 and the
exploitability of a mixture ``p`` is simply ``max_i (A p)_i``.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import InvalidInputError, NumericError
from .league import PayoffTable


@dataclass(frozen=True, eq=False)
class EmpiricalGame:
    ids: list
    A: np.ndarray
    mask: np.ndarray
    coverage: float

    @property
    def missing(self) -> list:
        rows, cols = np.nonzero(~self.mask)
        return [(self.ids[i], self.ids[j]) for i, j in zip(rows, cols) if i < j]


@dataclass(frozen=True, eq=False)
class NashDistribution:
    probs: np.ndarray
    exploitability: float
    iterations_used: int
    ids: Optional[list] = field(default=None)

    def as_dict(self) -> dict:
        return {
            "ids": self.ids,
            "probs": self.probs.tolist(),
            "exploitability": self.exploitability,
            "iterations_used": self.iterations_used,
        }


def empirical_game(table: PayoffTable, ids) -> EmpiricalGame:
    """Payoff matrix over ``ids``; pairs without data are 0 and flagged in ``mask``."""
    ids = list(ids)
    A, mask = table.matrix(ids)
    n = len(ids)
    pairs = n * (n - 1) // 2
    covered = (int(mask.sum()) - n) // 2
    return EmpiricalGame(ids, A, mask, 1.0 if pairs == 0 else covered / pairs)


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"payoff matrix must be square, got shape {A.shape}")
    return A


def _as_simplex(p, n: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (n,):
        raise InvalidInputError(f"strategy has shape {p.shape}, expected ({n},)")
    if p.min() < -1e-12 or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError("strategy is not a probability vector")
    return p


def best_response(A, p) -> tuple:
    A = _as_matrix(A)
    v = A @ _as_simplex(p, A.shape[0])
    i = int(np.argmax(v))  # first maximum: lowest-index tie-break
    return i, float(v[i])


def exploitability(A, p) -> float:
    return best_response(A, p)[1]


@njit(cache=True)
def _fp_kernel(cols, counts, v, br, t, max_iters, tol):
    # runs until the running-sum test passes (or max_iters); returns (next br, t)
    n = v.shape[0]
    while t < max_iters:
        counts[br] += 1.0
        row = cols[br]
        for i in range(n):
            v[i] += row[i]
        t += 1
        br = 0
        for i in range(1, n):
            if v[i] > v[br]:
                br = i
        if v[br] <= tol * t:
            break
    return br, t


def fictitious_play(A, max_iters: int = 100_000, tol: float = 1e-3) -> NashDistribution:
    """Symmetric fictitious play; returns the time-averaged strategy.

    Both players of a symmetric game share one history, so a single count
    vector is kept. ``A @ counts`` is maintained incrementally.
    """
    A = _as_matrix(A)
    if not np.array_equal(A, -A.T):
        raise InvalidInputError("fictitious play needs an antisymmetric matrix")
    if max_iters < 1 or tol <= 0:
        raise InvalidInputError("need max_iters >= 1 and tol > 0")
    n = A.shape[0]
    cols = np.ascontiguousarray(A.T)
    counts = np.zeros(n)
    v = np.zeros(n)
    br = int(np.argmax(A.sum(axis=1)))  # best response to uniform
    t = 0
    while t < max_iters:
        br, t = _fp_kernel(cols, counts, v, br, t, max_iters, tol)
        # the running sums can differ from the exact value in the last bits; confirm before stopping
        if exploitability(A, counts / t) <= tol:
            break
    probs = counts / t
    return NashDistribution(probs, exploitability(A, probs), t)


def support_enum_oracle(A) -> NashDistribution:
    """Exact Nash strategy of a small symmetric zero-sum game by support enumeration."""
    A = _as_matrix(A)
    n = A.shape[0]
    if n > 6:
        raise InvalidInputError(f"support enumeration is limited to n <= 6, got {n}")
    tried = 0
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            tried += 1
            s = list(support)
            # unknowns: p_S and the value v; rows: (A p)_i - v = 0 for i in S, sum p = 1
            M = np.zeros((size + 1, size + 1))
            M[:size, :size] = A[np.ix_(s, s)]
            M[:size, size] = -1.0
            M[size, :size] = 1.0
            rhs = np.zeros(size + 1)
            rhs[size] = 1.0
            try:
                sol = np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)) or sol[:size].min() < -1e-12:
                continue
            p = np.zeros(n)
            p[s] = np.clip(sol[:size], 0.0, None)
            p /= p.sum()
            value = float((A @ p).max())
            if value <= 1e-9:
                return NashDistribution(p, value, tried)
    raise NumericError("support enumeration found no verifiable equilibrium")


def nash_support(dist: NashDistribution, theta: Optional[float] = None, ids=None) -> tuple:
    """Members with probability above ``theta``, most probable first.

    Returns ``(ids, warned)``; ``warned`` is True when nothing cleared the
    threshold and the single most probable member is returned instead.
    """
    probs = dist.probs
    ids = list(ids if ids is not None else (dist.ids or range(len(probs))))
    if theta is None:
        theta = 1.0 / (4 * len(probs))
    if not 0 < theta < 1:
        raise InvalidInputError(f"theta must be in (0, 1), got {theta}")
    order = sorted(range(len(probs)), key=lambda i: (-probs[i], i))
    chosen = [ids[i] for i in order if probs[i] > theta]
    if chosen:
        return chosen, False
    warnings.warn(f"no member above theta={theta}; returning the top member only", stacklevel=2)
    return [ids[order[0]]], True


def mixture_strategy(policies, weights) -> np.ndarray:
    """Aggregate mixed strategy of agents played with the given weights."""
    return np.asarray(weights, dtype=float) @ np.asarray(policies, dtype=float)
