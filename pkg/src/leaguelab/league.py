"""Co-evolution machinery: Elo ratings, similarity matchmaking, matches, empirical payoffs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import InvalidInputError, NoDataError, NotFoundError, StateError
from .games import GameSpec
from .population import Agent, LeagueView

ELO_BASE = 10.0
ELO_SCALE = 400.0


def expected_score(r_a: float, r_b: float) -> float:
    return 1.0 / (1.0 + ELO_BASE ** ((r_b - r_a) / ELO_SCALE))


def elo_deltas(r_a: float, r_b: float, score_a: float, k: float) -> tuple:
    """Rating changes for both sides; they sum to zero up to rounding."""
    e_a = expected_score(r_a, r_b)
    d_a = k * (score_a - e_a)
    # written as -d_a rather than k*((1-s) - e_b) so the pair conserves exactly
    return d_a, -d_a


def payoff_to_score(payoff_a: float) -> float:
    return (payoff_a + 1.0) / 2.0


@dataclass
class RatingBook:
    ratings: dict
    K: float = 32.0
    frozen: set = field(default_factory=set)
    # points the frozen side would have moved; keeps the rating-sum audit closed
    frozen_charge: float = 0.0

    def update(self, a: str, b: str, score_a: float) -> tuple:
        for ident in (a, b):
            if ident not in self.ratings:
                raise NotFoundError(f"unknown agent {ident!r}")
        if not 0.0 <= score_a <= 1.0:
            raise InvalidInputError(f"score_a must be in [0, 1], got {score_a}")
        d_a, d_b = elo_deltas(self.ratings[a], self.ratings[b], score_a, self.K)
        for ident, d in ((a, d_a), (b, d_b)):
            if ident in self.frozen:
                self.frozen_charge += d
            else:
                self.ratings[ident] += d
        return d_a, d_b

    def total(self) -> float:
        return sum(r for ident, r in self.ratings.items() if ident not in self.frozen)


def update_ratings(book: RatingBook, a: str, b: str, score_a: float) -> RatingBook:
    book.update(a, b, score_a)
    return book


def _candidates(view: LeagueView):
    cache = view.cache
    if "cand" not in cache:
        if view.fixed:
            cache["cand"] = ([c.id for c in view.fixed], np.array([c.rating for c in view.fixed]), None)
        else:
            hall_ids, hall_ratings = view.hall_arrays()
            ids = [a.id for a in view.active] + hall_ids
            ratings = np.concatenate([[a.rating for a in view.active], hall_ratings])
            # active agents come first, so an agent's own index is its slot
            cache["cand"] = (ids, ratings, True)
    return cache["cand"]


def matchmaking_weights(view: LeagueView, agent: Agent, sigma_match: float):
    """Candidate ids and normalised sampling probabilities for ``agent``."""
    ids, ratings, own_first = _candidates(view)
    own = agent.slot if own_first and agent.active else None
    if own is not None and ids[own] != agent.id:
        own = ids.index(agent.id) if agent.id in ids else None
    if len(ids) - (own is not None) < 1:
        raise StateError(f"no opponent candidates for {agent.id!r}")
    z = (ratings - agent.rating) / sigma_match
    logw = -0.5 * z * z
    if own is not None:
        logw[own] = -np.inf
    w = np.exp(logw - logw.max())
    return ids, w / w.sum()


def sample_opponent(view: LeagueView, agent: Agent, sigma_match: float, rng: np.random.Generator) -> str:
    ids, probs = matchmaking_weights(view, agent, sigma_match)
    return ids[min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), len(ids) - 1)]


def sample_opponents(view: LeagueView, agent: Agent, sigma_match: float, n: int,
                     rng: np.random.Generator) -> tuple:
    """Draw ``n`` opponents with replacement; returns (ids, their matchmaking probabilities)."""
    ids, probs = matchmaking_weights(view, agent, sigma_match)
    idx = np.minimum(np.searchsorted(np.cumsum(probs), rng.random(n), side="right"), len(ids) - 1)
    return [ids[i] for i in idx], probs[idx]


def opponent_mixture(view: LeagueView, opponent_ids, weights) -> np.ndarray:
    """Probability-weighted average mixed strategy of the given opponents."""
    w = np.asarray(weights, dtype=float)
    mix = w @ np.array([view.get(i).policy for i in opponent_ids])
    return mix / w.sum()


@dataclass(frozen=True)
class MatchResult:
    a: str
    b: str
    payoff_a: float
    bd_a: tuple
    bd_b: tuple
    at: int
    seed: Optional[int] = None

    def __post_init__(self):
        if self.a == self.b:
            raise InvalidInputError("a match needs two distinct agents")
        if not (np.isfinite(self.payoff_a) and -1.0 <= self.payoff_a <= 1.0):
            raise InvalidInputError(f"payoff_a out of range: {self.payoff_a}")

    def at_time(self, at: int) -> "MatchResult":
        """Copy stamped with commit time ``at`` (already validated, so skips ``__post_init__``)."""
        new = object.__new__(MatchResult)
        new.__dict__.update(self.__dict__)
        new.__dict__["at"] = at
        return new

    def to_json(self) -> str:
        return json.dumps({
            "a": self.a, "b": self.b, "payoff_a": self.payoff_a,
            "bd_a": list(self.bd_a), "bd_b": list(self.bd_b), "at": self.at, "seed": self.seed,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "MatchResult":
        d = json.loads(line)
        return cls(d["a"], d["b"], d["payoff_a"], tuple(d["bd_a"]), tuple(d["bd_b"]), d["at"], d.get("seed"))


@njit(cache=True)
def _sample_episodes(p, q, u, payoff):
    """Inverse-CDF draws for both sides; returns (action counts a, action counts b, payoff sum)."""
    k = p.shape[0]
    cp = np.empty(k)
    cq = np.empty(k)
    acc_p = 0.0
    acc_q = 0.0
    for i in range(k):
        acc_p += p[i]
        acc_q += q[i]
        cp[i] = acc_p
        cq[i] = acc_q
    counts_a = np.zeros(k)
    counts_b = np.zeros(k)
    total = 0.0
    for e in range(u.shape[1]):
        # first index whose cumulative mass exceeds the draw, as searchsorted(side="right")
        ia = 0
        while ia < k and cp[ia] <= u[0, e]:
            ia += 1
        ib = 0
        while ib < k and cq[ib] <= u[1, e]:
            ib += 1
        ia = min(ia, k - 1)
        ib = min(ib, k - 1)
        counts_a[ia] += 1.0
        counts_b[ib] += 1.0
        total += payoff[ia, ib]
    return counts_a, counts_b, total


def play_match(game: GameSpec, agent_a: Agent, agent_b: Agent, episodes: int,
               rng: np.random.Generator, at: int = 0, seed: Optional[int] = None,
               exact: bool = False) -> MatchResult:
    """Play ``episodes`` one-shot games between two policies.

    Pure: bookkeeping such as ``matches_played`` is applied when the result is
    committed to the league.
    """
    if episodes < 1:
        raise InvalidInputError(f"episodes must be >= 1, got {episodes}")
    p = agent_a.policy
    q = agent_b.policy
    if exact:
        payoff = float(p @ game.payoff @ q)
        bd_a, bd_b = p @ game.features, q @ game.features
    else:
        counts_a, counts_b, total = _sample_episodes(p, q, rng.random((2, episodes)), game.payoff)
        payoff = total / episodes
        bd_a = counts_a @ game.features / episodes
        bd_b = counts_b @ game.features / episodes
    return MatchResult(agent_a.id, agent_b.id, min(1.0, max(-1.0, payoff)),
                       tuple(bd_a.tolist()), tuple(bd_b.tolist()), at, seed)


class PayoffTable:
    """Accumulated payoff sums and match counts per ordered pair."""

    def __init__(self):
        self._sums: dict = {}
        self._counts: dict = {}

    def record(self, result: MatchResult) -> "PayoffTable":
        key = (result.a, result.b)
        self._sums[key] = self._sums.get(key, 0.0) + result.payoff_a
        self._counts[key] = self._counts.get(key, 0) + 1
        return self

    def add(self, i: str, j: str, payoff_sum: float, count: int) -> None:
        """Bulk-record ``count`` matches of ``i`` against ``j`` totalling ``payoff_sum``."""
        key = (i, j)
        self._sums[key] = self._sums.get(key, 0.0) + payoff_sum
        self._counts[key] = self._counts.get(key, 0) + count

    def count(self, i: str, j: str) -> int:
        return self._counts.get((i, j), 0)

    def has(self, i: str, j: str) -> bool:
        return i == j or (i, j) in self._counts or (j, i) in self._counts

    def empirical_payoff(self, i: str, j: str) -> float:
        if i == j:
            return 0.0
        c = self._counts.get((i, j), 0) + self._counts.get((j, i), 0)
        if c == 0:
            raise NoDataError(f"no matches between {i!r} and {j!r}")
        return (self._sums.get((i, j), 0.0) - self._sums.get((j, i), 0.0)) / c

    def matrix(self, ids) -> tuple:
        """Antisymmetric payoff matrix over ``ids`` and the mask of pairs with data."""
        pos = {ident: n for n, ident in enumerate(ids)}
        n = len(ids)
        sums = np.zeros((n, n))
        counts = np.zeros((n, n))
        for (i, j), c in self._counts.items():
            a, b = pos.get(i), pos.get(j)
            if a is None or b is None or a == b:
                continue
            sums[a, b] += self._sums[(i, j)]
            counts[a, b] += c
        total = counts + counts.T
        net = sums - sums.T
        mask = total > 0
        A = np.zeros((n, n))
        np.divide(net, total, out=A, where=mask)
        np.fill_diagonal(mask, True)
        return A, mask

    def copy(self) -> "PayoffTable":
        t = PayoffTable()
        t._sums = dict(self._sums)
        t._counts = dict(self._counts)
        return t

    def to_list(self) -> list:
        return [[i, j, self._sums[(i, j)], self._counts[(i, j)]] for (i, j) in sorted(self._counts)]

    @classmethod
    def from_list(cls, rows) -> "PayoffTable":
        t = cls()
        for i, j, s, c in rows:
            t._sums[(i, j)] = s
            t._counts[(i, j)] = c
        return t

    def __eq__(self, other) -> bool:
        return isinstance(other, PayoffTable) and self.to_list() == other.to_list()


def record(table: PayoffTable, result: MatchResult) -> PayoffTable:
    return table.record(result)


def empirical_payoff(table: PayoffTable, i: str, j: str) -> float:
    return table.empirical_payoff(i, j)
