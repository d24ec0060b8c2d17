"""Post-hoc league analysis: the Nash distribution over league members."""

from __future__ import annotations

import warnings

import numpy as np

from .gametheory import empirical_game, fictitious_play, mixture_strategy, nash_support
from .games import softmax
from .qd import discretize
from .runtime import STREAM_EVAL, LeagueState, stream_rng


def league_members(state: LeagueState, population: str = "all") -> list:
    league = state.league
    return list(league.active) + (list(league.hall) if population == "all" else [])


def fill_missing(table, members, game, episodes: int, rng: np.random.Generator) -> int:
    """Play sampled evaluation matches for every member pair without data. Returns pairs filled."""
    ids = [m.id for m in members]
    missing = [(i, j) for i in range(len(ids)) for j in range(i + 1, len(ids)) if not table.has(ids[i], ids[j])]
    if not missing or episodes < 1:
        return 0
    cdf = np.cumsum(np.array([softmax(m.logits) for m in members]), axis=1)
    cdf[:, -1] = np.inf
    pairs = np.array(missing)
    for chunk in np.array_split(pairs, max(1, len(pairs) // 4096)):
        u = rng.random((2, len(chunk), episodes))
        acts_a = (u[0][:, :, None] >= cdf[chunk[:, 0]][:, None, :]).sum(axis=2)
        acts_b = (u[1][:, :, None] >= cdf[chunk[:, 1]][:, None, :]).sum(axis=2)
        sums = game.payoff[acts_a, acts_b].sum(axis=1)
        for (i, j), s in zip(chunk, sums):
            table.add(ids[i], ids[j], float(s) / episodes, 1)
    return len(missing)


def league_nash(state: LeagueState, population: str | None = None, fill_episodes: int | None = None,
                max_iters: int | None = None, tol: float | None = None, theta: float | None = None) -> dict:
    """Nash distribution of the league's empirical game, plus where its support sits.

    Pairs that never met are filled by evaluation matches on a copy of the
    payoff table (``fill_episodes`` = 0 disables filling). The distribution is
    only reported when pair coverage reaches ``nash.min_coverage``.
    """
    cfg = state.config.nash
    population = population or cfg.population
    fill_episodes = cfg.fill_episodes if fill_episodes is None else fill_episodes
    members = league_members(state, population)
    ids = [m.id for m in members]
    table = state.table.copy()
    coverage_before = empirical_game(table, ids).coverage
    filled = 0
    if coverage_before < 1.0 and fill_episodes > 0:
        filled = fill_missing(table, members, state.game, fill_episodes,
                              stream_rng(state.config.runtime.seed, STREAM_EVAL, state.clock))
    eg = empirical_game(table, ids)
    out = {"ids": ids, "coverage": eg.coverage, "coverage_before_fill": coverage_before,
           "pairs_filled": filled, "probs": None, "exploitability": None, "support": [],
           "support_cells": [], "game_exploitability": None, "warning": None}
    if eg.coverage < cfg.min_coverage:
        out["warning"] = f"coverage {eg.coverage:.3f} below {cfg.min_coverage}; Nash not reported"
        return out
    nash = fictitious_play(eg.A, max_iters or cfg.max_iters, tol or cfg.tol)
    theta = theta or cfg.theta or 1.0 / (4 * len(ids))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        support, warned = nash_support(nash, theta, ids)
    by_id = {m.id: m for m in members}
    R = state.config.qd.R
    features = state.game.features
    cells = []
    for ident in support:
        m = by_id[ident]
        bd = m.bd if m.bd is not None else softmax(m.logits) @ features
        cells.append(discretize(bd, R))
    policies = np.array([softmax(m.logits) for m in members])
    mix = mixture_strategy(policies, nash.probs)
    out.update({
        "probs": nash.probs.tolist(),
        "exploitability": nash.exploitability,
        "iterations_used": nash.iterations_used,
        "theta": theta,
        "support": support,
        "support_cells": [list(c) for c in cells],
        "distinct_support_cells": len(set(cells)),
        "game_exploitability": float((state.game.payoff @ mix).max()),
        "warning": str(caught[0].message) if warned and caught else None,
    })
    return out
