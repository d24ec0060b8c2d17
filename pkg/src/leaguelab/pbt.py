"""Outer loop: readiness gating, binary tournaments, exploit and explore."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Callable, Optional

import numpy as np

from .config import PbtConfig
from .errors import InvalidInputError, NotFoundError, StateError
from .population import (
    HYPER_NAMES, HyperBounds, HyperparamVector, League, LeagueView, freeze_to_hall_of_fame, log_uniform,
)


def ready(agent, now: int, config: PbtConfig) -> bool:
    return (now - agent.last_exploit_at >= config.ready_interval
            and agent.matches_played - agent.matches_at_exploit >= config.min_matches)


def id_order(agent_id: str) -> tuple:
    digits = agent_id.lstrip("abcdefghijklmnopqrstuvwxyz")
    return (int(digits) if digits.isdigit() else math.inf, agent_id)


def tournament_select(view: LeagueView, rng: np.random.Generator,
                      fitness: Optional[Callable] = None, contestant: Optional[str] = None) -> tuple:
    """Binary tournament over active agents; returns ``(winner_id, loser_id)``.

    With ``contestant`` set, that agent meets one uniformly drawn rival;
    otherwise both entrants are drawn uniformly without replacement. Higher
    fitness (rating by default) wins; ties go to fewer matches played, then
    to the lower id.
    """
    active = view.active
    n = len(active)
    if n < 2:
        raise StateError(f"tournament needs >= 2 active agents, have {n}")
    if contestant is None:
        i = int(rng.integers(n))
    else:
        i = next((s for s, a in enumerate(active) if a.id == contestant), None)
        if i is None:
            raise NotFoundError(f"agent {contestant!r} is not active")
    j = int(rng.integers(n - 1))
    if j >= i:
        j += 1
    a, b = active[i], active[j]
    fit = fitness or (lambda agent: agent.rating)
    fa, fb = fit(a), fit(b)
    if fa != fb:
        return (a.id, b.id) if fa > fb else (b.id, a.id)
    if a.matches_played != b.matches_played:
        return (a.id, b.id) if a.matches_played < b.matches_played else (b.id, a.id)
    return (a.id, b.id) if id_order(a.id) < id_order(b.id) else (b.id, a.id)


def explore(hypers: HyperparamVector, bounds: HyperBounds, config: PbtConfig,
            rng: np.random.Generator) -> HyperparamVector:
    values = {}
    for name in HYPER_NAMES:
        lo, hi = getattr(bounds, name)
        if rng.random() < config.resample_prob:
            v = log_uniform(lo, hi, rng)
        else:
            v = getattr(hypers, name) * config.perturb_factors[int(rng.integers(2))]
        values[name] = min(hi, max(lo, v))
    return HyperparamVector(**values)


def exploit(league: League, winner_id: str, loser_id: str, now: int,
            rng: Optional[np.random.Generator] = None) -> tuple:
    """Overwrite the loser with the winner's trained parameters.

    The loser's pre-overwrite self goes to the hall of fame and its slot gets
    a fresh id. Returns ``(new_id, snapshot_id)``; ``snapshot_id`` is None if
    reservoir eviction discarded the frozen copy.
    """
    if winner_id == loser_id:
        raise InvalidInputError("winner and loser must differ")
    winner = league.get(winner_id)
    loser = league.get(loser_id)
    if not (winner.active and loser.active):
        raise NotFoundError("exploit needs two active agents")
    snap_id = freeze_to_hall_of_fame(league, loser_id, now, rng)
    child = replace(
        loser,
        id=league.new_id("a"),
        logits=winner.logits,
        rating=winner.rating,
        bd=winner.bd,
        born_at=now,
        last_exploit_at=now,
        matches_at_exploit=loser.matches_played,
    )
    league.put(child)
    league.record(child.id, winner_id, "exploit", now)
    league.record(child.id, loser_id, "replaces", now)
    return child.id, snap_id
