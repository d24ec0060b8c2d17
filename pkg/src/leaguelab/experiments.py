"""Reproducible scenario runs backing the acceptance checks and ``leaguelab reproduce``."""

from __future__ import annotations

import threading
import time

import numpy as np
from scipy.stats import spearmanr

from . import checkpoint
from .analysis import league_nash
from .config import ExperimentConfig
from .games import softmax
from .population import Agent, HyperparamVector, League
from .runtime import init_state, replay, run_league

# lamarckian-PBT scenario: pure paper in RPS_3 is beaten only by scissors
PAPER = (0.0, 1.0, 0.0)
BAD_LR = 1e-5
GOOD_LR = 1e-1
CORRUPTED = (3.0, 0.0, -3.0)  # mostly rock, which loses to paper


def pbt_config(seed: int, units: int = 5000, pbt: bool = True) -> ExperimentConfig:
    return ExperimentConfig().replace(**{
        "game.name": "rps", "game.k": 3,
        "population.N": 16, "population.sigma0": 0.1,
        "population.lr_bounds": [BAD_LR, 0.5], "population.entropy_bounds": [1e-4, 1e-3],
        "league.fixed_opponent": list(PAPER),
        "qd.enabled": False, "pbt.enabled": pbt,
        "runtime.seed": seed, "runtime.total_units": units,
        "runtime.checkpoint_every": units, "output.metrics_every": units,
    })


def pbt_league(config: ExperimentConfig) -> League:
    """Half the league learns at 1e-5 from near-uniform logits, half at 1e-1 from corrupted logits."""
    rng = np.random.default_rng([config.runtime.seed, 0])
    n = config.population.N
    agents = []
    for slot in range(n):
        bad = slot < n // 2
        logits = rng.normal(0.0, config.population.sigma0, 3) + (0.0 if bad else np.array(CORRUPTED))
        agents.append(Agent(
            id=f"a{slot}", logits=logits,
            hypers=HyperparamVector(BAD_LR if bad else GOOD_LR, 1e-4),
            rating=config.population.R0, slot=slot,
        ))
    return League(capacity=n, active=agents, hall_cap=config.population.hall_cap, next_id=n)


def exact_payoff_vs(agent: Agent, game, probs) -> float:
    return float(softmax(agent.logits) @ game.payoff @ np.asarray(probs, dtype=float))


def pbt_efficacy(seed: int, units: int = 5000, pbt: bool = True) -> dict:
    cfg = pbt_config(seed, units, pbt)
    state = init_state(cfg, pbt_league(cfg))
    run_league(cfg, state)
    pay = {a.slot: exact_payoff_vs(a, state.game, PAPER) for a in state.league.active}
    half = cfg.population.N // 2
    return {
        "seed": seed,
        "best": max(pay.values()),
        "best_bad_half": max(pay[s] for s in range(half)),
        "exploits": state.counters["exploits"],
    }


def coevolution_config(seed: int, units: int = 50_000, beta: float = 50.0) -> ExperimentConfig:
    return ExperimentConfig().replace(**{
        "game.name": "rps", "game.k": 5, "population.N": 20, "qd.beta": beta,
        "runtime.seed": seed, "runtime.total_units": units,
        "runtime.checkpoint_every": units, "output.metrics_every": units,
    })


def coevolution_run(seed: int, units: int = 50_000, beta: float = 50.0) -> dict:
    """One RPS_5 league run; returns archive metrics and the league Nash summary."""
    cfg = coevolution_config(seed, units, beta)
    t0 = time.perf_counter()
    state = run_league(cfg).state
    seconds = time.perf_counter() - t0
    nash = league_nash(state)
    return {
        "seed": seed, "beta": beta, "seconds": seconds,
        "coverage": state.archive.coverage(), "qd_score": state.archive.qd_score(),
        "support_size": len(nash["support"]),
        "distinct_support_cells": nash.get("distinct_support_cells", 0),
        "game_exploitability": nash["game_exploitability"],
        "nash_coverage": nash["coverage"],
    }


def asynchrony_run(seed: int, units: int = 4000, workers: int = 4) -> dict:
    """Multi-worker run: unit-count spread at each checkpoint and an exact commit-log replay."""
    cfg = ExperimentConfig().replace(**{
        "game.k": 5, "runtime.workers": workers, "runtime.seed": seed, "runtime.total_units": units,
        "runtime.checkpoint_every": max(1, units // 20), "output.metrics_every": units,
    })
    threads_seen: set = set()
    res = run_league(cfg, on_checkpoint=lambda s: threads_seen.add(threading.current_thread().name))
    spreads = [max(u) - min(u) for _, u in res.checkpoints]
    rebuilt = replay(init_state(cfg), res.state.commit_log)
    return {
        "seed": seed,
        "max_spread": max(spreads),
        "spreads": spreads,
        "committing_threads": len(threads_seen),
        "replay_equal": checkpoint.dumps(rebuilt) == checkpoint.dumps(res.state),
    }


def preemption_run(seed: int, units: int = 4000, gamma: float = 2.0, window: int = 250) -> dict:
    """Spearman correlation between final rating and units each slot received in the last window.

    Cumulative counts mix in every earlier tenant of a slot, whose rating is
    gone; the last checkpoint interval reflects the scheduler's current
    preference for the agents that are rated at the end.
    """
    cfg = ExperimentConfig().replace(**{
        "game.k": 5, "runtime.preemption_gamma": gamma, "runtime.seed": seed,
        "runtime.total_units": units, "runtime.checkpoint_every": window, "output.metrics_every": units,
    })
    res = run_league(cfg)
    (_, before), (_, after) = res.checkpoints[-2], res.checkpoints[-1]
    recent = np.subtract(after, before)
    ratings = [a.rating for a in sorted(res.state.league.active, key=lambda a: a.slot)]
    rho = spearmanr(ratings, recent).statistic
    return {"seed": seed, "spearman": float(rho), "recent_units": recent.tolist()}
