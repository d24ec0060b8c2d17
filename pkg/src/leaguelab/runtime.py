"""Asynchronous steady-state league engine.

One scheduling unit is: pick an agent, train it for a burst against sampled
opponents, play one match, then commit ratings, payoffs, QD bookkeeping and a
possible PBT exploit. Workers take a snapshot, compute off-store and commit
through a single lock; nothing ever waits for the whole population.

All randomness for unit ``u`` comes from generators seeded by
``(root_seed, stream, u)``, so a run is reproducible from the root seed and
the clock alone.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import qd
from .config import ExperimentConfig
from .errors import LeagueError, NotFoundError
from .games import GameSpec, make_game, softmax
from .learner import ascend
from .league import (
    MatchResult, PayoffTable, elo_deltas, opponent_mixture, payoff_to_score, play_match, sample_opponents,
)
from .pbt import explore, exploit, ready, tournament_select
from .population import Agent, HyperBounds, League, LeagueView, spawn_initial

log = logging.getLogger(__name__)

STREAM_INIT = 0
STREAM_UNIT = 1
STREAM_COMMIT = 2
STREAM_CRITERIA = 3
STREAM_EVAL = 4


def stream_rng(seed: int, stream: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, stream, index])


class UnitError(LeagueError):
    def __init__(self, ticket: int, agent_id: str, cause: Exception):
        self.ticket = ticket
        self.agent_id = agent_id
        super().__init__(f"unit {ticket} (agent {agent_id}): {type(cause).__name__}: {cause}")


@dataclass
class Proposal:
    """Everything a unit computed off-store; committing it is deterministic."""

    ticket: int
    agent_id: str
    logits: np.ndarray
    result: MatchResult
    opponent_rating: float

    def to_dict(self) -> dict:
        r = self.result
        return {
            "ticket": self.ticket, "agent": self.agent_id, "logits": self.logits.tolist(),
            "opponent_rating": self.opponent_rating,
            "match": {"a": r.a, "b": r.b, "payoff_a": r.payoff_a, "bd_a": list(r.bd_a),
                      "bd_b": list(r.bd_b), "at": r.at, "seed": r.seed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Proposal":
        m = d["match"]
        result = MatchResult(m["a"], m["b"], m["payoff_a"], tuple(m["bd_a"]), tuple(m["bd_b"]), m["at"], m["seed"])
        return cls(d["ticket"], d["agent"], np.array(d["logits"], dtype=float), result, d["opponent_rating"])


@dataclass(eq=False)
class LeagueState:
    config: ExperimentConfig
    game: GameSpec
    league: League
    table: PayoffTable
    archive: qd.Archive
    clock: int = 0
    units: list = field(default_factory=list)
    bd_windows: list = field(default_factory=list)
    sat_history: list = field(default_factory=list)
    counters: dict = field(default_factory=lambda: {"exploits": 0, "stale": 0, "adaptations": 0})
    commit_log: list = field(default_factory=list)
    match_log: list = field(default_factory=list)

    def snapshot(self) -> LeagueView:
        return self.league.snapshot()


def build_game(config: ExperimentConfig) -> GameSpec:
    g = config.game
    return make_game(g.name, k=g.k, soldiers=g.soldiers, fields=g.fields, seed=g.seed, cap=g.cap)


def fixed_agent(probs, rating: float) -> Agent:
    """A frozen opponent playing the given mixed strategy (zeros floored at 1e-30)."""
    p = np.maximum(np.asarray(probs, dtype=float), 1e-30)
    return Agent(id="fixed0", logits=np.log(p), hypers=None, rating=rating, active=False)


def init_state(config: ExperimentConfig, league: Optional[League] = None) -> LeagueState:
    game = build_game(config)
    seed = config.runtime.seed
    if league is None:
        league = spawn_initial(config.population, stream_rng(seed, STREAM_INIT), game.k)
    if config.league.fixed_opponent is not None and not league.fixed:
        if len(config.league.fixed_opponent) != game.k:
            raise NotFoundError("league.fixed_opponent length must equal the number of pure strategies")
        league.fixed.append(fixed_agent(config.league.fixed_opponent, config.population.R0))
        league.reindex()
    archive = qd.Archive(game.bd_dim, config.qd.R)
    if config.qd.enabled:
        rng = stream_rng(seed, STREAM_CRITERIA)
        view = league.snapshot()
        for agent in list(league.active):
            league.put(replace(agent, criterion=qd.initial_criterion(agent, view, archive, rng, config.qd.radius)))
    n = league.capacity
    return LeagueState(
        config=config, game=game, league=league, table=PayoffTable(), archive=archive,
        units=[0] * n,
        bd_windows=[deque(maxlen=config.qd.bd_window) for _ in range(n)],
        sat_history=[deque(maxlen=config.qd.window) for _ in range(n)],
    )


def pick_next_agent(view: LeagueView, rng: np.random.Generator, preemption_gamma: float) -> str:
    """Sample an active agent with odds exp(gamma * rank percentile), best rank = 1."""
    active = view.active
    n = len(active)
    if n == 1:
        rng.random()
        return active[0].id
    ratings = np.array([a.rating for a in active])
    pos = np.empty(n)
    pos[np.argsort(ratings, kind="stable")] = np.arange(n)
    w = np.exp(preemption_gamma * pos / (n - 1))
    i = int(np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right"))
    return active[min(i, n - 1)].id


def compute_unit(state: LeagueState, view: LeagueView, agent_id: str, rng: np.random.Generator,
                 ticket: int) -> Proposal:
    """Learner burst plus one match, from a snapshot only."""
    cfg = state.config
    game = state.game
    agent = view.get(agent_id)
    opp_ids, probs = sample_opponents(view, agent, cfg.league.sigma_match, cfg.league.opponents_per_burst, rng)
    mix = opponent_mixture(view, opp_ids, probs)
    mq = game.payoff @ mix
    pull = None
    if cfg.qd.enabled and cfg.qd.beta > 0 and agent.criterion is not None:
        extra, pull = qd.niche_terms(agent.criterion, view, game, cfg.qd.beta * qd.RATING_TO_PAYOFF, cfg.qd.R)
        mq = mq + extra
    logits = ascend(agent.logits, mq, agent.hypers.learning_rate,
                    agent.hypers.entropy_coeff, cfg.learner.steps_per_burst, pull)
    trained = agent.evolve(logits=logits)
    opponent = view.get(opp_ids[0])
    result = play_match(game, trained, opponent, cfg.league.episodes, rng,
                        at=ticket, seed=ticket, exact=cfg.league.exact)
    return Proposal(ticket, agent_id, trained.logits, result, opponent.rating)


def _fitness_fn(state: LeagueState):
    cfg = state.config.qd
    if not cfg.enabled or cfg.beta == 0:
        return None
    league, table = state.league, state.table
    return lambda a: qd.shaped_fitness(a, a.criterion, table, league, cfg.beta, cfg.R)


def _retarget_all(state: LeagueState, renames: dict) -> None:
    league = state.league
    for agent in list(league.active):
        crit = agent.criterion
        if crit is None:
            continue
        new = qd.retarget(crit, renames, league, agent)
        if new != crit:
            league.put(replace(agent, criterion=new))


class _LazyRng:
    """Commit-stream generator, created only if a commit actually draws."""

    def __init__(self, seed: int, ticket: int):
        self._key = (seed, ticket)
        self._gen = None

    def __getattr__(self, name):
        if self._gen is None:
            self._gen = stream_rng(self._key[0], STREAM_COMMIT, self._key[1])
        return getattr(self._gen, name)


def _window_mean(window) -> np.ndarray:
    # same arithmetic as np.mean(window, axis=0), without the generic dispatch
    return np.add.reduce(np.array(window), axis=0) / len(window)


def commit(state: LeagueState, proposal: Proposal) -> None:
    """Apply a proposal under the writer lock (or sequentially during replay)."""
    cfg = state.config
    league = state.league
    now = state.clock
    rng = _LazyRng(cfg.runtime.seed, proposal.ticket)

    state.commit_log.append(proposal)
    agent = league._index.get(proposal.agent_id)
    if agent is None or not agent.active:
        # exploited while this unit was in flight: the burst trained a dead incarnation
        state.counters["stale"] += 1
        state.clock += 1
        return
    slot = agent.slot
    result = proposal.result.at_time(now)
    state.match_log.append(result)
    state.table.record(result)

    opp = league._index.get(result.b)
    # an opponent that left the league mid-flight is rated at its snapshot-time value
    opp_rating = opp.rating if opp is not None else proposal.opponent_rating
    d_a, d_b = elo_deltas(agent.rating, opp_rating, payoff_to_score(result.payoff_a), cfg.league.K)

    window = state.bd_windows[slot]
    window.append(result.bd_a)
    bd = _window_mean(window)
    agent = agent.evolve(logits=proposal.logits, rating=agent.rating + d_a,
                         matches_played=agent.matches_played + 1, bd=bd)
    league.put(agent)
    if opp is not None and opp.active:
        ow = state.bd_windows[opp.slot]
        ow.append(result.bd_b)
        league.put(opp.evolve(rating=opp.rating + d_b, matches_played=opp.matches_played + 1,
                              bd=_window_mean(ow)))
    else:
        league.frozen_charge += d_b

    state.archive.insert(agent.id, bd, agent.rating)

    qcfg = cfg.qd
    if qcfg.enabled and agent.criterion is not None:
        hist = state.sat_history[slot]
        hist.append(qd.criterion_satisfaction(agent, agent.criterion, state.table, league, qcfg.R))
        if qcfg.adapt:
            crit, event = qd.adapt_criterion(agent, league, state.table, rng, hist, state.archive,
                                             qcfg.s_hi, qcfg.s_lo, qcfg.window, qcfg.radius)
            if event is not None:
                agent = replace(agent, criterion=crit)
                league.put(agent)
                hist.clear()
                state.counters["adaptations"] += 1
                league.record(agent.id, "", "criterion", now, f"{event}: {qd.criterion_to_dict(crit)}")

    pcfg = cfg.pbt
    if pcfg.enabled and ready(agent, now, pcfg):
        winner_id, loser_id = tournament_select(league, rng, _fitness_fn(state), contestant=agent.id)
        if loser_id == agent.id:
            winner = league.get(winner_id)
            hall_before = {h.id for h in league.hall}
            new_id, snap_id = exploit(league, winner_id, loser_id, now, rng)
            child = league.get(new_id)
            hypers = explore(winner.hypers, HyperBounds.from_config(cfg.population), pcfg, rng)
            league.put(replace(child, hypers=hypers))
            state.bd_windows[slot] = deque(state.bd_windows[winner.slot], maxlen=qcfg.bd_window)
            state.sat_history[slot].clear()
            state.counters["exploits"] += 1
            renames = {loser_id: snap_id} if snap_id is not None else {}
            for gone in hall_before - {h.id for h in league.hall}:
                renames.setdefault(gone, None)
            _retarget_all(state, renames)

    state.units[slot] += 1
    state.clock += 1


def run_unit(state: LeagueState, agent_id: Optional[str] = None,
             rng: Optional[np.random.Generator] = None) -> LeagueState:
    ticket = state.clock
    if rng is None:
        rng = stream_rng(state.config.runtime.seed, STREAM_UNIT, ticket)
    view = state.snapshot()
    if agent_id is None:
        agent_id = pick_next_agent(view, rng, state.config.runtime.preemption_gamma)
    try:
        commit(state, compute_unit(state, view, agent_id, rng, ticket))
    except LeagueError as exc:
        raise UnitError(ticket, agent_id, exc) from exc
    return state


def check_invariants(state: LeagueState, previous: Optional[qd.Archive] = None) -> list:
    """Return violated invariants (empty when the state is sound).

    ``previous`` is an earlier copy of the archive; every cell it held must
    still be occupied with a quality at least as high.
    """
    bad = []
    lg = state.league
    if len(lg.active) != lg.capacity:
        bad.append(f"population size {len(lg.active)} != {lg.capacity}")
    if [a.slot for a in lg.active] != list(range(len(lg.active))):
        bad.append("active slots out of order")
    if len({a.id for a in lg.active}) != len(lg.active):
        bad.append("duplicate active ids")
    if len(lg.hall) > lg.hall_cap:
        bad.append(f"hall of fame {len(lg.hall)} exceeds cap {lg.hall_cap}")
    bounds = HyperBounds.from_config(state.config.population)
    for a in lg.active:
        if not bounds.contains(a.hypers):
            bad.append(f"{a.id} hyperparameters out of bounds: {a.hypers}")
        if not np.all(np.isfinite(a.logits)):
            bad.append(f"{a.id} has non-finite logits")
        if a.criterion is not None and qd.dangling(a.criterion, lg):
            bad.append(f"{a.id} criterion has dangling targets")
    A, _ = state.table.matrix([m.id for m in lg.members()])
    if not np.array_equal(A, -A.T):
        bad.append("empirical payoff matrix is not antisymmetric")
    # stale units advance the clock without crediting a slot
    if sum(state.units) + state.counters["stale"] != state.clock:
        bad.append(f"unit counts {sum(state.units)} + stale {state.counters['stale']} != clock {state.clock}")
    if previous is not None:
        for cell, (_, q) in previous.cells.items():
            now = state.archive.cells.get(cell)
            if now is None or now[1] < q:
                bad.append(f"archive cell {cell} regressed")
                break
    return bad


# metrics

def active_nash(state: LeagueState, max_iters: int = 5000, tol: float = 1e-3) -> dict:
    """Exact-payoff Nash over the active agents and its exploitability in the underlying game."""
    from .gametheory import fictitious_play, mixture_strategy

    policies = np.array([softmax(a.logits) for a in state.league.active])
    A = policies @ state.game.payoff @ policies.T
    A = (A - A.T) / 2
    nash = fictitious_play(A, max_iters, tol)
    mix = mixture_strategy(policies, nash.probs)
    mean = policies.mean(axis=0)
    M = state.game.payoff
    return {
        "exploitability": float((M @ mix).max()),
        "mean_policy_exploitability": float((M @ mean).max()),
        "meta_exploitability": nash.exploitability,
    }


def metrics_record(state: LeagueState) -> dict:
    ratings = np.array([a.rating for a in state.league.active])
    rec = {
        "unit": state.clock,
        "at": state.clock,
        "rating_mean": float(ratings.mean()),
        "rating_min": float(ratings.min()),
        "rating_max": float(ratings.max()),
        "rating_std": float(ratings.std()),
        "coverage": state.archive.coverage(),
        "qd_score": state.archive.qd_score(),
        "hall_size": len(state.league.hall),
        "exploits": state.counters["exploits"],
        "units_spread": int(max(state.units) - min(state.units)),
    }
    rec.update(active_nash(state))
    return rec


@dataclass
class RunResult:
    state: LeagueState
    metrics: list
    checkpoints: list = field(default_factory=list)  # (clock, units snapshot) at each checkpoint


def run_league(config: ExperimentConfig, state: Optional[LeagueState] = None,
               on_checkpoint: Optional[Callable[[LeagueState], None]] = None,
               on_metrics: Optional[Callable[[dict], None]] = None,
               units: Optional[int] = None) -> RunResult:
    """Run ``units`` (default ``runtime.total_units``) more scheduling units."""
    if state is None:
        state = init_state(config)
    total = config.runtime.total_units if units is None else units
    end = state.clock + total
    metrics: list = []
    checkpoints: list = []
    rt = config.runtime
    every_ckpt = rt.checkpoint_every
    every_metrics = config.output.metrics_every

    def after_commit():
        if state.clock % every_metrics == 0 or state.clock == end:
            rec = metrics_record(state)
            metrics.append(rec)
            if on_metrics:
                on_metrics(rec)
        if state.clock % every_ckpt == 0 or state.clock == end:
            checkpoints.append((state.clock, list(state.units)))
            if on_checkpoint:
                on_checkpoint(state)

    if total <= 0:
        return RunResult(state, metrics, checkpoints)

    if rt.workers == 1:
        while state.clock < end:
            run_unit(state)
            after_commit()
        return RunResult(state, metrics, checkpoints)

    lock = threading.Lock()
    tickets = iter(range(state.clock, end))
    errors: list = []

    def worker():
        while True:
            with lock:
                if errors:
                    return
                ticket = next(tickets, None)
                if ticket is None:
                    return
                view = state.snapshot()
                rng = stream_rng(rt.seed, STREAM_UNIT, ticket)
                agent_id = pick_next_agent(view, rng, rt.preemption_gamma)
            try:
                proposal = compute_unit(state, view, agent_id, rng, ticket)
                with lock:
                    commit(state, proposal)
                    after_commit()
            except Exception as exc:  # surface in the caller's thread
                with lock:
                    errors.append(UnitError(ticket, agent_id, exc) if isinstance(exc, LeagueError) else exc)
                return

    threads = [threading.Thread(target=worker, name=f"worker-{i}") for i in range(rt.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return RunResult(state, metrics, checkpoints)


def replay(initial: LeagueState, commit_log) -> LeagueState:
    """Re-apply a commit log sequentially onto a copy of the initial state."""
    for proposal in commit_log:
        commit(initial, proposal)
    return initial
