"""League storage: active agents, the hall of fame of frozen ancestors, lineage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Optional

import numpy as np

from .config import PopulationConfig
from .errors import ConfigError, NotFoundError

HYPER_NAMES = ("learning_rate", "entropy_coeff")


@dataclass(frozen=True)
class HyperparamVector:
    learning_rate: float
    entropy_coeff: float

    def as_dict(self) -> dict:
        return {"learning_rate": self.learning_rate, "entropy_coeff": self.entropy_coeff}


@dataclass(frozen=True)
class HyperBounds:
    learning_rate: tuple
    entropy_coeff: tuple

    @classmethod
    def from_config(cls, cfg: PopulationConfig) -> "HyperBounds":
        return cls(tuple(cfg.lr_bounds), tuple(cfg.entropy_bounds))

    def contains(self, hypers: HyperparamVector) -> bool:
        return all(
            getattr(self, name)[0] <= getattr(hypers, name) <= getattr(self, name)[1]
            for name in HYPER_NAMES
        )


def log_uniform(lo: float, hi: float, rng: np.random.Generator) -> float:
    if lo == hi:
        return float(lo)
    return float(np.clip(math.exp(rng.uniform(math.log(lo), math.log(hi))), lo, hi))


def sample_hypers(bounds: HyperBounds, rng: np.random.Generator) -> HyperparamVector:
    return HyperparamVector(**{name: log_uniform(*getattr(bounds, name), rng) for name in HYPER_NAMES})


@dataclass(frozen=True, eq=False)
class Agent:
    """One league member. Instances are never mutated; updates build new ones."""

    id: str
    logits: np.ndarray
    hypers: HyperparamVector
    rating: float
    criterion: Any = None
    bd: Optional[np.ndarray] = None
    born_at: int = 0
    matches_played: int = 0
    last_exploit_at: int = 0
    matches_at_exploit: int = 0
    active: bool = True
    slot: Optional[int] = None

    def __post_init__(self):
        logits = np.array(self.logits, dtype=float)
        logits.flags.writeable = False
        object.__setattr__(self, "logits", logits)
        if self.bd is not None:
            bd = np.array(self.bd, dtype=float)
            bd.flags.writeable = False
            object.__setattr__(self, "bd", bd)

    @cached_property
    def policy(self) -> np.ndarray:
        """Softmax of the logits, computed once per (immutable) instance."""
        z = np.exp(self.logits - self.logits.max())
        p = z / z.sum()
        p.flags.writeable = False
        return p

    def evolve(self, **changes) -> "Agent":
        """Fast ``dataclasses.replace`` for hot paths; arrays are frozen the same way."""
        new = object.__new__(Agent)
        d = new.__dict__
        d.update(self.__dict__)
        if "logits" in changes:
            d.pop("policy", None)
            logits = np.array(changes.pop("logits"), dtype=float)
            logits.flags.writeable = False
            d["logits"] = logits
        if "bd" in changes:
            bd = changes.pop("bd")
            if bd is not None:
                bd = np.array(bd, dtype=float)
                bd.flags.writeable = False
            d["bd"] = bd
        for key in changes:
            if key not in _AGENT_FIELDS:
                raise TypeError(f"Agent has no field {key!r}")
        d.update(changes)
        return new

    def same_as(self, other: "Agent") -> bool:
        return (
            self.id == other.id
            and np.array_equal(self.logits, other.logits)
            and self.hypers == other.hypers
            and self.rating == other.rating
            and self.criterion == other.criterion
            and (self.bd is None) == (other.bd is None)
            and (self.bd is None or np.array_equal(self.bd, other.bd))
            and (self.born_at, self.matches_played, self.last_exploit_at, self.matches_at_exploit,
                 self.active, self.slot)
            == (other.born_at, other.matches_played, other.last_exploit_at, other.matches_at_exploit,
                other.active, other.slot)
        )


_AGENT_FIELDS = frozenset(Agent.__dataclass_fields__)


@dataclass(frozen=True)
class LineageRecord:
    """``parent`` is empty for events that are not births (evictions, criterion changes)."""

    child: str
    parent: str
    event: str
    time: int
    detail: Optional[str] = None


@dataclass(frozen=True, eq=False)
class LeagueView:
    """Point-in-time, read-only view of the league."""

    active: tuple
    hall: tuple
    fixed: tuple = ()
    by_id: dict = field(default_factory=dict)
    # derived arrays memoised by readers; never part of the league state
    cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.active) + len(self.hall)

    def hall_arrays(self) -> tuple:
        """Hall-of-fame ids and ratings (memoised; the hall is frozen)."""
        if "hall" not in self.cache:
            self.cache["hall"] = ([h.id for h in self.hall], np.array([h.rating for h in self.hall], dtype=float))
        return self.cache["hall"]

    def members(self) -> tuple:
        return self.active + self.hall

    def get(self, agent_id: str) -> Agent:
        try:
            return self.by_id[agent_id]
        except KeyError:
            raise NotFoundError(f"no agent {agent_id!r} in view") from None

    def __eq__(self, other) -> bool:
        if not isinstance(other, LeagueView):
            return NotImplemented
        pairs = list(zip(self.active + self.hall + self.fixed, other.active + other.hall + other.fixed))
        return (
            (len(self.active), len(self.hall), len(self.fixed))
            == (len(other.active), len(other.hall), len(other.fixed))
            and all(a.same_as(b) for a, b in pairs)
        )


@dataclass(eq=False)
class League:
    capacity: int
    active: list
    hall: list = field(default_factory=list)
    hall_cap: int = 256
    hall_seen: int = 0
    fixed: list = field(default_factory=list)
    lineage: list = field(default_factory=list)
    next_id: int = 0
    # Elo points charged against frozen opponents, for rating-sum accounting
    frozen_charge: float = 0.0
    _index: dict = field(default_factory=dict, repr=False)
    _hall_cache: Optional[tuple] = field(default=None, repr=False)

    def __post_init__(self):
        self.reindex()

    def reindex(self) -> None:
        self._index = {a.id: a for a in (*self.active, *self.hall, *self.fixed)}

    def new_id(self, prefix: str) -> str:
        ident = f"{prefix}{self.next_id}"
        self.next_id += 1
        return ident

    def get(self, agent_id: str) -> Agent:
        try:
            return self._index[agent_id]
        except KeyError:
            raise NotFoundError(f"no agent {agent_id!r} in league") from None

    def __contains__(self, agent_id: str) -> bool:
        return agent_id in self._index

    @property
    def by_id(self) -> dict:
        return self._index

    def members(self) -> tuple:
        return (*self.active, *self.hall)

    def active_ids(self) -> list:
        return [a.id for a in self.active]

    def slot_of(self, agent_id: str) -> int:
        agent = self.get(agent_id)
        if not agent.active:
            raise NotFoundError(f"agent {agent_id!r} is not active")
        return agent.slot

    def put(self, agent: Agent) -> None:
        """Replace the active agent occupying ``agent.slot``."""
        old = self.active[agent.slot]
        if old.id != agent.id:
            del self._index[old.id]
        self.active[agent.slot] = agent
        self._index[agent.id] = agent

    def snapshot(self) -> LeagueView:
        hall = tuple(self.hall)
        if self._hall_cache is None or self._hall_cache[0] != hall:
            # hall entries are frozen, so their arrays stay valid until membership changes
            self._hall_cache = (hall, ([h.id for h in hall], np.array([h.rating for h in hall], dtype=float)))
        return LeagueView(tuple(self.active), hall, tuple(self.fixed), dict(self._index),
                          {"hall": self._hall_cache[1]})

    def record(self, child: str, parent: str, event: str, time: int, detail: Optional[str] = None) -> None:
        self.lineage.append(LineageRecord(child, parent, event, time, detail))


def spawn_initial(config: PopulationConfig, rng: np.random.Generator, k: int) -> League:
    if config.N < 2:
        raise ConfigError("population.N", f"minimum 2, got {config.N}")
    bounds = HyperBounds.from_config(config)
    agents = []
    for slot in range(config.N):
        logits = rng.normal(0.0, config.sigma0, size=k)
        agents.append(Agent(
            id=f"a{slot}",
            logits=logits,
            hypers=sample_hypers(bounds, rng),
            rating=float(config.R0),
            slot=slot,
        ))
    return League(capacity=config.N, active=agents, hall_cap=config.hall_cap, next_id=config.N)


def freeze_to_hall_of_fame(league: League, agent_id: str, time: int,
                           rng: Optional[np.random.Generator] = None) -> Optional[str]:
    """Append a frozen copy of an active agent to the hall of fame.

    Beyond ``hall_cap`` entries, reservoir sampling decides whether the copy
    replaces a uniformly chosen entry or is discarded. Returns the snapshot id
    if it entered the hall, else None.
    """
    agent = league.get(agent_id)
    if not agent.active:
        raise NotFoundError(f"agent {agent_id!r} is not active")
    snap = replace(agent, id=league.new_id("h"), active=False, slot=None, born_at=time)
    league.hall_seen += 1
    league.record(snap.id, agent.id, "freeze", time)
    if len(league.hall) < league.hall_cap:
        league.hall.append(snap)
    else:
        if rng is None:
            raise ValueError("hall of fame is full; an rng is required for reservoir eviction")
        j = int(rng.integers(league.hall_seen))
        if j >= league.hall_cap:
            league.record(snap.id, "", "discard", time)
            return None
        evicted = league.hall[j]
        del league._index[evicted.id]
        league.record(evicted.id, "", "evict", time, detail=f"replaced by {snap.id}")
        league.hall[j] = snap
    league._index[snap.id] = snap
    return snap.id


def snapshot(league: League) -> LeagueView:
    return league.snapshot()
