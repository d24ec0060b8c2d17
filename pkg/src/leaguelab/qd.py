"""Quality-diversity layer: behaviour descriptors, grid archive, niche criteria."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from .errors import InvalidInputError, NoDataError, NotFoundError
from .league import PayoffTable
from .population import Agent, LeagueView


def compute_bd(results, agent_id: str, window: int) -> np.ndarray:
    """Mean per-match action-frequency descriptor over the agent's last ``window`` matches."""
    own = [r.bd_a if r.a == agent_id else r.bd_b for r in results if agent_id in (r.a, r.b)]
    if not own:
        raise NoDataError(f"no matches recorded for {agent_id!r}")
    return np.mean(np.asarray(own[-window:], dtype=float), axis=0)


def discretize(bd, R: int) -> tuple:
    cells = np.floor(np.asarray(bd, dtype=float) * R).astype(int)
    return tuple(np.minimum(np.maximum(cells, 0), R - 1).tolist())


def _reachable(dim: int, R: int, prefix: tuple, acc: int):
    # a cell meets the simplex iff R - dim + 1 <= sum(cells) <= R (last bin is closed at 1)
    left = dim - len(prefix)
    if left == 0:
        if R - dim + 1 <= acc <= R:
            yield prefix
        return
    for c in range(min(R - 1, R - acc) + 1):
        if acc + c + (R - 1) * (left - 1) < R - dim + 1:
            continue
        yield from _reachable(dim, R, prefix + (c,), acc + c)


@lru_cache(maxsize=16)
def targetable_cells(dim: int, R: int) -> tuple:
    """Reachable cells whose slice of the simplex has positive area.

    A cell with ``sum(cell) == R`` meets the simplex only at its lower corner,
    which sampled action frequencies almost never hit exactly.
    """
    return tuple(c for c in reachable_cells(dim, R) if dim == 1 or sum(c) < R)


@lru_cache(maxsize=16)
def reachable_cells(dim: int, R: int) -> tuple:
    if dim == 1:
        return ((R - 1,),)
    return tuple(_reachable(dim, R, (), 0))


class Archive:
    """Grid archive over the BD simplex, one elite per cell."""

    def __init__(self, dim: int, R: int = 10):
        self.dim = dim
        self.R = R
        self.cells: dict = {}

    def insert(self, agent_id: str, bd, quality: float) -> bool:
        cell = discretize(bd, self.R)
        incumbent = self.cells.get(cell)
        if incumbent is None or quality > incumbent[1]:
            self.cells[cell] = (agent_id, float(quality))
            return True
        return False

    def coverage(self) -> float:
        return len(self.cells) / len(reachable_cells(self.dim, self.R))

    def qd_score(self) -> float:
        return math.fsum(q for _, q in self.cells.values())

    def unoccupied(self) -> list:
        return [c for c in reachable_cells(self.dim, self.R) if c not in self.cells]

    def records(self) -> list:
        return [{"cell": list(c), "agent": a, "quality": q} for c, (a, q) in sorted(self.cells.items())]

    @classmethod
    def from_records(cls, dim: int, R: int, rows) -> "Archive":
        arc = cls(dim, R)
        for row in rows:
            arc.cells[tuple(row["cell"])] = (row["agent"], row["quality"])
        return arc

    def copy(self) -> "Archive":
        arc = Archive(self.dim, self.R)
        arc.cells = dict(self.cells)
        return arc

    def __eq__(self, other) -> bool:
        return isinstance(other, Archive) and (self.dim, self.R, self.cells) == (other.dim, other.R, other.cells)


def archive_insert(archive: Archive, agent: Agent, bd, quality: float) -> tuple:
    return archive, archive.insert(agent.id, bd, quality)


def coverage(archive: Archive) -> float:
    return archive.coverage()


def qd_score(archive: Archive) -> float:
    return archive.qd_score()


# niche criteria

@dataclass(frozen=True)
class BDTarget:
    cell: tuple
    radius: int = 1


@dataclass(frozen=True)
class BeatAgent:
    target: str
    margin: float = 0.0


@dataclass(frozen=True)
class BeatSet:
    targets: tuple
    required_fraction: float = 0.5

    def __post_init__(self):
        if not self.targets:
            raise InvalidInputError("BeatSet needs at least one target")


@dataclass(frozen=True)
class Mixture:
    parts: tuple  # ((criterion, weight), ...)

    def __post_init__(self):
        if not self.parts:
            raise InvalidInputError("Mixture needs at least one part")
        weights = [w for _, w in self.parts]
        if min(weights) < 0 or abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidInputError(f"Mixture weights must be nonnegative and sum to 1, got {weights}")


Criterion = Union[BDTarget, BeatAgent, BeatSet, Mixture]


def criterion_targets(criterion) -> list:
    if isinstance(criterion, BeatAgent):
        return [criterion.target]
    if isinstance(criterion, BeatSet):
        return list(criterion.targets)
    if isinstance(criterion, Mixture):
        return [t for c, _ in criterion.parts for t in criterion_targets(c)]
    return []


def criterion_to_dict(criterion) -> Optional[dict]:
    if criterion is None:
        return None
    if isinstance(criterion, BDTarget):
        return {"kind": "bd_target", "cell": list(criterion.cell), "radius": criterion.radius}
    if isinstance(criterion, BeatAgent):
        return {"kind": "beat_agent", "target": criterion.target, "margin": criterion.margin}
    if isinstance(criterion, BeatSet):
        return {"kind": "beat_set", "targets": list(criterion.targets),
                "required_fraction": criterion.required_fraction}
    return {"kind": "mixture", "parts": [[criterion_to_dict(c), w] for c, w in criterion.parts]}


def criterion_from_dict(d: Optional[dict]):
    if d is None:
        return None
    kind = d["kind"]
    if kind == "bd_target":
        return BDTarget(tuple(d["cell"]), d["radius"])
    if kind == "beat_agent":
        return BeatAgent(d["target"], d["margin"])
    if kind == "beat_set":
        return BeatSet(tuple(d["targets"]), d["required_fraction"])
    if kind == "mixture":
        return Mixture(tuple((criterion_from_dict(c), w) for c, w in d["parts"]))
    raise InvalidInputError(f"unknown criterion kind {kind!r}")


def _payoff_or_none(table: PayoffTable, a: str, b: str) -> Optional[float]:
    try:
        return table.empirical_payoff(a, b)
    except NoDataError:
        return None


def criterion_satisfaction(agent: Agent, criterion, table: PayoffTable, view: LeagueView, R: int = 10) -> float:
    if criterion is None:
        return 0.0
    if isinstance(criterion, BDTarget):
        if agent.bd is None:
            return 0.0
        cell = discretize(agent.bd, R)
        return float(max(abs(a - b) for a, b in zip(cell, criterion.cell)) <= criterion.radius)
    if isinstance(criterion, BeatAgent):
        view.get(criterion.target)
        v = _payoff_or_none(table, agent.id, criterion.target)
        return float(v is not None and v >= criterion.margin)
    if isinstance(criterion, BeatSet):
        beaten = 0
        for t in criterion.targets:
            view.get(t)
            v = _payoff_or_none(table, agent.id, t)
            beaten += v is not None and v > 0
        frac = beaten / len(criterion.targets)
        if criterion.required_fraction <= 0 or frac >= criterion.required_fraction:
            return 1.0
        return min(1.0, frac / criterion.required_fraction)
    if isinstance(criterion, Mixture):
        return float(sum(w * criterion_satisfaction(agent, c, table, view, R) for c, w in criterion.parts))
    raise InvalidInputError(f"unknown criterion {criterion!r}")


# Elo slope at equal ratings: one rating point is worth ln(10)/800 expected payoff
RATING_TO_PAYOFF = math.log(10.0) / 800.0


@lru_cache(maxsize=4096)
def cell_target(cell: tuple, R: int) -> np.ndarray:
    """Point of the cell's slice of the simplex nearest the cell centre.

    Normalising the raw centre would leave edge cells (e.g. (9,0,0)) outside
    their own bin, so the centre is shifted by a common offset and clamped
    into the cell box, with the offset found by bisection.
    """
    c = np.asarray(cell, dtype=float)
    lo, hi = c / R, (c + 1) / R
    hi[c == R - 1] = 1.0
    lo_slack, hi_slack = 1.0 - lo.sum(), hi.sum() - 1.0
    if lo_slack <= 0.0:
        # the slice is a single lattice point
        t = lo
        t.flags.writeable = False
        return t
    # keep off the bin edges so the target discretises back into its own cell
    pad = min(0.25 / R, lo_slack / (2 * len(c)), hi_slack / (2 * len(c)))
    lo_in, hi_in = lo + pad, hi - pad
    mid = (c + 0.5) / R
    a, b = mid.min() - hi_in.max() - 1.0, mid.max() - lo_in.min() + 1.0
    for _ in range(100):
        lam = 0.5 * (a + b)
        if np.clip(mid - lam, lo_in, hi_in).sum() > 1.0:
            a = lam
        else:
            b = lam
    t = np.clip(mid - 0.5 * (a + b), lo_in, hi_in)
    t = t / t.sum()
    t.flags.writeable = False
    return t


def niche_terms(criterion, view: LeagueView, game, weight: float, R: int = 10) -> tuple:
    """Learner-side form of a niche criterion.

    Beat criteria add ``weight * M @ target_policy`` to the payoff column;
    a BD target adds a cross-entropy pull of the expected descriptor towards
    a point inside the target cell (see ``cell_target``). Returns
    ``(payoff_column_extra, pull)``.
    """
    extra = np.zeros(game.k)
    pulls = []

    def walk(c, w):
        nonlocal extra
        if w == 0 or c is None:
            return
        if isinstance(c, BeatAgent):
            extra = extra + w * (game.payoff @ view.get(c.target).policy)
        elif isinstance(c, BeatSet):
            mix = np.mean([view.get(t).policy for t in c.targets], axis=0)
            extra = extra + w * (game.payoff @ mix)
        elif isinstance(c, BDTarget):
            pulls.append((cell_target(c.cell, R), w))
        elif isinstance(c, Mixture):
            for part, pw in c.parts:
                walk(part, w * pw)

    walk(criterion, weight)
    pull = None
    if pulls:
        # cross-entropy is linear in the target, so weighted targets merge
        total = sum(w for _, w in pulls)
        target = sum(t * w for t, w in pulls) / total
        pull = (game.features, target, total)
    return extra, pull


def shaped_fitness(agent: Agent, criterion, table: PayoffTable, view: LeagueView, beta: float, R: int = 10) -> float:
    if beta == 0:
        return agent.rating
    return agent.rating + beta * criterion_satisfaction(agent, criterion, table, view, R)


def _others(view: LeagueView, agent: Agent) -> list:
    return [m for m in view.members() if m.id != agent.id]


def nearest_rated(view: LeagueView, agent: Agent, count: int, rating: Optional[float] = None) -> list:
    """Ids of the ``count`` members closest in rating (ties by id), excluding ``agent``."""
    r = agent.rating if rating is None else rating
    ranked = sorted(_others(view, agent), key=lambda m: (abs(m.rating - r), m.id))
    return [m.id for m in ranked[:count]]


def random_bd_target(archive: Archive, rng: np.random.Generator, radius: int) -> BDTarget:
    cells = targetable_cells(archive.dim, archive.R)
    pool = [c for c in cells if c not in archive.cells] or cells
    return BDTarget(tuple(pool[int(rng.integers(len(pool)))]), radius)


def initial_criterion(agent: Agent, view: LeagueView, archive: Archive, rng: np.random.Generator,
                      radius: int = 1):
    """Rotate criterion kinds by slot: BD target, beat-one-agent, or an even mix."""
    others = [m.id for m in view.active if m.id != agent.id]
    beat = BeatAgent(others[int(rng.integers(len(others)))])
    target = random_bd_target(archive, rng, radius)
    kind = (agent.slot or 0) % 3
    if kind == 0:
        return target
    if kind == 1:
        return beat
    return Mixture(((target, 0.5), (beat, 0.5)))


def _escalate(criterion, agent, view, archive, rng, radius):
    if isinstance(criterion, BeatAgent):
        return BeatSet(tuple(nearest_rated(view, agent, 3)), 0.5)
    if isinstance(criterion, BeatSet):
        return BeatSet(criterion.targets, min(1.0, criterion.required_fraction + 0.25))
    if isinstance(criterion, BDTarget):
        return random_bd_target(archive, rng, radius)
    return Mixture(tuple((_escalate(c, agent, view, archive, rng, radius), w) for c, w in criterion.parts))


def _relax(criterion, agent, view, archive, rng, radius):
    if isinstance(criterion, BeatSet):
        frac = criterion.required_fraction - 0.25
        if frac < 0.25 - 1e-12:
            return BeatAgent(criterion.targets[0])
        return BeatSet(criterion.targets, frac)
    if isinstance(criterion, BeatAgent):
        current = view.by_id.get(criterion.target)
        if current is None:
            return criterion
        weaker = [m for m in _others(view, agent) if m.rating < current.rating]
        if not weaker:
            return criterion
        best = max(weaker, key=lambda m: (m.rating, m.id))
        return BeatAgent(best.id, criterion.margin)
    if isinstance(criterion, BDTarget):
        return BDTarget(criterion.cell, min(archive.R, criterion.radius + 1))
    return Mixture(tuple((_relax(c, agent, view, archive, rng, radius), w) for c, w in criterion.parts))


def adapt_criterion(agent: Agent, view: LeagueView, table: PayoffTable, rng: np.random.Generator,
                    history, archive: Archive, s_hi: float = 0.8, s_lo: float = 0.1,
                    window: int = 5, radius: int = 1) -> tuple:
    """Escalate or relax ``agent.criterion`` from its recent satisfaction history.

    Returns ``(criterion, event)`` with event in {"escalate", "relax", None}.
    """
    recent = list(history)[-window:]
    criterion = agent.criterion
    if criterion is None or len(recent) < window:
        return criterion, None
    if min(recent) >= s_hi:
        return _escalate(criterion, agent, view, archive, rng, radius), "escalate"
    if max(recent) <= s_lo:
        return _relax(criterion, agent, view, archive, rng, radius), "relax"
    return criterion, None


def retarget(criterion, renames: dict, view: LeagueView, agent: Agent):
    """Rewrite target ids that left the league.

    ``renames`` maps a departed id to its successor (for example an exploited
    agent's frozen snapshot); ids with no successor fall back to the nearest
    rated live member.
    """
    if criterion is None:
        return None

    def fix(t):
        t = renames.get(t, t)
        if t in view.by_id and t != agent.id:
            return t
        return nearest_rated(view, agent, 1)[0]

    if isinstance(criterion, BeatAgent):
        return BeatAgent(fix(criterion.target), criterion.margin)
    if isinstance(criterion, BeatSet):
        return BeatSet(tuple(fix(t) for t in criterion.targets), criterion.required_fraction)
    if isinstance(criterion, Mixture):
        return Mixture(tuple((retarget(c, renames, view, agent), w) for c, w in criterion.parts))
    return criterion


def dangling(criterion, view: LeagueView) -> list:
    return [t for t in criterion_targets(criterion) if t not in view.by_id]


def check_targets(criterion, view: LeagueView) -> None:
    missing = dangling(criterion, view)
    if missing:
        raise NotFoundError(f"criterion refers to unknown agents {missing}")
