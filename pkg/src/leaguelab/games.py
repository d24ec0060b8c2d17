"""Symmetric zero-sum benchmark games and softmax policies over their pure strategies."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from numba import njit

from .errors import CapacityError, InvalidInputError

BLOTTO_CAP = 500


@dataclass(frozen=True, eq=False)
class GameSpec:
    """A symmetric zero-sum game over ``k`` pure strategies.

    ``payoff[i, j]`` is the row player's payoff when playing ``i`` against ``j``.
    ``features`` maps each pure strategy to a behaviour-descriptor vector; the
    descriptor of a mixed or empirical play is ``freqs @ features``.
    """

    name: str
    payoff: np.ndarray
    features: np.ndarray = field(default=None)  # type: ignore[assignment]
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.array(self.payoff, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 2:
            raise InvalidInputError(f"payoff must be a square matrix with k >= 2, got shape {m.shape}")
        if not np.array_equal(m, -m.T):
            raise InvalidInputError("payoff matrix is not antisymmetric")
        if np.any(np.abs(m) > 1.0):
            raise InvalidInputError("payoff entries must lie in [-1, 1]")
        m.flags.writeable = False
        object.__setattr__(self, "payoff", m)
        feats = np.eye(m.shape[0]) if self.features is None else np.array(self.features, dtype=float)
        if feats.shape[0] != m.shape[0]:
            raise InvalidInputError("features must have one row per pure strategy")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)

    @property
    def k(self) -> int:
        return self.payoff.shape[0]

    @property
    def bd_dim(self) -> int:
        return self.features.shape[1]


def softmax(logits: np.ndarray) -> np.ndarray:
    # unchecked fast path used inside the learner
    z = np.exp(logits - logits.max())
    return z / z.sum()


def policy_to_mixed(logits) -> np.ndarray:
    x = np.asarray(logits, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("logits must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError(f"logits must be finite, got {x}")
    return softmax(x)


def _check_simplex(p: np.ndarray, k: int, name: str) -> None:
    if p.shape != (k,):
        raise InvalidInputError(f"{name} has shape {p.shape}, expected ({k},)")
    if p.min() < 0.0 or abs(p.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"{name} is not a probability vector")


@njit(cache=True)
def _bilinear_checked(p, q, m):
    # status: 0 ok, 1 p off the simplex, 2 q off the simplex
    k = p.shape[0]
    sp = 0.0
    sq = 0.0
    lo_p = 0.0
    lo_q = 0.0
    total = 0.0
    for i in range(k):
        sp += p[i]
        sq += q[i]
        lo_p = min(lo_p, p[i])
        lo_q = min(lo_q, q[i])
        row = 0.0
        for j in range(k):
            row += m[i, j] * q[j]
        total += p[i] * row
    if lo_p < 0.0 or abs(sp - 1.0) > 1e-9 or sp != sp:
        return total, 1
    if lo_q < 0.0 or abs(sq - 1.0) > 1e-9 or sq != sq:
        return total, 2
    return total, 0


def mixed_payoff(game: GameSpec, p, q) -> float:
    """Expected payoff ``p^T M q`` of mixed strategy ``p`` against ``q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    k = game.k
    if p.shape != (k,):
        raise InvalidInputError(f"p has shape {p.shape}, expected ({k},)")
    if q.shape != (k,):
        raise InvalidInputError(f"q has shape {q.shape}, expected ({k},)")
    value, status = _bilinear_checked(p, q, game.payoff)
    if status:
        raise InvalidInputError(f"{'pq'[status - 1]} is not a probability vector")
    return float(value)


def payoff_gradient(game: GameSpec, logits, q) -> np.ndarray:
    """Gradient of ``mixed_payoff(game, softmax(logits), q)`` with respect to the logits."""
    p = policy_to_mixed(logits)
    q = np.asarray(q, dtype=float)
    _check_simplex(q, game.k, "q")
    mq = game.payoff @ q
    return p * (mq - p @ mq)


def make_rps(k: int = 3) -> GameSpec:
    """Cyclic rock-paper-scissors over ``k`` strategies; each beats (k-1)/2 others."""
    if not isinstance(k, (int, np.integer)) or k < 3 or k % 2 == 0:
        raise InvalidInputError(f"k must be an odd integer >= 3, got {k!r}")
    half = (k - 1) // 2
    m = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            d = (j - i) % k
            if 1 <= d <= half:
                m[i, j] = -1.0
            elif d > half:
                m[i, j] = 1.0
    return GameSpec(name=f"rps{k}", payoff=m, params={"k": int(k)})


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def blotto_strategies(soldiers: int, fields: int, cap: int = BLOTTO_CAP) -> np.ndarray:
    count = comb(soldiers + fields - 1, fields - 1)
    if count > cap:
        raise CapacityError(f"blotto({soldiers}, {fields}) has {count} pure strategies, cap is {cap}")
    return np.array(list(_compositions(soldiers, fields)), dtype=int)


def make_blotto(soldiers: int, fields: int, cap: int = BLOTTO_CAP) -> GameSpec:
    """Colonel Blotto with payoff = (fields won - fields lost) / fields."""
    if soldiers < 1 or fields < 2:
        raise InvalidInputError(f"need soldiers >= 1 and fields >= 2, got ({soldiers}, {fields})")
    alloc = blotto_strategies(soldiers, fields, cap)
    a = alloc[:, None, :]
    b = alloc[None, :, :]
    m = (np.sign(a - b).sum(axis=2)) / fields
    return GameSpec(
        name=f"blotto{soldiers}x{fields}",
        payoff=m,
        features=alloc / soldiers,
        params={"soldiers": soldiers, "fields": fields},
    )


def make_random_antisymmetric(k: int, seed: int) -> GameSpec:
    if k < 2:
        raise InvalidInputError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.uniform(-1.0, 1.0, size=(k, k)), 1)
    return GameSpec(name=f"random{k}s{seed}", payoff=upper - upper.T, params={"k": k, "seed": seed})


def make_game(name: str, **params) -> GameSpec:
    if name == "rps":
        return make_rps(int(params.get("k", 3)))
    if name == "blotto":
        return make_blotto(int(params.get("soldiers", 3)), int(params.get("fields", 3)),
                           int(params.get("cap", BLOTTO_CAP)))
    if name == "random":
        return make_random_antisymmetric(int(params.get("k", 4)), int(params.get("seed", 0)))
    raise InvalidInputError(f"unknown game {name!r}")
