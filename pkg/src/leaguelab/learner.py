"""Inner loop: plain gradient ascent on payoff plus an entropy bonus."""

from __future__ import annotations

from dataclasses import replace
from typing import TYPE_CHECKING

import numpy as np
from numba import njit

from .errors import InvalidInputError, NumericError
from .games import GameSpec, _check_simplex, policy_to_mixed

if TYPE_CHECKING:
    from .population import Agent


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def shaped_objective(game: GameSpec, logits, q, entropy_coeff: float) -> float:
    p = policy_to_mixed(logits)
    return float(p @ game.payoff @ np.asarray(q, dtype=float)) + entropy_coeff * entropy(p)


def shaped_gradient(game: GameSpec, logits, q, entropy_coeff: float) -> np.ndarray:
    x = np.asarray(logits, dtype=float)
    policy_to_mixed(x)  # validates
    mq = game.payoff @ np.asarray(q, dtype=float)
    return _step_gradient(x, mq, entropy_coeff)[0]


def _step_gradient(x: np.ndarray, mq: np.ndarray, entropy_coeff: float, pull=None):
    z = x - x.max()
    e = np.exp(z)
    s = e.sum()
    p = e / s
    if pull is None:
        g = p * (mq - p @ mq)
    else:
        # d/dp of w * sum_d t_d log (p F)_d joins the payoff column before the softmax chain rule
        features, target, weight = pull
        dp = mq + weight * (features @ (target / (p @ features)))
        g = p * (dp - p @ dp)
    if entropy_coeff:
        logp = z - np.log(s)
        h = -(p @ logp)
        g -= entropy_coeff * p * (logp + h)
    return g, p


@njit(cache=True)
def _ascend_kernel(x, mq, lr, entropy_coeff, steps, features, target, weight):
    # same arithmetic as _step_gradient, unrolled for small k
    k = x.shape[0]
    dims = features.shape[1]
    p = np.empty(k)
    dp = np.empty(k)
    for _ in range(steps):
        m = x.max()
        s = 0.0
        for i in range(k):
            p[i] = np.exp(x[i] - m)
            s += p[i]
        logs = np.log(s)
        for i in range(k):
            p[i] /= s
            dp[i] = mq[i]
        if weight != 0.0:
            for d in range(dims):
                b = 0.0
                for i in range(k):
                    b += p[i] * features[i, d]
                r = weight * target[d] / b
                for i in range(k):
                    dp[i] += features[i, d] * r
        avg = 0.0
        h = 0.0
        for i in range(k):
            avg += p[i] * dp[i]
            h -= p[i] * (x[i] - m - logs)
        for i in range(k):
            g = p[i] * (dp[i] - avg)
            if entropy_coeff != 0.0:
                g -= entropy_coeff * p[i] * (x[i] - m - logs + h)
            x[i] += lr * g
    return x


_NO_FEATURES = np.zeros((1, 1))
_NO_TARGET = np.zeros(1)


def ascend(logits: np.ndarray, mq: np.ndarray, lr: float, entropy_coeff: float, steps: int,
           pull=None) -> np.ndarray:
    """Run ``steps`` gradient-ascent steps given the precomputed payoff column ``M @ q``.

    ``pull`` = (features, target, weight) adds the behaviour-target term
    ``weight * sum_d target_d * log (softmax(x) @ features)_d`` to the objective,
    a cross-entropy that draws the expected descriptor towards ``target``.
    """
    x = np.array(logits, dtype=float)
    if pull is None:
        features, target, weight = _NO_FEATURES, _NO_TARGET, 0.0
    else:
        features, target, weight = pull
        features = np.ascontiguousarray(features, dtype=float)
        target = np.asarray(target, dtype=float)
    x = _ascend_kernel(x, np.asarray(mq, dtype=float), float(lr), float(entropy_coeff), int(steps),
                       features, target, float(weight))
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite logits after {steps} steps (lr={lr}, entropy_coeff={entropy_coeff}): {x}")
    return x


def local_update(agent: "Agent", opponent_mix, game: GameSpec, steps: int) -> "Agent":
    if steps < 1:
        raise InvalidInputError(f"steps must be >= 1, got {steps}")
    q = np.asarray(opponent_mix, dtype=float)
    _check_simplex(q, game.k, "opponent_mix")
    mq = game.payoff @ q
    new = ascend(agent.logits, mq, agent.hypers.learning_rate, agent.hypers.entropy_coeff, steps)
    new.flags.writeable = False
    return replace(agent, logits=new)


def finite_diff_gradient(game: GameSpec, logits, q, step: float = 1e-5, entropy_coeff: float = 0.0) -> np.ndarray:
    """Central finite differences of the shaped objective, one coordinate at a time."""
    if step <= 0:
        raise InvalidInputError("step must be positive")
    x = np.asarray(logits, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[i] += step
        dn[i] -= step
        grad[i] = (shaped_objective(game, up, q, entropy_coeff)
                   - shaped_objective(game, dn, q, entropy_coeff)) / (2 * step)
    return grad
