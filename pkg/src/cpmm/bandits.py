"""Bandit pricing policies with regret accounting.

UCB learns over a finite set of pricing policies (arms); LinUCB learns a
linear map from market context to price with an optimism bonus from the
design-matrix confidence ellipsoid. Both keep the exact update rules their
regret bounds assume: incremental means for UCB, rank-one design updates
A += x x^T, b += r x for LinUCB with theta = A^-1 b solved via Cholesky.

States are single-owner mutable values: updates mutate in place and return
the state. Distinct runs use independent states, never shared ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular


class BanditError(ValueError):
    pass


@dataclass(frozen=True)
class RewardObservation:
    """A reward with its declared bounded range."""

    reward: float
    r_min: float = 0.0
    r_max: float = 1.0

    def __post_init__(self):
        if not (self.r_min <= self.reward <= self.r_max):
            raise BanditError(
                f"reward {self.reward} outside declared range [{self.r_min}, {self.r_max}]"
            )


@dataclass
class UcbState:
    """Running means and pull counts for K pricing policies."""

    arm_means: list[float]
    arm_counts: list[int]
    t: int = 0
    reward_range: tuple[float, float] = (0.0, 1.0)

    @classmethod
    def fresh(cls, k: int, reward_range: tuple[float, float] = (0.0, 1.0)) -> "UcbState":
        if k < 1:
            raise BanditError("need K >= 1 arms")
        return cls([0.0] * k, [0] * k, 0, reward_range)

    @property
    def k(self) -> int:
        return len(self.arm_means)


def ucb_select(state: UcbState) -> int:
    """Arm to pull: unpulled arms first (lowest index), then the UCB index.

    Index is mean + sqrt(2 ln(t+1) / n); the +1 shift keeps the logarithm
    defined on the first comparison. Ties break to the lowest arm index.
    """
    counts = state.arm_counts
    for j, n in enumerate(counts):
        if n == 0:
            return j
    log_term = 2.0 * math.log(state.t + 1)
    best, best_idx = -math.inf, 0
    for j, (mu, n) in enumerate(zip(state.arm_means, counts)):
        index = mu + math.sqrt(log_term / n)
        if index > best:
            best, best_idx = index, j
    return best_idx


def ucb_update(state: UcbState, arm: int, reward: float | RewardObservation) -> UcbState:
    """Record one observation on `arm` via the incremental-mean update."""
    if isinstance(reward, RewardObservation):
        reward = reward.reward
    else:
        lo, hi = state.reward_range
        if not (lo <= reward <= hi):
            raise BanditError(f"reward {reward} outside declared range [{lo}, {hi}]")
    if not 0 <= arm < state.k:
        raise BanditError(f"arm {arm} out of range for K={state.k}")
    n_old = state.arm_counts[arm]
    state.arm_means[arm] = (state.arm_means[arm] * n_old + reward) / (n_old + 1)
    state.arm_counts[arm] = n_old + 1
    state.t += 1
    return state


@dataclass
class LinUcbState:
    """Design matrix / response vector pair for linear contextual pricing."""

    design_matrix: np.ndarray
    response_vector: np.ndarray
    exploration: float = 1.0
    price_cap: float = math.inf
    _chol: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def fresh(cls, d: int, exploration: float = 1.0, price_cap: float = math.inf) -> "LinUcbState":
        if d < 1:
            raise BanditError("context dimension must be >= 1")
        if exploration <= 0:
            raise BanditError("exploration alpha must be > 0")
        return cls(np.eye(d), np.zeros(d), exploration, price_cap)

    @property
    def d(self) -> int:
        return self.design_matrix.shape[0]

    def cholesky(self) -> np.ndarray:
        # A only ever grows by rank-one additions from I, so this cannot fail
        # for well-formed states; a failure signals corruption.
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.design_matrix)
        return self._chol


def _check_context(state: LinUcbState, x) -> np.ndarray:
    vec = np.asarray(x, dtype=float)
    if vec.shape != (state.d,):
        raise BanditError(f"context shape {vec.shape} does not match d={state.d}")
    if not np.all(np.isfinite(vec)):
        raise BanditError("context contains non-finite values")
    return vec


def linucb_price(state: LinUcbState, x) -> float:
    """Optimistic price theta_hat . x + alpha * sqrt(x' A^-1 x), clamped to [0, cap]."""
    vec = _check_context(state, x)
    low = state.cholesky()
    theta = cho_solve((low, True), state.response_vector)
    half = solve_triangular(low, vec, lower=True)
    bonus = state.exploration * math.sqrt(float(half @ half))
    raw = float(theta @ vec) + bonus
    return min(max(raw, 0.0), state.price_cap)


def linucb_update(state: LinUcbState, x, reward: float) -> LinUcbState:
    """Rank-one design update A += x x^T and response update b += r x."""
    vec = _check_context(state, x)
    if not math.isfinite(reward):
        raise BanditError("reward must be finite")
    state.design_matrix = state.design_matrix + np.outer(vec, vec)
    state.response_vector = state.response_vector + reward * vec
    state._chol = None
    return state


def cumulative_regret(history, best_mean: float) -> float:
    """Sum over pulls of (best_mean - observed reward) against a known optimum."""
    return sum(best_mean - reward for _arm, reward in history)
