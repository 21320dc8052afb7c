"""Privacy-elasticity calculus: cost/value curves, optimal disclosure,
elasticity, the privacy-utility frontier and the threshold policy.

Disclosure sigma in [0,1] carries a convex privacy cost C = gamma * sigma^alpha
and a concave market value V = beta * sigma / (1 + delta * sigma). The optimal
disclosure equates marginal value and marginal cost; elasticity measures the
percentage price response to disclosure and lands in [-1, 0] for the market
simulator's risk-premium price model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PrivacyError(ValueError):
    pass


@dataclass(frozen=True)
class PrivacyParams:
    gamma: float  # privacy sensitivity
    alpha: float  # convexity

    def __post_init__(self):
        if self.gamma <= 0:
            raise PrivacyError("gamma must be > 0")
        if self.alpha <= 1:
            raise PrivacyError("alpha must be > 1")


@dataclass(frozen=True)
class ValueParams:
    beta: float  # max potential value
    delta: float  # diminishing-returns rate

    def __post_init__(self):
        if self.beta < 0 or self.delta < 0:
            raise PrivacyError("beta and delta must be >= 0")


def _check_sigma(sigma: float) -> None:
    if not (0.0 <= sigma <= 1.0):
        raise PrivacyError(f"sigma {sigma} outside [0, 1]")


def privacy_cost(p: PrivacyParams, sigma: float) -> float:
    """C(sigma) = gamma * sigma^alpha."""
    _check_sigma(sigma)
    return p.gamma * sigma ** p.alpha


def market_value(v: ValueParams, sigma: float) -> float:
    """V(sigma) = beta * sigma / (1 + delta * sigma)."""
    _check_sigma(sigma)
    return v.beta * sigma / (1.0 + v.delta * sigma)


def marginal_cost(p: PrivacyParams, sigma: float) -> float:
    return p.gamma * p.alpha * sigma ** (p.alpha - 1.0)


def marginal_value(v: ValueParams, sigma: float) -> float:
    return v.beta / (1.0 + v.delta * sigma) ** 2


def optimal_disclosure(p: PrivacyParams, v: ValueParams, tol: float = 1e-10) -> float:
    """Unique sigma* solving V'(sigma) = C'(sigma) on [0, 1].

    V' - C' is strictly decreasing (V concave increasing, C strictly convex),
    so bisection is exact up to tol. Degenerate boundaries: sigma* = 0 when
    disclosure has no value (beta = 0), sigma* = 1 when marginal value still
    exceeds marginal cost at full disclosure.
    """
    if v.beta == 0.0:
        return 0.0

    def gap(sigma: float) -> float:
        return marginal_value(v, sigma) - marginal_cost(p, sigma)

    if gap(1.0) > 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = gap(mid)
        if abs(g) <= tol:
            return mid
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


def privacy_elasticity(price_fn, sigma: float, h: float = 1e-5) -> float:
    """xi = (dp/dsigma) * (sigma / p) by central finite difference.

    One-sided differences at the interval boundaries; requires a positive
    price at sigma.
    """
    _check_sigma(sigma)
    price = price_fn(sigma)
    if price <= 0.0:
        raise PrivacyError("price must be positive to compute elasticity")
    lo, hi = max(0.0, sigma - h), min(1.0, sigma + h)
    derivative = (price_fn(hi) - price_fn(lo)) / (hi - lo)
    return derivative * sigma / price


def frontier(utility_fn, privacy_fn, theta, grid_size: int = 101) -> list[tuple[float, float]]:
    """Discretized privacy-utility frontier F(p) = max{U(sigma) : P(sigma) >= p}.

    Evaluated on a uniform sigma grid; returns (privacy floor, max utility)
    pairs sorted by increasing floor. The curve is non-increasing in the
    floor; a non-monotone privacy_fn is rejected.
    """
    if grid_size < 3:
        raise PrivacyError("grid_size must be >= 3")
    sigmas = np.linspace(0.0, 1.0, grid_size)
    privacy = np.array([privacy_fn(s) for s in sigmas])
    if np.any(np.diff(privacy) > 1e-12):
        raise PrivacyError("privacy_fn must be non-increasing in sigma")
    utility = np.array([utility_fn(s, theta) for s in sigmas])
    floors = sorted(set(float(p) for p in privacy))
    curve = []
    for floor in floors:
        admissible = utility[privacy >= floor - 1e-12]
        curve.append((floor, float(admissible.max())))
    return curve


def threshold_policy(theta_t: float, privacy_t: float, threshold_fn) -> str:
    """Threshold disclosure control: increase iff theta_t exceeds the
    threshold at the current privacy state, decrease below it, hold on
    equality."""
    pivot = threshold_fn(privacy_t)
    if theta_t > pivot:
        return "increase"
    if theta_t < pivot:
        return "decrease"
    return "hold"
