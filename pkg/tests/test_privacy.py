"""Privacy calculus tests: FOC, uniqueness, elasticity, frontier, policy."""

import math

import numpy as np
import pytest

from cpmm.privacy import (
    PrivacyError,
    PrivacyParams,
    ValueParams,
    frontier,
    marginal_cost,
    marginal_value,
    market_value,
    optimal_disclosure,
    privacy_cost,
    privacy_elasticity,
    threshold_policy,
)
from cpmm.seeding import stream


class TestCurves:
    def test_cost_boundaries(self):
        p = PrivacyParams(gamma=2.0, alpha=2.0)
        assert privacy_cost(p, 0.0) == 0.0
        assert privacy_cost(p, 1.0) == 2.0
        assert privacy_cost(p, 0.5) == pytest.approx(0.5)

    def test_value_boundaries(self):
        v = ValueParams(beta=2.0, delta=1.0)
        assert market_value(v, 0.0) == 0.0
        assert market_value(v, 1.0) == pytest.approx(1.0)

    def test_value_linear_when_delta_zero(self):
        v = ValueParams(beta=3.0, delta=0.0)
        for sigma in (0.1, 0.5, 0.9):
            assert market_value(v, sigma) == pytest.approx(3.0 * sigma)

    def test_sigma_range_enforced(self):
        with pytest.raises(PrivacyError):
            privacy_cost(PrivacyParams(1.0, 2.0), 1.5)


class TestOptimalDisclosure:
    def test_closed_form_case(self):
        # gamma=1, alpha=2, beta=1, delta=0: 1 = 2 sigma -> sigma* = 0.5
        sigma = optimal_disclosure(PrivacyParams(1.0, 2.0), ValueParams(1.0, 0.0))
        assert sigma == pytest.approx(0.5, abs=1e-6)

    def test_bisection_oracle_case(self):
        # gamma=1, alpha=2, beta=2, delta=1: 2/(1+s)^2 = 2s -> s ~ 0.46557
        sigma = optimal_disclosure(PrivacyParams(1.0, 2.0), ValueParams(2.0, 1.0))
        # independent oracle: dense scan for the sign change of V' - C'
        grid = np.linspace(1e-9, 1.0, 2_000_001)
        gap = 2.0 / (1.0 + grid) ** 2 - 2.0 * grid
        crossing = grid[np.argmax(gap < 0)]
        assert sigma == pytest.approx(crossing, abs=1e-6)
        assert sigma == pytest.approx(0.4656, abs=1e-4)

    def test_boundary_beta_zero(self):
        assert optimal_disclosure(PrivacyParams(1.0, 2.0), ValueParams(0.0, 1.0)) == 0.0

    def test_boundary_full_disclosure(self):
        # marginal value dominates everywhere: V'(1) = 50 > C'(1) = 2.2
        sigma = optimal_disclosure(PrivacyParams(1.1, 2.0), ValueParams(50.0, 0.0))
        assert sigma == 1.0

    def test_foc_residual_and_uniqueness_sample(self):
        rng = stream(53, "privacy-draws")
        interior = 0
        for _ in range(300):
            p = PrivacyParams(gamma=rng.uniform(0.5, 3.0), alpha=rng.uniform(1.1, 3.0))
            v = ValueParams(beta=rng.uniform(0.1, 3.0), delta=rng.uniform(0.0, 2.0))
            if marginal_value(v, 1.0) >= marginal_cost(p, 1.0):
                continue  # boundary solution; FOC does not apply
            sigma = optimal_disclosure(p, v)
            assert abs(marginal_value(v, sigma) - marginal_cost(p, sigma)) <= 1e-8
            # exactly one sign change on a dense grid
            grid = np.linspace(1e-12, 1.0, 10_000)
            gap = v.beta / (1.0 + v.delta * grid) ** 2 - p.gamma * p.alpha * grid ** (p.alpha - 1.0)
            changes = int(np.sum(np.diff(np.sign(gap)) != 0))
            assert changes == 1
            interior += 1
        assert interior > 100

    def test_comparative_statics(self):
        # sigma* non-increasing in gamma, non-decreasing in beta
        v = ValueParams(2.0, 1.0)
        sigmas = [optimal_disclosure(PrivacyParams(g, 2.0), v) for g in np.linspace(0.5, 4.0, 12)]
        assert all(b <= a + 1e-9 for a, b in zip(sigmas, sigmas[1:]))
        p = PrivacyParams(1.0, 2.0)
        sigmas = [optimal_disclosure(p, ValueParams(b, 1.0)) for b in np.linspace(0.1, 4.0, 12)]
        assert all(b >= a - 1e-9 for a, b in zip(sigmas, sigmas[1:]))


class TestElasticity:
    def test_constant_price_zero(self):
        assert privacy_elasticity(lambda s: 5.0, 0.5) == pytest.approx(0.0, abs=1e-9)

    def test_power_law_analytic(self):
        # p = p0 * sigma^-0.3 has constant elasticity -0.3
        for sigma in (0.2, 0.5, 0.8):
            xi = privacy_elasticity(lambda s: 4.0 * s ** -0.3, sigma)
            assert xi == pytest.approx(-0.3, abs=1e-4)

    def test_vanishes_toward_zero_sigma(self):
        xi = privacy_elasticity(lambda s: 2.0 + s, 1e-4)
        assert abs(xi) < 1e-3

    def test_zero_price_rejected(self):
        with pytest.raises(PrivacyError):
            privacy_elasticity(lambda s: 0.0, 0.5)

    def test_risk_premium_model_in_bounds(self):
        # the simulator's price shape: p = p* (1 + rho (1 - sigma))
        for rho in (0.1, 0.3, 0.9):
            for sigma in np.linspace(0.05, 0.95, 10):
                xi = privacy_elasticity(lambda s: 7.0 * (1 + rho * (1 - s)), float(sigma))
                assert -1.05 <= xi <= 0.05


class TestFrontier:
    @staticmethod
    def utility(sigma, theta):
        return theta * sigma - sigma ** 2

    @staticmethod
    def privacy(sigma):
        return 1.0 - sigma

    def test_min_floor_gives_global_max(self):
        curve = frontier(self.utility, self.privacy, theta=1.0, grid_size=101)
        floors = [p for p, _ in curve]
        utilities = {p: u for p, u in curve}
        global_max = max(self.utility(s, 1.0) for s in np.linspace(0, 1, 101))
        assert utilities[min(floors)] == pytest.approx(global_max)

    def test_max_floor_forces_sigma_zero(self):
        curve = frontier(self.utility, self.privacy, theta=1.0, grid_size=101)
        assert curve[-1][1] == pytest.approx(self.utility(0.0, 1.0))

    def test_non_increasing_and_concave(self):
        curve = frontier(self.utility, self.privacy, theta=1.0, grid_size=201)
        values = [u for _, u in curve]
        assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
        second = np.diff(values, n=2)
        assert np.all(second <= 1e-9)

    def test_dense_grid_oracle_agreement(self):
        coarse = frontier(self.utility, self.privacy, 1.0, grid_size=21)
        dense = frontier(self.utility, self.privacy, 1.0, grid_size=201)
        dense_floors = np.array([p for p, _ in dense])
        for floor, value in coarse:
            nearest = int(np.argmin(np.abs(dense_floors - floor)))
            assert value == pytest.approx(dense[nearest][1], abs=5e-3)

    def test_non_monotone_privacy_rejected(self):
        with pytest.raises(PrivacyError):
            frontier(self.utility, lambda s: s, theta=1.0)


class TestThresholdPolicy:
    def test_above_increases(self):
        assert threshold_policy(0.9, 0.5, lambda p: 0.5) == "increase"

    def test_below_decreases(self):
        assert threshold_policy(0.1, 0.5, lambda p: 0.5) == "decrease"

    def test_equal_holds(self):
        assert threshold_policy(0.5, 0.5, lambda p: 0.5) == "hold"
