"""Preference, cost, capability and belief model tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpmm.economics import (
    IDLE,
    AgentState,
    BeliefState,
    BuyerPreference,
    CapabilitySpec,
    DegenerateEvidence,
    DimFn,
    DimensionMismatch,
    QualityVector,
    SellerCostModel,
    StateFn,
    eval_cost,
    eval_utility,
    eval_valuation,
    forget,
    gaussian_likelihood,
    quality_feasible,
    update_beliefs,
)


def pref(*pairs):
    weights, vals = zip(*pairs)
    return BuyerPreference(tuple(weights), tuple(vals))


IDENTITY = DimFn("identity")
SQRT = DimFn("sqrt")


class TestValuation:
    def test_weighted_average(self):
        p = pref((StateFn(0.5), IDENTITY), (StateFn(0.5), IDENTITY))
        assert eval_valuation(p, QualityVector.of(0.4, 0.8), IDLE) == pytest.approx(0.6)

    def test_zero_quality_zero_value(self):
        p = pref((StateFn(3.0), IDENTITY), (StateFn(1.0), SQRT))
        assert eval_valuation(p, QualityVector.of(0.0, 0.0), IDLE) == 0.0

    def test_hand_arithmetic(self):
        # 2 * sqrt(0.25) + 1 * 0.5 = 1.5
        p = pref((StateFn(2.0), SQRT), (StateFn(1.0), IDENTITY))
        assert eval_valuation(p, QualityVector.of(0.25, 0.5), IDLE) == pytest.approx(1.5)

    def test_dimension_mismatch(self):
        p = pref((StateFn(1.0), IDENTITY))
        with pytest.raises(DimensionMismatch):
            eval_valuation(p, QualityVector.of(0.5, 0.5), IDLE)

    @given(
        q_lo=st.lists(st.floats(0, 1), min_size=2, max_size=2),
        bumps=st.lists(st.floats(0, 1), min_size=2, max_size=2),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_quality(self, q_lo, bumps):
        p = pref((StateFn(2.0), SQRT), (StateFn(0.5), IDENTITY))
        low = QualityVector.of(*q_lo)
        high = QualityVector.of(*(min(1.0, a + b) for a, b in zip(q_lo, bumps)))
        assert eval_valuation(p, high, IDLE) >= eval_valuation(p, low, IDLE) - 1e-12


class TestUtility:
    def test_subtraction(self):
        p = pref((StateFn(10.0), IDENTITY))
        q = QualityVector.of(1.0)
        assert eval_utility(p, q, 3.0, IDLE) == pytest.approx(7.0)

    def test_indifference(self):
        p = pref((StateFn(10.0), IDENTITY))
        q = QualityVector.of(1.0)
        assert eval_utility(p, q, 10.0, IDLE) == pytest.approx(0.0)

    def test_negative_surplus_permitted(self):
        p = pref((StateFn(5.0), IDENTITY))
        q = QualityVector.of(1.0)
        assert eval_utility(p, q, 8.0, IDLE) == pytest.approx(-3.0)

    @given(p1=st.floats(0, 50), gap=st.floats(1e-6, 10))
    @settings(max_examples=60, deadline=None)
    def test_strictly_decreasing_in_price(self, p1, gap):
        pr = pref((StateFn(4.0), IDENTITY))
        q = QualityVector.of(0.7)
        assert eval_utility(pr, q, p1, IDLE) > eval_utility(pr, q, p1 + gap, IDLE)


class TestCost:
    def test_full_quality(self):
        m = SellerCostModel(StateFn(1.0), (StateFn(2.0),), (2.0,))
        assert eval_cost(m, QualityVector.of(1.0), IDLE) == pytest.approx(3.0)

    def test_zero_quality_fixed_only(self):
        m = SellerCostModel(StateFn(1.5), (StateFn(2.0), StateFn(4.0)), (2.0, 3.0))
        assert eval_cost(m, QualityVector.of(0.0, 0.0), IDLE) == pytest.approx(1.5)

    def test_hand_arithmetic(self):
        # 1 + 0.5^2 + 0.5^3 = 1.375
        m = SellerCostModel(StateFn(1.0), (StateFn(1.0), StateFn(1.0)), (2.0, 3.0))
        assert eval_cost(m, QualityVector.of(0.5, 0.5), IDLE) == pytest.approx(1.375)

    def test_convex_along_each_axis(self):
        m = SellerCostModel(StateFn(0.3), (StateFn(1.2), StateFn(0.7)), (2.0, 2.5))
        for axis in range(2):
            for x in np.linspace(0.1, 0.8, 8):
                h = 0.05
                def at(v):
                    vals = [0.5, 0.5]
                    vals[axis] = v
                    return eval_cost(m, QualityVector.of(*vals), IDLE)
                second_diff = at(x + h) - 2 * at(x) + at(x - h)
                assert second_diff >= -1e-9

    def test_exponent_must_exceed_one(self):
        with pytest.raises(Exception):
            SellerCostModel(StateFn(0.0), (StateFn(1.0),), (1.0,))

    def test_state_dependence(self):
        m = SellerCostModel(StateFn(1.0, load_slope=2.0), (StateFn(1.0),), (2.0,))
        busy = AgentState(load=1.0)
        assert eval_cost(m, QualityVector.of(0.0), busy) == pytest.approx(3.0)


class TestFeasibility:
    def test_full_box(self):
        cap = CapabilitySpec("c", "spec", ((0.0, 1.0), (0.0, 1.0)))
        assert quality_feasible(cap, QualityVector.of(0.3, 0.9))

    def test_below_lower_bound(self):
        cap = CapabilitySpec("c", "spec", ((0.5, 0.9),))
        assert not quality_feasible(cap, QualityVector.of(0.4))

    def test_closed_boundary(self):
        cap = CapabilitySpec("c", "spec", ((0.5, 0.9),))
        assert quality_feasible(cap, QualityVector.of(0.5))
        assert quality_feasible(cap, QualityVector.of(0.9))


class TestBeliefs:
    def test_uninformative_likelihood_bitwise_noop(self):
        b = BeliefState.uniform(0.0, 10.0, atoms=16)
        updated = update_beliefs(b, lambda a: 0.7)
        assert all(abs(x - y) <= 1e-12 for x, y in zip(b.mass, updated.mass))

    def test_direct_bayes_arithmetic(self):
        b = BeliefState((1.0, 2.0), (0.5, 0.5))
        updated = update_beliefs(b, {1.0: 0.8, 2.0: 0.2}.get)
        assert updated.mass[0] == pytest.approx(0.8)
        assert updated.mass[1] == pytest.approx(0.2)

    def test_point_mass_absorbing(self):
        b = BeliefState((1.0, 2.0, 3.0), (0.0, 1.0, 0.0))
        updated = update_beliefs(b, lambda a: 0.5 if a < 2.5 else 0.9)
        assert updated.mass == (0.0, 1.0, 0.0)

    def test_degenerate_evidence_raises(self):
        b = BeliefState((1.0, 2.0), (0.5, 0.5))
        with pytest.raises(DegenerateEvidence):
            update_beliefs(b, lambda a: 0.0)

    def test_supports_precomputed_array(self):
        b = BeliefState.uniform(0.0, 8.0, atoms=32)
        like = gaussian_likelihood(b.support, observed=4.0, noise_sd=1.0)
        updated = update_beliefs(b, like)
        assert abs(updated.mean() - 4.0) < 0.2

    @given(obs=st.floats(1.0, 9.0), sd=st.floats(0.2, 3.0))
    @settings(max_examples=60, deadline=None)
    def test_mass_conservation(self, obs, sd):
        b = BeliefState.uniform(0.0, 10.0, atoms=48)
        updated = update_beliefs(b, gaussian_likelihood(b.support, obs, sd))
        assert abs(sum(updated.mass) - 1.0) <= 1e-9

    def test_window_bookkeeping_and_forget(self):
        b = BeliefState.uniform(0.0, 10.0, atoms=8, memory_window=2)
        b1 = update_beliefs(b, gaussian_likelihood(b.support, 2.0, 1.0))
        assert b1.window_remaining == 1
        b2 = update_beliefs(b1, gaussian_likelihood(b.support, 2.0, 1.0))
        assert b2.window_remaining == 0
        rebased = forget(b2)
        assert rebased.window_remaining == 2
        # rebased mass moves back toward the uniform anchor
        lam = 1.0 - 1.0 / 2
        expected = lam * np.asarray(b2.mass) + (1 - lam) * np.asarray(b.mass)
        expected /= expected.sum()
        assert np.allclose(rebased.mass, expected)

    def test_learning_concentrates_on_truth(self):
        b = BeliefState.uniform(0.0, 10.0, atoms=64)
        rng = np.random.default_rng(7)
        truth = 4.0
        for _ in range(300):
            b = update_beliefs(b, gaussian_likelihood(b.support, truth + rng.normal(0, 0.5), 0.5))
        assert abs(b.mean() - truth) < 0.1
