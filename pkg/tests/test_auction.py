"""Winner determination and VCG payment tests against the enumeration oracle."""

import pytest

from cpmm.auction import (
    Allocation,
    AuctionError,
    Bid,
    NoAllocation,
    Task,
    WorkflowDag,
    run_auction,
    truthfulness_probe,
    validate_bid,
    vcg_payments,
    winner_determination,
)
from cpmm.seeding import stream

from auction_oracle import oracle_vcg_payments, oracle_winner_determination


def dag(*task_ids, edges=()):
    return WorkflowDag(tuple(Task(t, f"cap.{t}") for t in task_ids), tuple(edges))


def bid(bid_id, bidder, tasks, price, true_cost=None):
    return Bid(bid_id, bidder, frozenset(tasks), price=price, true_cost=true_cost)


class TestWorkflowDag:
    def test_rejects_cycle(self):
        with pytest.raises(AuctionError):
            dag("a", "b", edges=[("a", "b"), ("b", "a")])

    def test_rejects_duplicate_tasks(self):
        with pytest.raises(AuctionError):
            WorkflowDag((Task("a", "c"), Task("a", "c")))

    def test_accepts_dag(self):
        w = dag("a", "b", "c", edges=[("a", "b"), ("b", "c"), ("a", "c")])
        assert w.task_ids == {"a", "b", "c"}


class TestValidateBid:
    def test_unknown_task_false(self):
        assert not validate_bid(bid("b1", "s1", {"zz"}, 3), dag("a"))

    def test_quality_at_threshold_true(self):
        w = WorkflowDag((Task("a", "cap.a", (0.5, 0.5)),))
        offer = Bid("b1", "s1", frozenset({"a"}), {"a": (0.5, 0.5)}, 3)
        assert validate_bid(offer, w)

    def test_quality_below_spec_false(self):
        w = WorkflowDag((Task("a", "cap.a", (0.5, 0.5)),))
        offer = Bid("b1", "s1", frozenset({"a"}), {"a": (0.4, 0.9)}, 3)
        assert not validate_bid(offer, w)

    def test_capability_check(self):
        w = dag("a")
        offer = bid("b1", "s1", {"a"}, 3)
        assert validate_bid(offer, w, {"s1": {"cap.a"}})
        assert not validate_bid(offer, w, {"s1": {"cap.other"}})


class TestWinnerDetermination:
    def test_single_covering_bid(self):
        w = dag("a", "b")
        only = bid("b1", "s1", {"a", "b"}, 7)
        alloc = winner_determination(w, [only], budget=100)
        assert alloc.chosen == {"b1"}
        assert alloc.total_price == 7

    def test_bundle_beats_split(self):
        # brute-force over all covers: the {A,B}@6 bundle beats 3+4
        w = dag("a", "b")
        bids = [
            bid("b1", "s1", {"a"}, 3),
            bid("b2", "s2", {"a"}, 5),
            bid("b3", "s3", {"b"}, 4),
            bid("b4", "s4", {"a", "b"}, 6),
        ]
        alloc = winner_determination(w, bids, budget=100)
        assert alloc.chosen == {"b4"}
        assert alloc.total_price == 6

    def test_uncoverable_task_infeasible(self):
        w = dag("a", "b")
        with pytest.raises(NoAllocation):
            winner_determination(w, [bid("b1", "s1", {"a"}, 3)], budget=100)

    def test_budget_exceeded_infeasible(self):
        w = dag("a")
        with pytest.raises(NoAllocation):
            winner_determination(w, [bid("b1", "s1", {"a"}, 50)], budget=10)

    def test_lexicographic_tie_break(self):
        w = dag("a")
        bids = [bid("z", "s1", {"a"}, 5), bid("b", "s2", {"a"}, 5)]
        alloc = winner_determination(w, bids, budget=100)
        assert alloc.chosen == {"b"}

    def test_duplicate_bid_ids_rejected(self):
        w = dag("a")
        with pytest.raises(AuctionError):
            winner_determination(w, [bid("x", "s1", {"a"}, 1), bid("x", "s2", {"a"}, 2)], 10)


class TestVcgPayments:
    def test_vickrey_second_price(self):
        w = dag("a")
        bids = [bid("b1", "s1", {"a"}, 3), bid("b2", "s2", {"a"}, 5)]
        alloc, pay = run_auction(w, bids, budget=100)
        assert alloc.chosen == {"b1"}
        assert pay.payments == {"s1": 5}

    def test_two_task_externalities(self):
        # oracle-derived: A-winner paid 5, B-winner paid 6
        w = dag("a", "b")
        bids = [
            bid("b1", "s1", {"a"}, 3),
            bid("b2", "s2", {"a"}, 5),
            bid("b3", "s3", {"b"}, 4),
            bid("b4", "s4", {"b"}, 6),
        ]
        alloc, pay = run_auction(w, bids, budget=100)
        assert pay.payments == {"s1": 5, "s3": 6}

    def test_sole_bidder_reserve_substitution(self):
        # removing the only bidder leaves every task at reserve = budget/|tasks|
        w = dag("a", "b")
        bids = [bid("b1", "s1", {"a", "b"}, 7)]
        alloc, pay = run_auction(w, bids, budget=40)
        assert pay.payments == {"s1": 40 - (7 - 7)}  # two reserve tasks at 20 each

    def test_budget_cap_scales_proportionally(self):
        w = dag("a", "b")
        bids = [
            bid("b1", "s1", {"a"}, 10),
            bid("b2", "s2", {"b"}, 10),
            bid("b3", "s3", {"a"}, 18),
            bid("b4", "s4", {"b"}, 18),
        ]
        # externality payments are 18 + 18 = 36 > 24, scaled to 12 + 12
        pay = vcg_payments(w, bids, winner_determination(w, bids, 24), 24)
        assert pay.capped
        assert pay.uncapped_payments == {"s1": 18, "s2": 18}
        assert pay.payments == {"s1": 12, "s2": 12}
        assert sum(pay.payments.values()) <= 24

    def test_budget_feasibility_always(self):
        rng = stream(17, "cap-fuzz")
        for _ in range(200):
            n_tasks = rng.randint(1, 3)
            tasks = [f"t{i}" for i in range(n_tasks)]
            w = dag(*tasks)
            bids = []
            for i in range(rng.randint(1, 6)):
                size = rng.randint(1, n_tasks)
                subset = frozenset(rng.sample(tasks, size))
                bids.append(Bid(f"b{i}", f"s{i % 4}", subset, price=rng.randint(1, 9)))
            budget = rng.randint(5, 30)
            try:
                alloc, pay = run_auction(w, bids, budget)
            except NoAllocation:
                continue
            assert sum(pay.payments.values()) <= budget
            assert all(p >= 0 for p in pay.payments.values())


class TestOracleEquivalence:
    def test_random_instances_match_oracle(self):
        rng = stream(23, "oracle")
        checked = 0
        for _ in range(300):
            n_tasks = rng.randint(1, 4)
            tasks = [f"t{i}" for i in range(n_tasks)]
            w = dag(*tasks)
            bids = []
            for i in range(rng.randint(1, 8)):
                size = rng.randint(1, n_tasks)
                subset = frozenset(rng.sample(tasks, size))
                bids.append(Bid(f"b{i}", f"s{i % 5}", subset, price=rng.choice([1, 2, 3, 4, 5])))
            budget = 100
            try:
                expected = oracle_winner_determination(w, bids, budget)
            except NoAllocation:
                with pytest.raises(NoAllocation):
                    winner_determination(w, bids, budget)
                continue
            actual = winner_determination(w, bids, budget)
            assert actual == expected
            assert vcg_payments(w, bids, actual, budget) == oracle_vcg_payments(
                w, bids, expected, budget
            )
            checked += 1
        assert checked > 150


class TestTruthfulness:
    def test_no_deviations_pass(self):
        w = dag("a")
        bids = [bid("b1", "s1", {"a"}, 3, true_cost=3), bid("b2", "s2", {"a"}, 5, true_cost=5)]
        report = truthfulness_probe(w, bids, [], budget=100)
        assert report.ok

    def test_overbidding_loser_gains_nothing(self):
        w = dag("a")
        bids = [bid("b1", "s1", {"a"}, 3, true_cost=3), bid("b2", "s2", {"a"}, 5, true_cost=5)]
        # loser undercuts to win: wins but is paid the old winner's externality
        deviations = [("b2", p) for p in range(1, 9)]
        report = truthfulness_probe(w, bids, deviations, budget=100)
        assert report.ok, report.counterexamples

    def test_winner_cannot_profit_by_misreport(self):
        w = dag("a", "b")
        bids = [
            bid("b1", "s1", {"a"}, 3, true_cost=3),
            bid("b2", "s2", {"a"}, 5, true_cost=5),
            bid("b3", "s3", {"b"}, 4, true_cost=4),
            bid("b4", "s4", {"b"}, 6, true_cost=6),
        ]
        deviations = [("b1", p) for p in range(1, 10)] + [("b3", p) for p in range(1, 10)]
        report = truthfulness_probe(w, bids, deviations, budget=100)
        assert report.ok, report.counterexamples

    def test_budget_cap_can_break_truthfulness(self):
        # known cap-rule deviation: with a binding cap, a higher report can
        # shift the proportional scaling in the deviator's favor
        w = dag("a", "b")
        bids = [
            bid("b1", "s1", {"a"}, 10, true_cost=10),
            bid("b2", "s2", {"b"}, 10, true_cost=10),
            bid("b3", "s3", {"a"}, 14, true_cost=14),
            bid("b4", "s4", {"b"}, 14, true_cost=14),
        ]
        report = truthfulness_probe(
            w, bids, [("b1", p) for p in range(6, 14)], budget=24
        )
        # the probe reports honestly either way; this instance documents the
        # cap interaction rather than asserting a clean pass
        assert isinstance(report.ok, bool)
