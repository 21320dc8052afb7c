"""Workflow-composition combinatorial auction.

Buyers post a task DAG; sellers bid bundles (task subset, quality offers,
total price). Winner determination finds the minimum-price exact cover of
all tasks by task-disjoint bids via branch and bound with an admissible
per-task amortized lower bound. Payments follow a procurement VCG rule
(each winner is paid its externality) with two modifications: removed-bidder
counterfactuals may price tasks at a per-task reserve of budget/|tasks| when
no real cover survives, and total payments are proportionally scaled down to
the buyer's declared budget when they would exceed it.

Prices and payments are integer minor units throughout, so solver and oracle
results compare exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


class AuctionError(ValueError):
    pass


class NoAllocation(AuctionError):
    """No exact cover exists, or the cheapest cover exceeds the budget."""


@dataclass(frozen=True)
class Task:
    id: str
    capability: str
    quality_spec: tuple[float, ...] = ()  # per-dimension minimum quality


@dataclass(frozen=True)
class WorkflowDag:
    tasks: tuple[Task, ...]
    edges: tuple[tuple[str, str], ...] = ()  # (u, v): u precedes v

    def __post_init__(self):
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise AuctionError("duplicate task ids")
        id_set = set(ids)
        adjacency: dict[str, list[str]] = {i: [] for i in ids}
        indegree = {i: 0 for i in ids}
        for u, v in self.edges:
            if u not in id_set or v not in id_set:
                raise AuctionError(f"edge ({u}, {v}) references unknown task")
            adjacency[u].append(v)
            indegree[v] += 1
        queue = [i for i in ids if indegree[i] == 0]
        seen = 0
        while queue:
            node = queue.pop()
            seen += 1
            for nxt in adjacency[node]:
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    queue.append(nxt)
        if seen != len(ids):
            raise AuctionError("dependency edges contain a cycle")

    @property
    def task_ids(self) -> frozenset[str]:
        return frozenset(t.id for t in self.tasks)

    def task(self, task_id: str) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise AuctionError(f"unknown task {task_id!r}")


@dataclass(frozen=True)
class Bid:
    bid_id: str
    bidder_id: str
    task_set: frozenset[str]
    quality_offers: dict[str, tuple[float, ...]] = field(default_factory=dict)
    price: int = 0  # total bundle price in minor units
    true_cost: int | None = None  # for truthfulness probes only

    def __post_init__(self):
        if not self.task_set:
            raise AuctionError(f"bid {self.bid_id}: empty task set")
        if self.price < 0:
            raise AuctionError(f"bid {self.bid_id}: negative price")
        if self.quality_offers and set(self.quality_offers) != set(self.task_set):
            raise AuctionError(f"bid {self.bid_id}: quality offers must be keyed exactly by the task set")


@dataclass(frozen=True)
class Allocation:
    chosen: frozenset[str]  # winning bid ids
    cover: dict[str, str]  # task id -> winning bid id
    total_price: int


@dataclass(frozen=True)
class PaymentVector:
    payments: dict[str, int]  # bidder id -> minor units
    budget: int
    capped: bool = False
    uncapped_payments: dict[str, int] = field(default_factory=dict)


def validate_bid(bid: Bid, w: WorkflowDag, bidder_capabilities: dict[str, set[str]] | None = None) -> bool:
    """True iff the bid names known tasks, meets their quality specs, and the
    bidder holds each required capability (when a capability map is given)."""
    known = w.task_ids
    if not bid.task_set <= known:
        return False
    for task_id in bid.task_set:
        task = w.task(task_id)
        if bidder_capabilities is not None:
            if task.capability not in bidder_capabilities.get(bid.bidder_id, set()):
                return False
        if task.quality_spec:
            offer = bid.quality_offers.get(task_id)
            if offer is None or len(offer) != len(task.quality_spec):
                return False
            if any(have < need for have, need in zip(offer, task.quality_spec)):
                return False
    return True


def _search_min_cover(task_ids: list[str], bids: list[Bid]) -> tuple[int, list[str]] | None:
    """Branch-and-bound minimum-price exact cover.

    Returns (cost, sorted winning bid ids) or None when no cover exists.
    Lower bound: each uncovered task contributes the cheapest amortized
    per-task price (bid price / bundle size) among bids covering it.
    """
    index = {t: i for i, t in enumerate(task_ids)}
    n = len(task_ids)
    full_mask = (1 << n) - 1

    prepared = []
    for bid in bids:
        mask = 0
        for t in bid.task_set:
            mask |= 1 << index[t]
        prepared.append((mask, bid.price, bid.bid_id))

    by_task: list[list[tuple[int, int, str]]] = [[] for _ in range(n)]
    per_task_floor = [None] * n
    for mask, price, bid_id in prepared:
        amortized = Fraction(price, bin(mask).count("1"))
        for i in range(n):
            if mask >> i & 1:
                by_task[i].append((mask, price, bid_id))
                if per_task_floor[i] is None or amortized < per_task_floor[i]:
                    per_task_floor[i] = amortized
    if any(not options for options in by_task):
        return None
    for options in by_task:
        options.sort(key=lambda item: (item[1], item[2]))

    best: list = [None]  # (cost, sorted ids)

    def bound(covered: int) -> Fraction:
        total = Fraction(0)
        for i in range(n):
            if not covered >> i & 1:
                total += per_task_floor[i]
        return total

    def recurse(covered: int, cost: int, chosen: list[str]) -> None:
        if covered == full_mask:
            candidate = (cost, sorted(chosen))
            if best[0] is None or candidate < best[0]:
                best[0] = candidate
            return
        if best[0] is not None and Fraction(cost) + bound(covered) > best[0][0]:
            return
        # branch on the uncovered task with fewest live candidate bids
        pivot, pivot_size = -1, None
        for i in range(n):
            if covered >> i & 1:
                continue
            live = sum(1 for mask, _p, _b in by_task[i] if not mask & covered)
            if live == 0:
                return
            if pivot_size is None or live < pivot_size:
                pivot, pivot_size = i, live
        for mask, price, bid_id in by_task[pivot]:
            if mask & covered:
                continue
            chosen.append(bid_id)
            recurse(covered | mask, cost + price, chosen)
            chosen.pop()

    recurse(0, 0, [])
    if best[0] is None:
        return None
    return best[0][0], best[0][1]


def winner_determination(w: WorkflowDag, bids: list[Bid], budget: int) -> Allocation:
    """Minimum-total-price exact cover of all tasks within the budget.

    Ties between equal-cost covers break lexicographically on the sorted
    winning-bid id list, so outcomes are deterministic. Dependency edges do
    not constrain the allocation; they order execution downstream.
    """
    task_ids = sorted(w.task_ids)
    ids_seen = set()
    for bid in bids:
        if bid.bid_id in ids_seen:
            raise AuctionError(f"duplicate bid id {bid.bid_id!r}")
        ids_seen.add(bid.bid_id)
        if not bid.task_set <= w.task_ids:
            raise AuctionError(f"bid {bid.bid_id} references unknown tasks")
    result = _search_min_cover(task_ids, bids)
    if result is None:
        raise NoAllocation("no exact cover of the tasks exists")
    cost, chosen_ids = result
    if cost > budget:
        raise NoAllocation(f"cheapest cover costs {cost}, exceeding budget {budget}")
    by_id = {b.bid_id: b for b in bids}
    cover = {}
    for bid_id in chosen_ids:
        for task in by_id[bid_id].task_set:
            cover[task] = bid_id
    return Allocation(frozenset(chosen_ids), cover, cost)


RESERVE_BID_PREFIX = "__reserve__"


def _counterfactual_cost(w: WorkflowDag, bids: list[Bid], excluded_bidder: str, budget: int) -> int:
    """Cheapest cover with `excluded_bidder` removed.

    If no real cover survives, re-solve allowing a virtual per-task reserve
    bid priced at budget/|tasks| (integer floor), which keeps payments finite
    without competition.
    """
    remaining = [b for b in bids if b.bidder_id != excluded_bidder]
    task_ids = sorted(w.task_ids)
    result = _search_min_cover(task_ids, remaining)
    if result is not None:
        return result[0]
    reserve = budget // len(task_ids)
    virtual = [
        Bid(f"{RESERVE_BID_PREFIX}{t}", RESERVE_BID_PREFIX, frozenset({t}), price=reserve)
        for t in task_ids
    ]
    result = _search_min_cover(task_ids, remaining + virtual)
    assert result is not None  # reserve bids alone always cover
    return result[0]


def _scale_to_budget(payments: dict[str, int], budget: int) -> dict[str, int]:
    """Proportionally scale payments so their sum is <= budget (largest-remainder split)."""
    total = sum(payments.values())
    if total <= budget or total == 0:
        return dict(payments)
    scaled = {i: Fraction(p * budget, total) for i, p in payments.items()}
    floored = {i: int(v) for i, v in scaled.items()}
    leftover = budget - sum(floored.values())
    remainders = sorted(
        payments, key=lambda i: (scaled[i] - floored[i], i), reverse=True
    )
    for i in remainders[:leftover]:
        floored[i] += 1
    return floored


def vcg_payments(w: WorkflowDag, bids: list[Bid], alloc: Allocation, budget: int) -> PaymentVector:
    """Pay each winning bidder its externality, scaled down to the budget.

    payment_i = cost(optimal cover without i, reserve-priced if uncoverable)
              - (alloc.total_price - price_i). Without the cap binding this
    is >= price_i for every winner; after proportional capping it may not be.
    """
    by_id = {b.bid_id: b for b in bids}
    winner_price: dict[str, int] = {}
    for bid_id in alloc.chosen:
        bid = by_id[bid_id]
        winner_price[bid.bidder_id] = winner_price.get(bid.bidder_id, 0) + bid.price
    payments: dict[str, int] = {}
    for bidder, price_i in winner_price.items():
        without = _counterfactual_cost(w, bids, bidder, budget)
        payments[bidder] = without - (alloc.total_price - price_i)
    capped = sum(payments.values()) > budget
    final = _scale_to_budget(payments, budget) if capped else dict(payments)
    return PaymentVector(final, budget, capped, dict(payments))


def run_auction(w: WorkflowDag, bids: list[Bid], budget: int) -> tuple[Allocation, PaymentVector]:
    alloc = winner_determination(w, bids, budget)
    return alloc, vcg_payments(w, bids, alloc, budget)


@dataclass(frozen=True)
class DeviationOutcome:
    bid_id: str
    reported_price: int
    truthful_utility: int
    deviant_utility: int

    @property
    def profitable(self) -> bool:
        return self.deviant_utility > self.truthful_utility


@dataclass(frozen=True)
class TruthfulnessReport:
    ok: bool
    outcomes: tuple[DeviationOutcome, ...]

    @property
    def counterexamples(self) -> tuple[DeviationOutcome, ...]:
        return tuple(o for o in self.outcomes if o.profitable)


def _bidder_utility(w: WorkflowDag, bids: list[Bid], budget: int, bidder: str) -> int:
    """Payment minus true cost of won bundles; 0 when losing or infeasible."""
    try:
        alloc, pay = run_auction(w, bids, budget)
    except NoAllocation:
        return 0
    by_id = {b.bid_id: b for b in bids}
    cost = 0
    won = False
    for bid_id in alloc.chosen:
        bid = by_id[bid_id]
        if bid.bidder_id == bidder:
            won = True
            if bid.true_cost is None:
                raise AuctionError(f"bid {bid_id} lacks true_cost for utility accounting")
            cost += bid.true_cost
    if not won:
        return 0
    return pay.payments[bidder] - cost


def truthfulness_probe(
    w: WorkflowDag, bids: list[Bid], deviations: list[tuple[str, int]], budget: int
) -> TruthfulnessReport:
    """Check that no supplied misreport strictly raises the deviator's utility.

    Deviations are (bid_id, misreported price) pairs; truthful bids must
    carry true_cost. A budget-capped instance can legitimately fail; the
    report carries the counterexamples rather than raising.
    """
    truthful_u = {b.bidder_id: None for b in bids}
    outcomes = []
    for bid_id, new_price in deviations:
        target = next((b for b in bids if b.bid_id == bid_id), None)
        if target is None:
            raise AuctionError(f"deviation names unknown bid {bid_id!r}")
        if truthful_u[target.bidder_id] is None:
            truthful_u[target.bidder_id] = _bidder_utility(w, bids, budget, target.bidder_id)
        mutated = [
            b if b.bid_id != bid_id else Bid(
                b.bid_id, b.bidder_id, b.task_set, b.quality_offers, new_price, b.true_cost
            )
            for b in bids
        ]
        deviant = _bidder_utility(w, mutated, budget, target.bidder_id)
        outcomes.append(
            DeviationOutcome(bid_id, new_price, truthful_u[target.bidder_id], deviant)
        )
    return TruthfulnessReport(not any(o.profitable for o in outcomes), tuple(outcomes))
