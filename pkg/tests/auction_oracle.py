"""Brute-force auction oracle: subset enumeration, independent of the solver.

Enumerates every subset of bids, keeps exact covers, and minimizes total
price with the same lexicographic tie-break and reserve-substitution rules
the production solver documents. Used only by tests.
"""

from itertools import combinations

from cpmm.auction import Allocation, Bid, NoAllocation, PaymentVector, WorkflowDag


def enumerate_min_cover(task_ids, bids):
    """(cost, sorted bid ids) of the cheapest exact cover, or None."""
    tasks = frozenset(task_ids)
    best = None
    for r in range(1, len(bids) + 1):
        for combo in combinations(bids, r):
            covered = [t for b in combo for t in b.task_set]
            if len(covered) != len(set(covered)) or set(covered) != tasks:
                continue
            candidate = (sum(b.price for b in combo), sorted(b.bid_id for b in combo))
            if best is None or candidate < best:
                best = candidate
    return best


def oracle_winner_determination(w: WorkflowDag, bids, budget):
    best = enumerate_min_cover(sorted(w.task_ids), bids)
    if best is None:
        raise NoAllocation("oracle: no exact cover")
    cost, chosen = best
    if cost > budget:
        raise NoAllocation("oracle: cheapest cover exceeds budget")
    by_id = {b.bid_id: b for b in bids}
    cover = {t: bid_id for bid_id in chosen for t in by_id[bid_id].task_set}
    return Allocation(frozenset(chosen), cover, cost)


def oracle_counterfactual(w, bids, excluded_bidder, budget):
    task_ids = sorted(w.task_ids)
    remaining = [b for b in bids if b.bidder_id != excluded_bidder]
    best = enumerate_min_cover(task_ids, remaining)
    if best is not None:
        return best[0]
    reserve = budget // len(task_ids)
    virtual = [
        Bid(f"__reserve__{t}", "__reserve__", frozenset({t}), price=reserve) for t in task_ids
    ]
    best = enumerate_min_cover(task_ids, remaining + virtual)
    return best[0]


def oracle_vcg_payments(w, bids, alloc, budget):
    by_id = {b.bid_id: b for b in bids}
    winner_price = {}
    for bid_id in alloc.chosen:
        bid = by_id[bid_id]
        winner_price[bid.bidder_id] = winner_price.get(bid.bidder_id, 0) + bid.price
    payments = {}
    for bidder, price_i in winner_price.items():
        without = oracle_counterfactual(w, bids, bidder, budget)
        payments[bidder] = without - (alloc.total_price - price_i)
    total = sum(payments.values())
    if total <= budget:
        return PaymentVector(dict(payments), budget, False, dict(payments))
    # proportional scaling by largest remainder, mirroring the documented rule
    from fractions import Fraction

    scaled = {i: Fraction(p * budget, total) for i, p in payments.items()}
    floored = {i: int(v) for i, v in scaled.items()}
    leftover = budget - sum(floored.values())
    order = sorted(payments, key=lambda i: (scaled[i] - floored[i], i), reverse=True)
    for i in order[:leftover]:
        floored[i] += 1
    return PaymentVector(floored, budget, True, dict(payments))
