"""Repeated bilateral-game market engine.

Each round matches buyers to sellers (random / capability / preference
mode), then plays the five-step stage game per pair: capability
advertisement, quality request with a maximum willingness to pay, a bandit
price quote or a 402 rejection, the buyer's accept/reject decision, and
delivery with quasi-linear payoffs. Buyers learn the seller cost scale from
noisy cost signals by grid Bayes updates; sellers learn quote levels by UCB
over the scenario's price grid. Disclosure-dependent risk premia scale the
buyer's willingness to pay, which is what gives prices their negative
privacy elasticity.

Runs are fully deterministic given the scenario seed: all randomness flows
through named streams derived from it. One run is single-threaded; a
harness may run independent (config, seed) cells in parallel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import registry as ans
from .bandits import UcbState, ucb_select, ucb_update
from .economics import (
    IDLE,
    AgentState,
    BeliefState,
    QualityVector,
    eval_cost,
    eval_valuation,
    forget,
    gaussian_likelihood,
    quality_feasible,
    update_beliefs,
)
from .money import Money, from_float
from .scenario import ScenarioConfig
from .seeding import stream

NO_PRICE = float("nan")


class MarketError(ValueError):
    pass


class OracleUndefined(MarketError):
    """No price admits gains from trade."""


@dataclass
class MarketBuyer:
    id: str
    capability: str
    value: float
    q_request: QualityVector
    belief: BeliefState
    belief_mean: float
    state: AgentState
    utility_total: float = 0.0
    trades: int = 0
    partner_scores: dict[str, float] = field(default_factory=dict)

    def max_price(self, surplus_share: float, premium: float) -> float:
        bargain = (1.0 - surplus_share) * self.value + surplus_share * self.belief_mean
        return premium * bargain


@dataclass
class MarketSeller:
    id: str
    capability: str
    cost_model: object
    quality_region: tuple[tuple[float, float], ...]
    bandit: UcbState
    arms: list[float]
    disclosure: float
    state: AgentState
    profit_total: float = 0.0
    trades: int = 0
    arm_index: dict[float, int] = field(default_factory=dict)
    _cost_cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.arm_index:
            self.arm_index = {price: i for i, price in enumerate(self.arms)}

    def feasible(self, q: QualityVector) -> bool:
        return all(lo <= x <= hi for (lo, hi), x in zip(self.quality_region, q.values))

    def cost_for(self, q: QualityVector) -> float:
        """Delivery cost at the requested quality (cached per request point)."""
        cached = self._cost_cache.get(q.values)
        if cached is None:
            cached = eval_cost(self.cost_model, q, self.state)
            self._cost_cache[q.values] = cached
        return cached


@dataclass(frozen=True)
class StageOutcome:
    round: int
    buyer: str
    seller: str
    traded: bool
    price: float
    quality: tuple[float, ...]
    buyer_utility: float
    seller_profit: float
    rejected_402: bool = False


@dataclass
class MarketMetrics:
    rounds: int
    p_star: float | None
    first_best_round: float
    prices: list[float]
    errors: list[float]
    welfare: list[float]
    regret: list[float]
    efficiency: float | None
    trades: int
    rejections_402: int
    quote_rejections: int
    buyer_utilities: dict[str, float]
    seller_profits: dict[str, float]
    sybil_benefit: dict[int, float] = field(default_factory=dict)
    protocol_sessions: int = 0
    protocol_conserved: bool = True
    outcomes: list[StageOutcome] = field(default_factory=list)

    def summary_record(self) -> dict:
        return {
            "rounds": self.rounds,
            "p_star": self.p_star,
            "first_best_round": self.first_best_round,
            "efficiency": self.efficiency,
            "trades": self.trades,
            "rejections_402": self.rejections_402,
            "quote_rejections": self.quote_rejections,
            "final_cumulative_regret": self.regret[-1] if self.regret else 0.0,
            "median_price_last_decile": median_tail(self.prices, 0.1),
            "protocol_sessions": self.protocol_sessions,
            "protocol_conserved": self.protocol_conserved,
        }


def median_tail(series: list[float], fraction: float) -> float | None:
    tail = [x for x in series[int(len(series) * (1 - fraction)):] if not math.isnan(x)]
    return float(np.median(tail)) if tail else None


METRICS_COLUMNS = ("round", "price", "abs_error", "welfare", "cumulative_regret")


def metrics_table(metrics: "MarketMetrics") -> str:
    """Tabular text export: one header row, one row per round, stable order."""
    lines = ["\t".join(METRICS_COLUMNS)]
    for i in range(metrics.rounds):
        lines.append("\t".join((
            str(i + 1),
            repr(metrics.prices[i]),
            repr(metrics.errors[i]),
            repr(metrics.welfare[i]),
            repr(metrics.regret[i]),
        )))
    return "\n".join(lines) + "\n"


def build_market(config: ScenarioConfig) -> tuple[list[MarketBuyer], list[MarketSeller]]:
    """Expand archetypes into runtime agents, evaluating each buyer's value
    and each seller's cost at its standard quality point via the core models."""
    dims = config.registry
    buyers: list[MarketBuyer] = []
    for arch in config.buyers:
        pref = arch.preference()
        if len(arch.quality_request) != len(dims):
            raise MarketError(f"buyer archetype {arch.id_prefix}: quality_request dimension mismatch")
        q = QualityVector(arch.quality_request)
        state = AgentState(load=arch.load)
        value = eval_valuation(pref, q, state)
        belief = BeliefState.uniform(
            config.belief_lo, config.belief_hi, config.belief_atoms, config.belief_memory_window
        )
        for i in range(arch.count):
            buyers.append(MarketBuyer(
                f"{arch.id_prefix}{i}", arch.capability, value, q,
                belief, belief.mean(), state,
            ))
    sellers: list[MarketSeller] = []
    arms = config.quote_arms()
    n_sellers_total = sum(s.count for s in config.sellers)
    for arch in config.sellers:
        model = arch.cost_model()
        state = AgentState(load=arch.load)
        for i in range(arch.count):
            own_arms = list(arms)
            if config.shared_quotes:
                # stagger exploration orders so the market collectively sweeps
                # the price grid in parallel instead of in lockstep
                offset = (len(sellers) * len(arms)) // max(1, n_sellers_total)
                own_arms = arms[offset:] + arms[:offset]
            sellers.append(MarketSeller(
                f"{arch.id_prefix}{i}", arch.capability, model, arch.quality_region,
                UcbState.fresh(len(arms), reward_range=(-config.quote_hi, config.quote_hi)),
                own_arms, arch.disclosure, state,
            ))
    if not buyers or not sellers:
        raise MarketError("scenario must declare at least one buyer and one seller")
    return buyers, sellers


# --- equilibrium oracle ---------------------------------------------------------


def clearing_range(values: list[float], costs: list[float], step: float) -> tuple[float, float]:
    """Price range where demand (#values >= p) meets supply (#costs <= p).

    Scans a grid at currency precision. When integer demand/supply never
    coincide (a crossing without equality), the range between the last
    excess-demand price and the first excess-supply price is used.
    """
    if min(costs) > max(values):
        raise OracleUndefined("no gains from trade at any price")
    lo = min(min(costs), min(values))
    hi = max(max(costs), max(values))
    grid = np.round(np.arange(lo, hi + step / 2, step), 9)
    v = np.sort(values)
    c = np.sort(costs)
    demand = len(v) - np.searchsorted(v, grid, side="left")
    supply = np.searchsorted(c, grid, side="right")
    equal = (demand == supply) & (demand > 0)
    if equal.any():
        idx = np.nonzero(equal)[0]
        return float(grid[idx[0]]), float(grid[idx[-1]])
    trade_possible = (demand > 0) & (supply > 0)
    excess_demand = trade_possible & (demand > supply)
    excess_supply = trade_possible & (supply > demand)
    if excess_demand.any() and excess_supply.any():
        last_ed = np.nonzero(excess_demand)[0][-1]
        first_es = np.nonzero(excess_supply)[0][0]
        lo_i, hi_i = sorted((last_ed, first_es))
        return float(grid[lo_i]), float(grid[hi_i])
    if excess_demand.any():
        return float(grid[np.nonzero(excess_demand)[0][-1]]), float(grid[-1])
    raise OracleUndefined("demand and supply never overlap on the price grid")


def equilibrium_oracle(config: ScenarioConfig) -> float:
    """Midpoint of the brute-force market-clearing range (complete information).

    Seller costs are taken at the market's standard quality point (the first
    buyer archetype's request), which is where stationary scenarios trade.
    """
    buyers, sellers = build_market(config)
    q_std = buyers[0].q_request
    step = 10.0 ** (-config.precision)
    lo, hi = clearing_range(
        [b.value for b in buyers], [s.cost_for(q_std) for s in sellers], step
    )
    return (lo + hi) / 2.0


def first_best_welfare(buyers: list[MarketBuyer], sellers: list[MarketSeller]) -> float:
    """Max-weight feasible assignment welfare under complete information."""
    weights = np.zeros((len(buyers), len(sellers)))
    for i, b in enumerate(buyers):
        for j, s in enumerate(sellers):
            if b.capability == s.capability and s.feasible(b.q_request):
                weights[i, j] = max(0.0, b.value - s.cost_for(b.q_request))
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return float(weights[rows, cols].sum())


def measure_efficiency(outcomes, first_best: float) -> float:
    """eta = realized welfare / first-best welfare, clamped into [0, 1]."""
    if first_best <= 0.0:
        raise MarketError("first-best welfare must be > 0")
    achieved = sum(o.buyer_utility + o.seller_profit for o in outcomes)
    eta = achieved / first_best
    return min(max(eta, 0.0), 1.0) if eta <= 1.0 + 1e-9 else eta


# --- stage game -----------------------------------------------------------------


def run_stage_game(
    buyer: MarketBuyer,
    seller: MarketSeller,
    t: int,
    config: ScenarioConfig,
    signal_rng,
) -> tuple[StageOutcome, float | None, tuple[int, float] | None]:
    """One bilateral encounter.

    Returns the outcome, the buyer's private cost signal (None when the pair
    never interacted economically), and the seller's public quote outcome
    (arm, realized reward) when a quote was issued.
    """
    # 1: capability advertisement and feasibility gate
    if buyer.capability != seller.capability or not seller.feasible(buyer.q_request):
        return StageOutcome(t, buyer.id, seller.id, False, NO_PRICE,
                            buyer.q_request.values, 0.0, 0.0), None, None
    # 2: quality request and max willingness to pay
    cost = seller.cost_for(buyer.q_request)
    premium = 1.0 + config.risk_premium * (1.0 - seller.disclosure)
    p_bar = buyer.max_price(config.buyer_surplus_share, premium)
    signal = cost + signal_rng.gauss(0.0, config.signal_noise)
    # 3: price quote or 402 rejection (expected profit at the cap is negative)
    if p_bar < cost:
        return StageOutcome(t, buyer.id, seller.id, False, NO_PRICE,
                            buyer.q_request.values, 0.0, 0.0, rejected_402=True), signal, None
    arm = ucb_select(seller.bandit)
    price = seller.arms[arm]
    # 4: accept iff non-negative surplus and within the cap
    traded = price <= p_bar and buyer.value - price >= 0.0
    # 5: delivery and payoffs
    if traded:
        buyer_utility = buyer.value - price
        seller_profit = price - cost
        ucb_update(seller.bandit, arm, seller_profit)
        buyer.utility_total += buyer_utility
        seller.profit_total += seller_profit
        buyer.trades += 1
        seller.trades += 1
        prev = buyer.partner_scores.get(seller.id, 0.0)
        buyer.partner_scores[seller.id] = 0.9 * prev + 0.1 * buyer_utility
        return (
            StageOutcome(t, buyer.id, seller.id, True, price,
                         buyer.q_request.values, buyer_utility, seller_profit),
            signal,
            (arm, seller_profit),
        )
    ucb_update(seller.bandit, arm, 0.0)
    return (
        StageOutcome(t, buyer.id, seller.id, False, price,
                     buyer.q_request.values, 0.0, 0.0),
        signal,
        (arm, 0.0),
    )


def _apply_signal(buyer: MarketBuyer, observed: float, noise_sd: float) -> None:
    like = gaussian_likelihood(buyer.belief.support_array, observed, noise_sd)
    buyer.belief = update_beliefs(buyer.belief, like)
    if buyer.belief.memory_window and buyer.belief.window_remaining == 0:
        buyer.belief = forget(buyer.belief)
    buyer.belief_mean = buyer.belief.mean()


# --- full run -------------------------------------------------------------------


def run_market(config: ScenarioConfig) -> MarketMetrics:
    """Run the repeated market for config.rounds; deterministic given the seed."""
    buyers, sellers = build_market(config)
    match_rng = stream(config.seed, "match")
    signal_rngs = {b.id: stream(config.seed, "signal", b.id) for b in buyers}

    try:
        p_star = equilibrium_oracle(config)
    except OracleUndefined:
        p_star = None
    w_star = first_best_welfare(buyers, sellers)

    buyer_ids = [b.id for b in buyers]
    seller_ids = [s.id for s in sellers]
    by_buyer = {b.id: b for b in buyers}
    by_seller = {s.id: s for s in sellers}
    compatible = {
        b.id: {s.id for s in sellers if s.capability == b.capability and s.feasible(b.q_request)}
        for b in buyers
    }

    bridge = ProtocolBridge(config) if config.full_protocol else None

    prices: list[float] = []
    errors: list[float] = []
    welfare_series: list[float] = []
    regret_series: list[float] = []
    outcomes: list[StageOutcome] = []
    trades = rejections_402 = quote_rejections = 0
    cumulative_regret = 0.0

    for t in range(1, config.rounds + 1):
        scores = (
            {b.id: b.partner_scores for b in buyers}
            if config.matching_mode == "preference"
            else None
        )
        pairs = ans.match(
            config.matching_mode, buyer_ids, seller_ids, match_rng,
            compatible=compatible, scores=scores,
        )
        round_prices: list[float] = []
        round_welfare = 0.0
        round_signals: list[float] = []
        round_quotes: list[tuple[str, int, float]] = []
        for buyer_id, seller_id in pairs:
            buyer, seller = by_buyer[buyer_id], by_seller[seller_id]
            outcome, signal, quote = run_stage_game(buyer, seller, t, config, signal_rngs[buyer_id])
            if signal is not None:
                if config.shared_signals:
                    round_signals.append(signal)
                else:
                    _apply_signal(buyer, signal, config.signal_noise)
            if quote is not None and config.shared_quotes:
                round_quotes.append((seller_id, seller.arms[quote[0]], quote[1]))
            if outcome.traded:
                trades += 1
                round_prices.append(outcome.price)
                round_welfare += outcome.buyer_utility + outcome.seller_profit
            elif outcome.rejected_402:
                rejections_402 += 1
            elif not math.isnan(outcome.price):
                quote_rejections += 1
            if config.collect_outcomes:
                outcomes.append(outcome)
        if round_quotes:
            # public ticker: every seller learns from the other sellers' quote
            # outcomes too (meaningful in symmetric-cost scenarios)
            for seller in sellers:
                for origin_id, price, reward in round_quotes:
                    if origin_id != seller.id:
                        ucb_update(seller.bandit, seller.arm_index[price], reward)
        if config.shared_signals and round_signals:
            # one pooled update per buyer: k signals fuse into a single
            # Gaussian observation at the round mean with sd / sqrt(k)
            pooled = float(np.mean(round_signals))
            pooled_sd = config.signal_noise / math.sqrt(len(round_signals))
            for buyer in buyers:
                _apply_signal(buyer, pooled, pooled_sd)
        p_t = float(np.median(round_prices)) if round_prices else NO_PRICE
        prices.append(p_t)
        errors.append(abs(p_t - p_star) if p_star is not None and not math.isnan(p_t) else NO_PRICE)
        welfare_series.append(round_welfare)
        cumulative_regret += max(0.0, w_star - round_welfare)
        regret_series.append(cumulative_regret)

    efficiency = None
    if w_star > 0:
        total_welfare = sum(welfare_series)
        efficiency = min(total_welfare / (w_star * config.rounds), 1.0)

    metrics = MarketMetrics(
        rounds=config.rounds,
        p_star=p_star,
        first_best_round=w_star,
        prices=prices,
        errors=errors,
        welfare=welfare_series,
        regret=regret_series,
        efficiency=efficiency,
        trades=trades,
        rejections_402=rejections_402,
        quote_rejections=quote_rejections,
        buyer_utilities={b.id: b.utility_total for b in buyers},
        seller_profits={s.id: s.profit_total for s in sellers},
        outcomes=outcomes,
    )
    if bridge is not None:
        traded = [o for o in outcomes if o.traded]
        for outcome in traded:
            bridge.run_trade(outcome)
        metrics.protocol_sessions = bridge.sessions_completed
        metrics.protocol_conserved = bridge.conserved()
    return metrics


# --- full-protocol bridge --------------------------------------------------------


class ProtocolBridge:
    """Drives each traded stage outcome through a complete negotiation session
    with payloads and escrow (requires collect_outcomes)."""

    def __init__(self, config: ScenarioConfig):
        from .acnbp import NegotiationEngine
        from .fixtures import TRUST_ROOT_KEY

        if not config.collect_outcomes:
            raise MarketError("full_protocol requires collect_outcomes")
        self.config = config
        self.engine = NegotiationEngine(
            trust_root_public_b64=TRUST_ROOT_KEY.public_b64, dims=config.registry
        )
        self.sessions_completed = 0

    def run_trade(self, outcome: StageOutcome) -> None:
        from .protocol_flow import run_full_session

        price = from_float(outcome.price, self.config.currency, self.config.precision)
        session = run_full_session(
            self.engine,
            f"sess-{outcome.round}-{outcome.buyer}-{outcome.seller}",
            outcome.buyer, outcome.seller, price,
        )
        if session.step == "Audit" and session.payment.verify_ok:
            self.sessions_completed += 1

    def conserved(self) -> bool:
        return self.engine.escrow.ledger.global_sum() == 0
