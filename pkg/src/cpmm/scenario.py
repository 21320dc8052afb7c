"""Scenario files: the declarative environment a market run binds to.

A scenario declares the quality dimension registry, buyer/seller archetypes
(preferences, cost models, capabilities, disclosure), matching mode,
bargaining and belief parameters, the seller quote grid, and named
experiment sections. Files use the same canonical structured-text encoding
as the payload records; archetypes expand to `count` agents each.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .canonical import canonical_bytes, canonical_loads
from .economics import (
    BuyerPreference,
    CapabilitySpec,
    DimFn,
    Dimension,
    DimensionRegistry,
    QualityVector,
    SellerCostModel,
    StateFn,
)


class ScenarioError(ValueError):
    pass


def _state_fn(raw: dict) -> StateFn:
    return StateFn(float(raw["base"]), float(raw.get("load_slope", 0.0)))


def _dim_fn(raw: dict) -> DimFn:
    return DimFn(
        kind=raw.get("kind", "identity"),
        slope=float(raw.get("slope", 1.0)),
        intercept=float(raw.get("intercept", 0.0)),
        exponent=float(raw.get("exponent", 1.0)),
        scale=float(raw.get("scale", 1.0)),
    )


@dataclass(frozen=True)
class BuyerArchetype:
    id_prefix: str
    count: int
    capability: str
    quality_request: tuple[float, ...]
    weights: tuple[StateFn, ...]
    valuations: tuple[DimFn, ...]
    load: float = 0.0

    def preference(self) -> BuyerPreference:
        return BuyerPreference(self.weights, self.valuations)


@dataclass(frozen=True)
class SellerArchetype:
    id_prefix: str
    count: int
    capability: str
    quality_region: tuple[tuple[float, float], ...]
    fixed_cost: StateFn
    coefficients: tuple[StateFn, ...]
    exponents: tuple[float, ...]
    disclosure: float = 1.0
    load: float = 0.0

    def cost_model(self) -> SellerCostModel:
        return SellerCostModel(self.fixed_cost, self.coefficients, self.exponents)

    def capability_spec(self) -> CapabilitySpec:
        return CapabilitySpec(self.capability, f"capability {self.capability}", self.quality_region)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    rounds: int
    seed: int
    currency: str = "USD"
    precision: int = 2
    dimensions: tuple[Dimension, ...] = ()
    matching_mode: str = "random"
    alpha_floor: float = 0.05
    buyer_surplus_share: float = 0.5
    risk_premium: float = 0.0
    belief_lo: float = 0.0
    belief_hi: float = 10.0
    belief_atoms: int = 64
    belief_memory_window: int = 0
    signal_noise: float = 0.6
    shared_signals: bool = False
    shared_quotes: bool = False  # sellers observe the round's public quote outcomes
    quote_lo: float = 0.0
    quote_hi: float = 10.0
    quote_step: float = 0.1
    buyers: tuple[BuyerArchetype, ...] = ()
    sellers: tuple[SellerArchetype, ...] = ()
    full_protocol: bool = False
    collect_outcomes: bool = False
    experiments: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rounds < 1:
            raise ScenarioError("rounds must be >= 1")
        if not (0.0 < self.buyer_surplus_share < 1.0):
            raise ScenarioError("buyer_surplus_share must be in (0, 1)")
        if self.quote_step <= 0 or self.quote_hi <= self.quote_lo:
            raise ScenarioError("quote grid must be non-empty with positive step")

    @property
    def registry(self) -> DimensionRegistry:
        return DimensionRegistry(self.dimensions)

    def quote_arms(self) -> list[float]:
        arms = []
        value = self.quote_lo
        while value <= self.quote_hi + 1e-9:
            arms.append(round(value, 9))
            value += self.quote_step
        return arms

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, seed=seed)


def scenario_to_record(config: ScenarioConfig) -> dict:
    return {
        "name": config.name,
        "rounds": config.rounds,
        "seed": config.seed,
        "currency": {"code": config.currency, "precision": config.precision},
        "dimensions": [
            {"name": d.name, "unit": d.unit, "higher_is_better": d.higher_is_better, "cap": d.cap}
            for d in config.dimensions
        ],
        "matching": {"mode": config.matching_mode, "alpha_floor": config.alpha_floor},
        "bargaining": {
            "buyer_surplus_share": config.buyer_surplus_share,
            "risk_premium": config.risk_premium,
        },
        "beliefs": {
            "lo": config.belief_lo,
            "hi": config.belief_hi,
            "atoms": config.belief_atoms,
            "memory_window": config.belief_memory_window,
            "signal_noise": config.signal_noise,
            "shared_signals": config.shared_signals,
            "shared_quotes": config.shared_quotes,
        },
        "quote_grid": {"lo": config.quote_lo, "hi": config.quote_hi, "step": config.quote_step},
        "buyers": [
            {
                "id_prefix": b.id_prefix,
                "count": b.count,
                "capability": b.capability,
                "quality_request": list(b.quality_request),
                "weights": [{"base": w.base, "load_slope": w.load_slope} for w in b.weights],
                "valuations": [
                    {"kind": v.kind, "slope": v.slope, "intercept": v.intercept,
                     "exponent": v.exponent, "scale": v.scale}
                    for v in b.valuations
                ],
                "load": b.load,
            }
            for b in config.buyers
        ],
        "sellers": [
            {
                "id_prefix": s.id_prefix,
                "count": s.count,
                "capability": s.capability,
                "quality_region": [list(bounds) for bounds in s.quality_region],
                "cost": {
                    "fixed": {"base": s.fixed_cost.base, "load_slope": s.fixed_cost.load_slope},
                    "coefficients": [
                        {"base": c.base, "load_slope": c.load_slope} for c in s.coefficients
                    ],
                    "exponents": list(s.exponents),
                },
                "disclosure": s.disclosure,
                "load": s.load,
            }
            for s in config.sellers
        ],
        "full_protocol": config.full_protocol,
        "experiments": config.experiments,
    }


def scenario_from_record(raw: dict) -> ScenarioConfig:
    try:
        currency = raw.get("currency", {"code": "USD", "precision": 2})
        matching = raw.get("matching", {})
        bargaining = raw.get("bargaining", {})
        beliefs = raw.get("beliefs", {})
        grid = raw.get("quote_grid", {})
        buyers = tuple(
            BuyerArchetype(
                b["id_prefix"],
                int(b["count"]),
                b["capability"],
                tuple(float(x) for x in b["quality_request"]),
                tuple(_state_fn(w) for w in b["weights"]),
                tuple(_dim_fn(v) for v in b["valuations"]),
                float(b.get("load", 0.0)),
            )
            for b in raw.get("buyers", [])
        )
        sellers = tuple(
            SellerArchetype(
                s["id_prefix"],
                int(s["count"]),
                s["capability"],
                tuple((float(lo), float(hi)) for lo, hi in s["quality_region"]),
                _state_fn(s["cost"]["fixed"]),
                tuple(_state_fn(c) for c in s["cost"]["coefficients"]),
                tuple(float(e) for e in s["cost"]["exponents"]),
                float(s.get("disclosure", 1.0)),
                float(s.get("load", 0.0)),
            )
            for s in raw.get("sellers", [])
        )
        return ScenarioConfig(
            name=raw["name"],
            rounds=int(raw["rounds"]),
            seed=int(raw["seed"]),
            currency=currency["code"],
            precision=int(currency["precision"]),
            dimensions=tuple(
                Dimension(d["name"], d.get("unit", ""), bool(d.get("higher_is_better", True)),
                          float(d.get("cap", 1.0)))
                for d in raw.get("dimensions", [])
            ),
            matching_mode=matching.get("mode", "random"),
            alpha_floor=float(matching.get("alpha_floor", 0.05)),
            buyer_surplus_share=float(bargaining.get("buyer_surplus_share", 0.5)),
            risk_premium=float(bargaining.get("risk_premium", 0.0)),
            belief_lo=float(beliefs.get("lo", 0.0)),
            belief_hi=float(beliefs.get("hi", 10.0)),
            belief_atoms=int(beliefs.get("atoms", 64)),
            belief_memory_window=int(beliefs.get("memory_window", 0)),
            signal_noise=float(beliefs.get("signal_noise", 0.6)),
            shared_signals=bool(beliefs.get("shared_signals", False)),
            shared_quotes=bool(beliefs.get("shared_quotes", False)),
            quote_lo=float(grid.get("lo", 0.0)),
            quote_hi=float(grid.get("hi", 10.0)),
            quote_step=float(grid.get("step", 0.1)),
            buyers=buyers,
            sellers=sellers,
            full_protocol=bool(raw.get("full_protocol", False)),
            experiments=dict(raw.get("experiments", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(f"bad scenario document: {exc}") from exc


def save_scenario(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_bytes(canonical_bytes(scenario_to_record(config)))


def load_scenario(path: str | Path) -> ScenarioConfig:
    data = Path(path).read_bytes()
    return scenario_from_record(canonical_loads(data))


# --- bundled scenario builders -------------------------------------------------

TWO_DIMS = (
    Dimension("accuracy", "%", higher_is_better=True, cap=100.0),
    Dimension("latency", "ms", higher_is_better=False, cap=200.0),
)


def symmetric_agents(
    n_buyers: int,
    n_sellers: int,
    capability: str = "svc.translate",
    value: float = 10.0,
    cost: float = 4.0,
    buyer_prefix: str = "b",
    seller_prefix: str = "s",
) -> tuple[tuple[BuyerArchetype, ...], tuple[SellerArchetype, ...]]:
    """Symmetric archetypes whose valuation/cost at the standard quality point
    q = (1.0, 0.5) evaluate to exactly `value` and `cost`.

    Buyer: v = 0.8*value * 1.0 + 0.4*value * 0.5 = value.
    Seller: cost = fc + a1 * 1^2 + a2 * 0.5^2 with fc = cost/4, a1 = cost/2,
    a2 = cost for a total of exactly `cost`.
    """
    buyers = (
        BuyerArchetype(
            buyer_prefix, n_buyers, capability,
            quality_request=(1.0, 0.5),
            weights=(StateFn(0.8 * value), StateFn(0.4 * value)),
            valuations=(DimFn("identity"), DimFn("identity")),
        ),
    )
    sellers = (
        SellerArchetype(
            seller_prefix, n_sellers, capability,
            quality_region=((0.0, 1.0), (0.0, 1.0)),
            fixed_cost=StateFn(cost / 4),
            coefficients=(StateFn(cost / 2), StateFn(cost)),
            exponents=(2.0, 2.0),
        ),
    )
    return buyers, sellers


def convergence_scenario(seed: int = 42, rounds: int = 10_000) -> ScenarioConfig:
    """Stationary 10x10 market clearing at p* = 7 (values 10, costs 4)."""
    buyers, sellers = symmetric_agents(10, 10)
    return ScenarioConfig(
        name="stationary-10x10",
        rounds=rounds,
        seed=seed,
        dimensions=TWO_DIMS,
        matching_mode="random",
        belief_lo=2.0,
        belief_hi=8.0,
        signal_noise=0.6,
        quote_lo=4.0,
        quote_hi=10.0,
        quote_step=0.1,
        buyers=buyers,
        sellers=sellers,
        experiments={
            "convergence": {"seeds": 20, "window": 100, "epsilon_fracs": [0.05, 0.1, 0.2]},
            "efficiency": {"sizes": [4, 16, 64], "seeds": 20, "rounds": 150},
            "sybil": {"k_max": 8, "seeds": 24, "rounds": 400, "buyers": 10,
                      "honest_sellers": 9, "capability_cost": 500.0},
            "regret": {"ucb_means": [0.9, 0.8, 0.7, 0.6, 0.5], "horizon": 10_000,
                       "ucb_seeds": 50, "ucb_bound_const": 3.0,
                       "linucb_dim": 3, "linucb_candidates": 8, "linucb_seeds": 10,
                       "linucb_noise": 0.1, "linucb_bound_const": 5.0},
            "elasticity": {"sigmas": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
                           "risk_premium": 0.3, "seeds": 3, "rounds": 1200,
                           "buyers": 6, "sellers": 6},
        },
    )


def smoke_scenario(seed: int = 7, rounds: int = 60, full_protocol: bool = False) -> ScenarioConfig:
    """Tiny 2x2 heterogeneous market (values 10/8, costs 4/6) for quick runs."""
    b_hi, s_lo = symmetric_agents(1, 1, value=10.0, cost=4.0, buyer_prefix="bh", seller_prefix="sl")
    b_lo, s_hi = symmetric_agents(1, 1, value=8.0, cost=6.0, buyer_prefix="bl", seller_prefix="sh")
    return ScenarioConfig(
        name="smoke-2x2",
        rounds=rounds,
        seed=seed,
        dimensions=TWO_DIMS,
        matching_mode="random",
        belief_lo=2.0,
        belief_hi=8.0,
        quote_lo=4.0,
        quote_hi=10.0,
        quote_step=0.1,
        buyers=b_hi + b_lo,
        sellers=s_lo + s_hi,
        full_protocol=full_protocol,
        collect_outcomes=True,
    )
