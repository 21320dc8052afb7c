"""Experiment harness: the property suites behind the market-level claims.

Each experiment runs seeded simulator cells and reduces them to a pass/fail
report with the measured quantities: price convergence to the clearing
oracle, efficiency trend in market size, Sybil marginal-benefit shape,
bandit regret against theoretical-shape bounds, and privacy elasticity of
simulated prices. Cells are independent and deterministic per (config, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import norm

from .bandits import LinUcbState, UcbState, cumulative_regret, linucb_price, linucb_update, ucb_select, ucb_update
from .market import measure_efficiency, run_market
from .privacy import privacy_elasticity
from .economics import DimFn, StateFn
from .scenario import (
    BuyerArchetype,
    ScenarioConfig,
    SellerArchetype,
    convergence_scenario,
    symmetric_agents,
)
from .seeding import derive_seed, np_stream, stream


class ExperimentError(ValueError):
    pass


EXPERIMENT_NAMES = ("convergence", "efficiency", "sybil", "regret", "elasticity")


def rolling_median(series, window: int) -> np.ndarray:
    """Median over each full trailing window; NaNs (no-trade rounds) ignored."""
    arr = np.asarray(series, dtype=float)
    if len(arr) < window:
        raise ExperimentError("series shorter than the rolling window")
    out = np.empty(len(arr) - window + 1)
    for i in range(len(out)):
        chunk = arr[i:i + window]
        chunk = chunk[~np.isnan(chunk)]
        out[i] = np.median(chunk) if chunk.size else np.nan
    return out


def mann_kendall_decreasing(values) -> tuple[float, float]:
    """One-sided Mann-Kendall trend test (H1: decreasing). Returns (S, p)."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    if n < 3:
        raise ExperimentError("Mann-Kendall needs at least 3 points")
    s = sum(
        np.sign(x[j] - x[i])
        for i in range(n - 1)
        for j in range(i + 1, n)
    )
    var = n * (n - 1) * (2 * n + 5) / 18.0
    if s < 0:
        z = (s + 1) / math.sqrt(var)
    elif s > 0:
        z = (s - 1) / math.sqrt(var)
    else:
        z = 0.0
    return float(s), float(norm.cdf(z))


def nonincreasing_within(filtered: np.ndarray, slack: float) -> bool:
    """True iff the series never rises more than `slack` above its running min."""
    running_min = np.fmin.accumulate(filtered)
    bumps = filtered - running_min
    return bool(np.nanmax(bumps) <= slack + 1e-12)


# --- convergence ----------------------------------------------------------------


@dataclass
class ConvergenceReport:
    p_star: float
    seeds: int
    window: int
    epsilons: dict[str, float]
    t_epsilon: dict[str, list[int | None]]  # per-epsilon, per-seed first stable round
    median_tail_errors: list[float]
    tail_fraction_of_pstar: float
    monotone_ok: bool
    alpha_floor_ok: bool
    passed: bool


def convergence_experiment(config: ScenarioConfig, epsilons=None) -> ConvergenceReport:
    """Measures t(eps) = first round after which the rolling-median price error
    stays below eps, plus the non-increasing shape of the filtered series."""
    params = config.experiments.get("convergence", {})
    seeds = int(params.get("seeds", 20))
    window = int(params.get("window", 100))
    eps_fracs = list(params.get("epsilon_fracs", [0.05, 0.1, 0.2]))

    base = run_market(config.with_seed(derive_seed(config.seed, "conv", 0)))
    if base.p_star is None:
        raise ExperimentError("convergence experiment needs a defined clearing price")
    p_star = base.p_star
    eps_values = {f"{frac:g}": frac * p_star for frac in eps_fracs}
    if epsilons:
        eps_values.update({f"abs:{e:g}": e for e in epsilons})

    t_eps: dict[str, list[int | None]] = {key: [] for key in eps_values}
    tails: list[float] = []
    monotone_ok = True
    slack = config.quote_step  # quotes move on the grid; filtered error is quantized
    for cell in range(seeds):
        metrics = run_market(config.with_seed(derive_seed(config.seed, "conv", cell)))
        errors = np.asarray(metrics.errors, dtype=float)
        tail = errors[-max(1, len(errors) // 10):]
        tails.append(float(np.nanmedian(tail)))
        filtered = rolling_median(errors, window)
        monotone_ok = monotone_ok and nonincreasing_within(filtered, slack)
        for key, eps in eps_values.items():
            below = filtered <= eps
            stable_from = None
            for i in range(len(below)):
                if below[i:].all():
                    stable_from = i + window  # round index of window end
                    break
            t_eps[key].append(stable_from)

    n_agents = max(
        sum(b.count for b in config.buyers), sum(s.count for s in config.sellers)
    )
    alpha = 1.0 / n_agents  # uniform matching probability per pair
    alpha_floor_ok = all(alpha >= config.alpha_floor / t for t in range(1, config.rounds + 1))

    tail_frac = max(tails) / p_star
    five_pct_key = next((k for k in eps_values if math.isclose(eps_values[k], 0.05 * p_star)), None)
    finite_at_5pct = (
        all(t is not None for t in t_eps[five_pct_key]) if five_pct_key else True
    )
    passed = monotone_ok and alpha_floor_ok and finite_at_5pct and tail_frac <= 0.05
    return ConvergenceReport(
        p_star, seeds, window, eps_values, t_eps, tails, tail_frac,
        monotone_ok, alpha_floor_ok, passed,
    )


# --- efficiency -----------------------------------------------------------------


def build_pool_scenario(n_agents: int, seed: int, rounds: int, pool: int = 1) -> ScenarioConfig:
    """Symmetric market of n agents with pooled public information.

    Every buyer values the service at 10 and every seller delivers at cost 4;
    buyers pool the round's cost signals and sellers observe the round's
    public quote outcomes. A thicker market therefore aggregates information
    faster and loses fewer early rounds to out-of-equilibrium quotes, which
    is the sole efficiency wedge at play: matching itself is frictionless
    (capability-compatible complete graph, equal pool sizes).
    """
    if n_agents < 2 or n_agents % 2:
        raise ExperimentError("n_agents must be even and >= 2")
    half = n_agents // 2
    buyers, sellers = symmetric_agents(half, half)
    template = convergence_scenario(seed=seed, rounds=rounds)
    return replace(
        template,
        name=f"pool-{n_agents}",
        buyers=buyers,
        sellers=sellers,
        matching_mode="capability",
        quote_step=0.1,
        signal_noise=1.0,
        shared_signals=True,
        shared_quotes=True,
        collect_outcomes=False,
        experiments={},
    )


@dataclass
class EfficiencyReport:
    sizes: list[int]
    seeds: int
    mean_eta: list[float]
    eta_in_unit_interval: bool
    non_decreasing: bool
    passed: bool


def efficiency_experiment(config: ScenarioConfig) -> EfficiencyReport:
    params = config.experiments.get("efficiency", {})
    sizes = [int(n) for n in params.get("sizes", [4, 16, 64])]
    seeds = int(params.get("seeds", 20))
    rounds = int(params.get("rounds", 300))
    pool = int(params.get("capability_pool", 4))

    means: list[float] = []
    all_in_unit = True
    for n in sizes:
        etas = []
        for cell in range(seeds):
            cell_seed = derive_seed(config.seed, "eff", n, cell)
            scenario = build_pool_scenario(n, cell_seed, rounds, pool)
            metrics = run_market(scenario.with_seed(cell_seed))
            if metrics.efficiency is None:
                raise ExperimentError("efficiency undefined: first-best welfare is zero")
            etas.append(metrics.efficiency)
            all_in_unit = all_in_unit and -1e-9 <= metrics.efficiency <= 1.0 + 1e-9
        means.append(float(np.mean(etas)))
    non_decreasing = all(b >= a - 1e-9 for a, b in zip(means, means[1:]))
    return EfficiencyReport(sizes, seeds, means, all_in_unit, non_decreasing,
                            all_in_unit and non_decreasing)


# --- sybil ----------------------------------------------------------------------


def build_sybil_scenario(k: int, seed: int, params: dict) -> ScenarioConfig:
    buyers_n = int(params.get("buyers", 10))
    honest_n = int(params.get("honest_sellers", 9))
    rounds = int(params.get("rounds", 400))
    buyers, honest = symmetric_agents(buyers_n, honest_n)
    _b, attacker = symmetric_agents(0, k, seller_prefix="atk")
    template = convergence_scenario(seed=seed, rounds=rounds)
    return replace(
        template,
        name=f"sybil-k{k}",
        buyers=buyers,
        sellers=honest + attacker,
        quote_step=0.25,
        collect_outcomes=False,
        experiments={},
    )


@dataclass
class SybilReport:
    k_values: list[int]
    seeds: int
    capability_cost: float
    capability_budget: float
    benefit: dict[int, float]  # B(k), normalized so B(1) = 0
    marginal: list[float]  # B(k) - B(k-1) for k = 2..k_max
    mk_statistic: float
    mk_p_value: float
    marginal_non_increasing: bool
    within_budget_bound: bool
    passed: bool


def sybil_experiment(config: ScenarioConfig, k_max: int | None = None) -> SybilReport:
    """Attacker net benefit B(k) of k Sybil identities, net of per-clone
    capability acquisition cost, averaged over seeds with common random
    numbers across k for variance reduction."""
    params = config.experiments.get("sybil", {})
    k_max = int(k_max or params.get("k_max", 8))
    seeds = int(params.get("seeds", 20))
    cap_cost = float(params.get("capability_cost", 500.0))
    budget = float(params.get("capability_budget", k_max * cap_cost))

    raw_net: dict[int, list[float]] = {k: [] for k in range(1, k_max + 1)}
    for cell in range(seeds):
        cell_seed = derive_seed(config.seed, "sybil", cell)
        for k in range(1, k_max + 1):
            scenario = build_sybil_scenario(k, cell_seed, params)
            metrics = run_market(scenario.with_seed(cell_seed))
            attacker_revenue = sum(
                profit for sid, profit in metrics.seller_profits.items()
                if sid.startswith("atk")
            )
            raw_net[k].append(attacker_revenue - k * cap_cost)
    mean_net = {k: float(np.mean(v)) for k, v in raw_net.items()}
    benefit = {k: mean_net[k] - mean_net[1] for k in mean_net}
    marginal = [benefit[k] - benefit[k - 1] for k in range(2, k_max + 1)]
    s, p_value = mann_kendall_decreasing(marginal)
    non_increasing = p_value < 0.05
    within_budget = all(benefit[k] < benefit[1] + budget for k in benefit)
    return SybilReport(
        list(range(1, k_max + 1)), seeds, cap_cost, budget, benefit, marginal,
        s, p_value, non_increasing, within_budget, non_increasing and within_budget,
    )


# --- regret ---------------------------------------------------------------------


@dataclass
class RegretReport:
    ucb_horizon: int
    ucb_seeds: int
    ucb_mean_regret: float
    ucb_bound: float
    linucb_horizon: int
    linucb_seeds: int
    linucb_mean_regret: float
    linucb_bound: float
    passed: bool


def regret_experiment(config: ScenarioConfig) -> RegretReport:
    """UCB on a Bernoulli bandit and LinUCB on linear-Gaussian rewards,
    measured against the theoretical-shape bounds with fixed constants."""
    params = config.experiments.get("regret", {})
    means = list(params.get("ucb_means", [0.9, 0.8, 0.7, 0.6, 0.5]))
    horizon = int(params.get("horizon", 10_000))
    ucb_seeds = int(params.get("ucb_seeds", 50))
    ucb_const = float(params.get("ucb_bound_const", 3.0))
    k = len(means)
    best = max(means)

    total = 0.0
    for cell in range(ucb_seeds):
        rng = np_stream(derive_seed(config.seed, "regret-ucb", cell))
        state = UcbState.fresh(k)
        draws = rng.random((horizon, ))
        regret = 0.0
        for t in range(horizon):
            arm = ucb_select(state)
            reward = 1.0 if draws[t] < means[arm] else 0.0
            ucb_update(state, arm, reward)
            regret += best - means[arm]  # pseudo-regret against known means
        total += regret
    ucb_mean = total / ucb_seeds
    ucb_bound = ucb_const * math.sqrt(k * horizon * math.log(horizon))

    dim = int(params.get("linucb_dim", 3))
    candidates = int(params.get("linucb_candidates", 8))
    linucb_seeds = int(params.get("linucb_seeds", 10))
    noise = float(params.get("linucb_noise", 0.1))
    lin_const = float(params.get("linucb_bound_const", 5.0))
    total = 0.0
    for cell in range(linucb_seeds):
        rng = np_stream(derive_seed(config.seed, "regret-lin", cell))
        theta = np.abs(rng.normal(size=dim))
        theta /= np.linalg.norm(theta)
        state = LinUcbState.fresh(dim, exploration=1.0)
        regret = 0.0
        for _t in range(horizon):
            contexts = np.abs(rng.normal(size=(candidates, dim)))
            contexts /= np.linalg.norm(contexts, axis=1, keepdims=True)
            scores = [linucb_price(state, x) for x in contexts]
            pick = int(np.argmax(scores))
            chosen = contexts[pick]
            reward = float(theta @ chosen + rng.normal(0.0, noise))
            linucb_update(state, chosen, reward)
            expected = contexts @ theta
            regret += float(expected.max() - expected[pick])
        total += regret
    lin_mean = total / linucb_seeds
    lin_bound = lin_const * dim * math.sqrt(horizon * math.log(horizon))

    return RegretReport(
        horizon, ucb_seeds, ucb_mean, ucb_bound,
        horizon, linucb_seeds, lin_mean, lin_bound,
        ucb_mean <= ucb_bound and lin_mean <= lin_bound,
    )


# --- elasticity -----------------------------------------------------------------


def build_elasticity_scenario(sigma: float, seed: int, params: dict) -> ScenarioConfig:
    buyers_n = int(params.get("buyers", 6))
    sellers_n = int(params.get("sellers", 6))
    rounds = int(params.get("rounds", 1200))
    rho = float(params.get("risk_premium", 0.3))
    buyers, sellers = symmetric_agents(buyers_n, sellers_n)
    sellers = tuple(replace(s, disclosure=sigma) for s in sellers)
    template = convergence_scenario(seed=seed, rounds=rounds)
    return replace(
        template,
        name=f"elasticity-{sigma:g}",
        buyers=buyers,
        sellers=sellers,
        risk_premium=rho,
        quote_hi=12.0,
        collect_outcomes=False,
        experiments={},
    )


@dataclass
class ElasticityReport:
    sigmas: list[float]
    prices: list[float]
    xi: list[float]
    lo_bound: float
    hi_bound: float
    passed: bool


def elasticity_experiment(config: ScenarioConfig) -> ElasticityReport:
    """Estimates xi from simulator-generated prices across disclosure levels:
    run the market per sigma, fit a quadratic price curve, differentiate."""
    params = config.experiments.get("elasticity", {})
    sigmas = [float(s) for s in params.get("sigmas", [0.1, 0.3, 0.5, 0.7, 0.9])]
    seeds = int(params.get("seeds", 3))

    prices = []
    for sigma in sigmas:
        cell_prices = []
        for cell in range(seeds):
            cell_seed = derive_seed(config.seed, "elas", f"{sigma:g}", cell)
            scenario = build_elasticity_scenario(sigma, cell_seed, params)
            metrics = run_market(scenario.with_seed(cell_seed))
            tail = [p for p in metrics.prices[-len(metrics.prices) // 4:] if not math.isnan(p)]
            cell_prices.append(float(np.median(tail)))
        prices.append(float(np.mean(cell_prices)))

    coeffs = np.polyfit(sigmas, prices, deg=2)
    fitted = np.poly1d(coeffs)
    xi = [float(privacy_elasticity(fitted, s)) for s in sigmas]
    lo, hi = -1.05, 0.05
    passed = all(lo <= x <= hi for x in xi)
    return ElasticityReport(sigmas, prices, xi, lo, hi, passed)


def run_experiment(name: str, config: ScenarioConfig):
    if name == "convergence":
        return convergence_experiment(config)
    if name == "efficiency":
        return efficiency_experiment(config)
    if name == "sybil":
        return sybil_experiment(config)
    if name == "regret":
        return regret_experiment(config)
    if name == "elasticity":
        return elasticity_experiment(config)
    raise ExperimentError(f"unknown experiment {name!r}")
