"""Agent preference, cost, capability and belief models.

Buyers value a d-dimensional normalized quality vector through separable
concave valuations v(q,s) = sum_j w_j(s) * v_j(q_j) and have quasi-linear
utility u = v - p. Sellers carry convex costs fc(s) + sum_j a_j(s) * q_j^b_j
with b_j > 1. Beliefs over a single scalar private parameter live on a
discrete grid and update by Bayes' rule; bounded memory is realized as
periodic exponential rebasing toward the prior (see forget()).

Every value here is immutable after construction and all operations are
pure functions, so everything is safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PROBE_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)
CONCAVITY_TOL = 1e-9


class EconomicsError(ValueError):
    pass


class DimensionMismatch(EconomicsError):
    pass


class DegenerateEvidence(EconomicsError):
    """Likelihood annihilates the entire belief support."""


# --- quality space ---------------------------------------------------------


@dataclass(frozen=True)
class Dimension:
    """One registered quality axis with its raw-unit normalization rule."""

    name: str
    unit: str = ""
    higher_is_better: bool = True
    cap: float = 1.0  # raw-value scale mapped onto [0, 1]

    def normalize(self, raw: float) -> float:
        scaled = raw / self.cap if self.cap else 0.0
        if not self.higher_is_better:
            scaled = 1.0 - scaled
        return min(1.0, max(0.0, scaled))


@dataclass(frozen=True)
class DimensionRegistry:
    dims: tuple[Dimension, ...]

    def __post_init__(self):
        if len(self.dims) < 1:
            raise EconomicsError("dimension registry must have d >= 1")

    def __len__(self) -> int:
        return len(self.dims)

    def index_of(self, name: str) -> int:
        for i, dim in enumerate(self.dims):
            if dim.name == name:
                return i
        raise EconomicsError(f"unknown dimension {name!r}")

    def by_name(self, name: str) -> Dimension:
        return self.dims[self.index_of(name)]


@dataclass(frozen=True)
class QualityVector:
    """Point in the normalized quality box [0,1]^d."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) < 1:
            raise EconomicsError("quality vector must have d >= 1")
        for i, v in enumerate(self.values):
            if not (0.0 <= v <= 1.0):
                raise EconomicsError(f"quality value {v} at dim {i} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def of(cls, *values: float) -> "QualityVector":
        return cls(tuple(float(v) for v in values))


@dataclass(frozen=True)
class AgentState:
    load: float = 0.0
    resource_budget: float = 0.0
    epoch: int = 0

    def __post_init__(self):
        if not (0.0 <= self.load <= 1.0):
            raise EconomicsError(f"load {self.load} outside [0, 1]")
        if self.resource_budget < 0:
            raise EconomicsError("resource_budget must be >= 0")


IDLE = AgentState()


# --- scenario-scriptable scalar functions ----------------------------------


@dataclass(frozen=True)
class StateFn:
    """Non-negative scalar function of AgentState: base + load_slope * load."""

    base: float
    load_slope: float = 0.0

    def __call__(self, s: AgentState) -> float:
        value = self.base + self.load_slope * s.load
        if value < 0:
            raise EconomicsError(f"state function went negative: {value}")
        return value


@dataclass(frozen=True)
class DimFn:
    """Monotone scalar function on [0,1] from a small named family.

    kinds: identity | sqrt | linear(slope, intercept) | power(exponent) |
    log1p(scale). All are non-decreasing for non-negative parameters.
    """

    kind: str = "identity"
    slope: float = 1.0
    intercept: float = 0.0
    exponent: float = 1.0
    scale: float = 1.0

    def __call__(self, x: float) -> float:
        if self.kind == "identity":
            return x
        if self.kind == "sqrt":
            return math.sqrt(x)
        if self.kind == "linear":
            return self.slope * x + self.intercept
        if self.kind == "power":
            return x ** self.exponent
        if self.kind == "log1p":
            return math.log1p(self.scale * x) / math.log1p(self.scale)
        raise EconomicsError(f"unknown dim function kind {self.kind!r}")


# --- agent models -----------------------------------------------------------


@dataclass(frozen=True)
class CapabilitySpec:
    """A capability advertisement: semantic spec plus feasible quality box."""

    id: str
    spec_text: str
    quality_region: tuple[tuple[float, float], ...]  # (lo_j, hi_j) per dimension
    cost_model_ref: str = ""

    def __post_init__(self):
        for j, (lo, hi) in enumerate(self.quality_region):
            if lo > hi:
                raise EconomicsError(f"empty quality box at dim {j}: [{lo}, {hi}]")

    @property
    def dimension(self) -> int:
        return len(self.quality_region)


@dataclass(frozen=True)
class BuyerPreference:
    weights: tuple[StateFn, ...]
    dim_valuations: tuple[DimFn, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.dim_valuations):
            raise DimensionMismatch("weights and dim_valuations length differ")
        for j, fn in enumerate(self.dim_valuations):
            probes = [fn(x) for x in PROBE_GRID]
            for a, b in zip(probes, probes[1:]):
                if b < a - CONCAVITY_TOL:
                    raise EconomicsError(f"valuation v_{j} decreasing on probe grid")
            if fn(0.5) < (fn(0.0) + fn(1.0)) / 2 - CONCAVITY_TOL:
                raise EconomicsError(f"valuation v_{j} fails midpoint concavity probe")

    @property
    def dimension(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class SellerCostModel:
    fixed_cost: StateFn
    coefficients: tuple[StateFn, ...]
    exponents: tuple[float, ...]

    def __post_init__(self):
        if len(self.coefficients) != len(self.exponents):
            raise DimensionMismatch("coefficients and exponents length differ")
        for j, beta in enumerate(self.exponents):
            if beta <= 1.0:
                raise EconomicsError(f"exponent b_{j} = {beta} must be > 1")

    @property
    def dimension(self) -> int:
        return len(self.coefficients)


# --- operations -------------------------------------------------------------


def _check_dim(expected: int, q: QualityVector) -> None:
    if len(q) != expected:
        raise DimensionMismatch(f"expected d={expected}, got d={len(q)}")


def eval_valuation(pref: BuyerPreference, q: QualityVector, s: AgentState) -> float:
    """Willingness to pay: sum_j w_j(s) * v_j(q_j)."""
    _check_dim(pref.dimension, q)
    return sum(w(s) * v(x) for w, v, x in zip(pref.weights, pref.dim_valuations, q.values))


def eval_utility(pref: BuyerPreference, q: QualityVector, p: float, s: AgentState) -> float:
    """Quasi-linear surplus v(q,s) - p; may be negative."""
    if p < 0:
        raise EconomicsError(f"price must be >= 0, got {p}")
    return eval_valuation(pref, q, s) - p


def eval_cost(model: SellerCostModel, q: QualityVector, s: AgentState) -> float:
    """Delivery cost fc(s) + sum_j a_j(s) * q_j^b_j."""
    _check_dim(model.dimension, q)
    variable = sum(
        a(s) * (x ** b) for a, b, x in zip(model.coefficients, model.exponents, q.values)
    )
    return model.fixed_cost(s) + variable


def quality_feasible(cap: CapabilitySpec, q: QualityVector) -> bool:
    """True iff q lies in the capability's closed quality box."""
    _check_dim(cap.dimension, q)
    return all(lo <= x <= hi for (lo, hi), x in zip(cap.quality_region, q.values))


# --- beliefs ----------------------------------------------------------------

MASS_TOL = 1e-9


@dataclass(frozen=True)
class BeliefState:
    """Discrete posterior over a scalar private parameter.

    `memory_window` is the bounded-memory length k; `window_remaining` counts
    updates until the next rebase toward `anchor_mass` (the prior). The mass
    arrays are never mutated in place.
    """

    support: tuple[float, ...]
    mass: tuple[float, ...]
    memory_window: int = 0  # 0 means unbounded memory
    window_remaining: int = field(default=-1)
    anchor_mass: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.support) != len(self.mass) or not self.support:
            raise EconomicsError("support and mass must be equal-length and non-empty")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise EconomicsError("support must be strictly increasing")
        if any(m < 0 for m in self.mass):
            raise EconomicsError("belief mass must be non-negative")
        if abs(sum(self.mass) - 1.0) > MASS_TOL:
            raise EconomicsError(f"belief mass sums to {sum(self.mass)}, not 1")
        if self.window_remaining < 0:
            object.__setattr__(self, "window_remaining", self.memory_window)
        if not self.anchor_mass:
            object.__setattr__(self, "anchor_mass", self.mass)
        object.__setattr__(self, "_support_arr", np.asarray(self.support, dtype=float))
        object.__setattr__(self, "_mass_arr", np.asarray(self.mass, dtype=float))

    @classmethod
    def uniform(cls, lo: float, hi: float, atoms: int = 64, memory_window: int = 0) -> "BeliefState":
        support = tuple(lo + (hi - lo) * i / (atoms - 1) for i in range(atoms))
        return cls(support, (1.0 / atoms,) * atoms, memory_window)

    @property
    def support_array(self) -> np.ndarray:
        return self._support_arr

    def mean(self) -> float:
        return float(self._support_arr @ self._mass_arr)


def _evolve(b: BeliefState, mass_arr: np.ndarray, window_remaining: int) -> BeliefState:
    """New state with updated mass only; skips revalidating the shared support."""
    clone = object.__new__(BeliefState)
    object.__setattr__(clone, "support", b.support)
    object.__setattr__(clone, "mass", tuple(mass_arr.tolist()))
    object.__setattr__(clone, "memory_window", b.memory_window)
    object.__setattr__(clone, "window_remaining", window_remaining)
    object.__setattr__(clone, "anchor_mass", b.anchor_mass)
    object.__setattr__(clone, "_support_arr", b._support_arr)
    object.__setattr__(clone, "_mass_arr", mass_arr)
    return clone


def update_beliefs(b: BeliefState, likelihood) -> BeliefState:
    """Bayes update: mass_i' = mass_i * L(atom_i) / normalizer.

    `likelihood` is a callable atom -> [0, 1] or a precomputed array aligned
    with the support. Raises DegenerateEvidence when the posterior mass
    vanishes everywhere. The memory window counter decrements as bookkeeping;
    rebasing itself is the separate forget() step.
    """
    if callable(likelihood):
        like = np.fromiter((likelihood(a) for a in b.support), dtype=float, count=len(b.support))
    else:
        like = np.asarray(likelihood, dtype=float)
        if like.shape != (len(b.support),):
            raise DimensionMismatch("likelihood array does not match support")
    if np.any(like < 0):
        raise EconomicsError("likelihood must be non-negative on the support")
    posterior = b._mass_arr * like
    total = posterior.sum()
    if total <= 0.0:
        raise DegenerateEvidence("likelihood annihilates the entire belief support")
    posterior = posterior / total
    remaining = b.window_remaining - 1 if b.memory_window else b.window_remaining
    return _evolve(b, posterior, remaining)


def forget(b: BeliefState) -> BeliefState:
    """Exponential rebase toward the prior: mass' = lam*mass + (1-lam)*anchor.

    lam = 1 - 1/k for memory window k. Callers apply this once
    window_remaining reaches 0; unbounded-memory beliefs pass through.
    """
    if not b.memory_window:
        return b
    lam = 1.0 - 1.0 / b.memory_window
    mixed = lam * b._mass_arr + (1.0 - lam) * np.asarray(b.anchor_mass)
    mixed = mixed / mixed.sum()
    return _evolve(b, mixed, b.memory_window)


def gaussian_likelihood(support, observed: float, noise_sd: float) -> np.ndarray:
    """Vectorized N(observed; atom, noise_sd) likelihood over a support grid."""
    atoms = np.asarray(support, dtype=float)
    z = (observed - atoms) / noise_sd
    return np.exp(-0.5 * z * z)
