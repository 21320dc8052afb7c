"""In-process agent name service: registration, selective disclosure, matching.

Each entry carries capability attributes ranked by sensitivity; a disclosure
level sigma in [0,1] exposes the ceil(sigma * n) least-sensitive attributes.
Discovery matches only against the disclosed view, counting hidden
attributes as unsatisfied, so less disclosure never wins a query that more
disclosure would lose. Matching supports three modes: uniform random,
capability-compatible, and preference-weighted (softmax over scores).

Reads are concurrent; registrations go through the single-writer register().
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .acnbp import ExtensionManifest
from .canonical import canonical_bytes, canonical_loads
from .economics import CapabilitySpec


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class Attribute:
    """One disclosable fact about a capability, with its sensitivity rank."""

    name: str
    value: float | str
    sensitivity: int  # lower = disclosed earlier


@dataclass(frozen=True)
class RegistryEntry:
    agent_id: str
    capability: CapabilitySpec
    attributes: tuple[Attribute, ...]
    disclosure: float  # sigma
    manifest: ExtensionManifest = field(default_factory=ExtensionManifest)
    endpoint: str = ""

    def __post_init__(self):
        if not (0.0 <= self.disclosure <= 1.0):
            raise RegistryError(f"disclosure sigma {self.disclosure} outside [0, 1]")

    def disclosed_view(self, sigma: float | None = None) -> dict[str, float | str]:
        """The ceil(sigma * n) least-sensitive attributes, by rank then name.

        sigma = 0 exposes only the capability id; the view is monotone in
        sigma: view(s1) is a subset of view(s2) whenever s1 <= s2.
        """
        sigma = self.disclosure if sigma is None else sigma
        ranked = sorted(self.attributes, key=lambda a: (a.sensitivity, a.name))
        count = math.ceil(sigma * len(ranked))
        return {a.name: a.value for a in ranked[:count]}


@dataclass(frozen=True)
class DiscoveryQuery:
    capability_id: str
    min_quality: dict[str, float] = field(default_factory=dict)  # dimension -> threshold in [0,1]
    max_base_price: float | None = None
    required_methods: tuple[str, ...] = ()

    def __post_init__(self):
        for dim, threshold in self.min_quality.items():
            if not (0.0 <= threshold <= 1.0):
                raise RegistryError(f"quality threshold for {dim} outside [0, 1]")


class Registry:
    def __init__(self):
        self._entries: dict[str, RegistryEntry] = {}

    def register(self, entry: RegistryEntry) -> "Registry":
        if entry.agent_id in self._entries:
            raise RegistryError(f"duplicate agent id {entry.agent_id!r}")
        self._entries[entry.agent_id] = entry
        return self

    def get(self, agent_id: str) -> RegistryEntry:
        return self._entries[agent_id]

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[RegistryEntry, ...]:
        return tuple(self._entries[k] for k in sorted(self._entries))

    def discover(self, query: DiscoveryQuery) -> list[RegistryEntry]:
        """Entries whose disclosed view satisfies every query predicate.

        Hidden attributes count as unsatisfied (conservative matching), and
        results are deterministic, ordered by agent id.
        """
        matches = []
        for entry in self.entries:
            if entry.capability.id != query.capability_id:
                continue
            view = entry.disclosed_view()
            ok = True
            for dim, threshold in query.min_quality.items():
                have = view.get(f"quality:{dim}")
                if have is None or not isinstance(have, (int, float)) or have < threshold:
                    ok = False
                    break
            if ok and query.max_base_price is not None:
                price = view.get("base_price")
                if price is None or not isinstance(price, (int, float)) or price > query.max_base_price:
                    ok = False
            if ok and query.required_methods:
                methods = view.get("payment_methods")
                if not isinstance(methods, str) or not set(query.required_methods) <= set(methods.split(",")):
                    ok = False
            if ok:
                matches.append(entry)
        return matches

    # --- snapshot import/export ---

    def export_snapshot(self) -> bytes:
        doc = [
            {
                "agent_id": e.agent_id,
                "capability": {
                    "id": e.capability.id,
                    "spec_text": e.capability.spec_text,
                    "quality_region": [list(b) for b in e.capability.quality_region],
                    "cost_model_ref": e.capability.cost_model_ref,
                },
                "attributes": [
                    {"name": a.name, "value": a.value, "sensitivity": a.sensitivity}
                    for a in e.attributes
                ],
                "disclosure": e.disclosure,
                "manifest": {
                    "extension_id": e.manifest.extension_id,
                    "version": e.manifest.version,
                    "supported_features": list(e.manifest.supported_features),
                },
                "endpoint": e.endpoint,
            }
            for e in self.entries
        ]
        return canonical_bytes(doc)

    @classmethod
    def import_snapshot(cls, data: bytes) -> "Registry":
        registry = cls()
        for raw in canonical_loads(data):
            entry = RegistryEntry(
                raw["agent_id"],
                CapabilitySpec(
                    raw["capability"]["id"],
                    raw["capability"]["spec_text"],
                    tuple(tuple(b) for b in raw["capability"]["quality_region"]),
                    raw["capability"]["cost_model_ref"],
                ),
                tuple(Attribute(a["name"], a["value"], a["sensitivity"]) for a in raw["attributes"]),
                raw["disclosure"],
                ExtensionManifest(
                    raw["manifest"]["extension_id"],
                    raw["manifest"]["version"],
                    tuple(raw["manifest"]["supported_features"]),
                ),
                raw["endpoint"],
            )
            registry.register(entry)
        return registry


# --- matching ----------------------------------------------------------------

MATCH_MODES = ("random", "capability", "preference")


def match_probabilities(
    mode: str,
    buyers: list[str],
    sellers: list[str],
    compatible: dict[str, set[str]] | None = None,
    scores: dict[str, dict[str, float]] | None = None,
) -> dict[tuple[str, str], float]:
    """Per-pair matching probability alpha_ij for one buyer draw.

    random: uniform over all sellers. capability: uniform over compatible
    sellers. preference: softmax of the buyer's scores over compatible
    sellers. Probabilities are per buyer (rows sum to 1 where any seller is
    admissible); the round pairing then resolves capacity conflicts.
    """
    if mode not in MATCH_MODES:
        raise RegistryError(f"unknown matching mode {mode!r}")
    alpha: dict[tuple[str, str], float] = {}
    for buyer in buyers:
        if mode == "random":
            pool = list(sellers)
        else:
            pool = [s for s in sellers if compatible is None or s in compatible.get(buyer, set())]
        if not pool:
            continue
        if mode == "preference" and scores is not None:
            weights = [math.exp(scores.get(buyer, {}).get(s, 0.0)) for s in pool]
            total = sum(weights)
            for seller, weight in zip(pool, weights):
                alpha[(buyer, seller)] = weight / total
        else:
            for seller in pool:
                alpha[(buyer, seller)] = 1.0 / len(pool)
    return alpha


def match(
    mode: str,
    buyers: list[str],
    sellers: list[str],
    rng,
    compatible: dict[str, set[str]] | None = None,
    scores: dict[str, dict[str, float]] | None = None,
) -> list[tuple[str, str]]:
    """One round of buyer-seller pairing; each seller serves one buyer.

    Buyers draw in random order; each samples a seller from its admissible
    pool (uniform or softmax-weighted) among those still unclaimed. Buyers
    with an empty pool stay unmatched this round.
    """
    if mode not in MATCH_MODES:
        raise RegistryError(f"unknown matching mode {mode!r}")
    order = list(buyers)
    rng.shuffle(order)
    free = set(sellers)
    pairs: list[tuple[str, str]] = []
    for buyer in order:
        if mode == "random":
            pool = [s for s in sellers if s in free]
        else:
            allowed = compatible.get(buyer, set()) if compatible else set(sellers)
            pool = [s for s in sellers if s in free and s in allowed]
        if not pool:
            continue
        if mode == "preference" and scores is not None:
            weights = [math.exp(scores.get(buyer, {}).get(s, 0.0)) for s in pool]
            total = sum(weights)
            pick = rng.random() * total
            acc = 0.0
            chosen = pool[-1]
            for seller, weight in zip(pool, weights):
                acc += weight
                if pick <= acc:
                    chosen = seller
                    break
        else:
            chosen = pool[rng.randrange(len(pool))]
        free.discard(chosen)
        pairs.append((buyer, chosen))
    return pairs
