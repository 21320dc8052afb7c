"""Economic payload records: proposals, payment instructions, attestations.

The three wire records carry the economic terms of a trade. Each serializes
through the canonical encoder (canonical.py), commits via SHA-256 over the
canonical bytes with the commitment subtree removed, and signs the 32 hash
bytes with Ed25519. SLA guarantees and penalties are prose strings on the
wire ("< 100ms", "5% price reduction per 10ms over"); a small grammar parses
them into machine-enforceable rules and re-emits them losslessly.
"""

from __future__ import annotations

import base64
import json
import math
import re
from dataclasses import dataclass, field, replace

from .canonical import canonical_bytes, normalize_timestamp, record_hash, sha256_hex
from .keys import SigningKey, verify
from .money import Money, MoneyError, infer_amount, parse_amount


class PayloadError(ValueError):
    pass


def _require_keys(record: dict, required: set[str], optional: set[str], where: str) -> None:
    keys = set(record)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise PayloadError(f"{where}: missing fields {sorted(missing)}")
    if unknown:
        raise PayloadError(f"{where}: unknown fields {sorted(unknown)}")


# --- SLA grammar -------------------------------------------------------------

COMPARATORS = ("<=", ">=", "<", ">")

_VALUE_RE = re.compile(r"^([+-]?\d+(?:\.\d+)?)\s*([a-zA-Z%/]*)$")
_GUARANTEE_RE = re.compile(r"^(<=|>=|<|>)\s*(\d+(?:\.\d+)?)\s*([a-zA-Z%/]*)$")
_PER_UNIT_RE = re.compile(
    r"^(\d+(?:\.\d+)?)% price reduction per (\d+(?:\.\d+)?)([a-zA-Z%/]*) over$"
)
_FULL_REFUND_RE = re.compile(r"^full refund if < (\d+(?:\.\d+)?)([a-zA-Z%/]*)$")
_FIXED_RE = re.compile(r"^(\d+(?:\.\d+)?)% price reduction$")


def parse_measured(text: str) -> tuple[float, str]:
    """Split a measured value like '85ms' or '97.3%' into (number, unit)."""
    match = _VALUE_RE.match(text.strip())
    if not match:
        raise PayloadError(f"unparseable measured value {text!r}")
    return float(match.group(1)), match.group(2)


def _fmt_num(value: float) -> str:
    return f"{value:g}"


@dataclass(frozen=True)
class Penalty:
    """One of: percent_per_unit_over(rate, step), full_refund_below(threshold),
    fixed_percent(rate). Rates are fractions (0.05 for '5%')."""

    kind: str
    rate: float = 0.0
    step: float = 0.0
    threshold: float = 0.0
    unit: str = ""

    def __post_init__(self):
        if self.rate < 0:
            raise PayloadError("penalty rate must be >= 0")
        if self.kind == "percent_per_unit_over" and self.step <= 0:
            raise PayloadError("penalty step must be > 0")

    @classmethod
    def parse(cls, text: str) -> "Penalty":
        if match := _PER_UNIT_RE.match(text.strip()):
            rate, step, unit = match.groups()
            return cls("percent_per_unit_over", float(rate) / 100.0, float(step), unit=unit)
        if match := _FULL_REFUND_RE.match(text.strip()):
            threshold, unit = match.groups()
            return cls("full_refund_below", threshold=float(threshold), unit=unit)
        if match := _FIXED_RE.match(text.strip()):
            return cls("fixed_percent", rate=float(match.group(1)) / 100.0)
        raise PayloadError(f"unparseable penalty {text!r}")

    def emit(self) -> str:
        if self.kind == "percent_per_unit_over":
            return f"{_fmt_num(self.rate * 100)}% price reduction per {_fmt_num(self.step)}{self.unit} over"
        if self.kind == "full_refund_below":
            return f"full refund if < {_fmt_num(self.threshold)}{self.unit}"
        if self.kind == "fixed_percent":
            return f"{_fmt_num(self.rate * 100)}% price reduction"
        raise PayloadError(f"unknown penalty kind {self.kind!r}")


@dataclass(frozen=True)
class SlaRule:
    """Machine form of one quality guarantee plus its penalty."""

    dimension: str
    comparator: str  # <, >, <=, >=
    threshold: float
    unit: str
    penalty: Penalty

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise PayloadError(f"bad comparator {self.comparator!r}")

    @classmethod
    def parse(cls, dimension: str, guarantee: str, penalty: str) -> "SlaRule":
        match = _GUARANTEE_RE.match(guarantee.strip())
        if not match:
            raise PayloadError(f"unparseable guarantee {guarantee!r}")
        comparator, threshold, unit = match.groups()
        return cls(dimension, comparator, float(threshold), unit, Penalty.parse(penalty))

    def emit_guarantee(self) -> str:
        return f"{self.comparator} {_fmt_num(self.threshold)}{self.unit}"

    def emit_penalty(self) -> str:
        return self.penalty.emit()

    def satisfied(self, measured: float) -> bool:
        if self.comparator == "<":
            return measured < self.threshold
        if self.comparator == "<=":
            return measured <= self.threshold
        if self.comparator == ">":
            return measured > self.threshold
        return measured >= self.threshold

    def overage(self, measured: float) -> float:
        """How far past the guarantee the measurement is (0 when satisfied)."""
        if self.comparator in ("<", "<="):
            return max(0.0, measured - self.threshold)
        return max(0.0, self.threshold - measured)

    def penalty_contribution(self, measured: float) -> float:
        if self.satisfied(measured):
            return 0.0
        pen = self.penalty
        if pen.kind == "percent_per_unit_over":
            return pen.rate * math.ceil(self.overage(measured) / pen.step)
        if pen.kind == "full_refund_below":
            return 1.0 if measured < pen.threshold else 0.0
        return pen.rate


def sla_rules_from_guarantees(guarantees: list["QualityGuarantee"]) -> list[SlaRule]:
    return [SlaRule.parse(g.dimension, g.guarantee, g.penalty) for g in guarantees]


def sla_hash(rules: list[SlaRule]) -> str:
    """SHA-256 hex identifying an accepted SLA rule set."""
    doc = [
        {"dimension": r.dimension, "guarantee": r.emit_guarantee(), "penalty": r.emit_penalty()}
        for r in rules
    ]
    return record_hash(doc)


@dataclass(frozen=True)
class ComplianceReport:
    compliant: bool
    penalty_fraction: float
    violated_rules: tuple[str, ...]  # dimensions of violated guarantees


def evaluate_sla(rules: list[SlaRule], att: "QualityAttestation", price: Money | None = None) -> ComplianceReport:
    """Aggregate SLA penalties from attested measurements.

    penalty_fraction = min(1, sum of rule contributions); a rule whose
    dimension is missing from the attestation is an error, not a pass.
    """
    measured = {m.dimension: parse_measured(m.measured_value)[0] for m in att.quality_measurements}
    total = 0.0
    violated = []
    for rule in rules:
        if rule.dimension not in measured:
            raise PayloadError(f"attestation lacks measurement for dimension {rule.dimension!r}")
        value = measured[rule.dimension]
        if not rule.satisfied(value):
            violated.append(rule.dimension)
        total += rule.penalty_contribution(value)
    fraction = min(1.0, total)
    return ComplianceReport(fraction == 0.0, fraction, tuple(violated))


# --- commitments -------------------------------------------------------------


@dataclass(frozen=True)
class Commitment:
    commitment_hash: str
    signature: str  # base64
    public_key: str  # base64

    def to_record(self) -> dict:
        return {
            "commitment_hash": self.commitment_hash,
            "signature": self.signature,
            "public_key": self.public_key,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Commitment":
        _require_keys(record, {"commitment_hash", "signature", "public_key"}, set(), "cryptographic_commitment")
        return cls(record["commitment_hash"], record["signature"], record["public_key"])


def canonical_serialize(record) -> bytes:
    """Canonical bytes of a payload record (or any JSON-shaped value)."""
    if hasattr(record, "to_record"):
        record = record.to_record()
    return canonical_bytes(record)


def commit(record, signing_key: SigningKey) -> Commitment:
    """Hash the record without its commitment subtree and sign the hash bytes."""
    body = record.to_record() if hasattr(record, "to_record") else dict(record)
    body.pop("cryptographic_commitment", None)
    digest_hex = record_hash(body)
    signature = signing_key.sign_b64(bytes.fromhex(digest_hex))
    return Commitment(digest_hex, signature, signing_key.public_b64)


def verify_commitment(record, commitment: Commitment | None = None) -> bool:
    """True iff the recomputed hash matches and the signature verifies."""
    body = record.to_record() if hasattr(record, "to_record") else dict(record)
    if commitment is None:
        raw = body.get("cryptographic_commitment")
        if not raw:
            return False
        commitment = Commitment.from_record(raw)
    body.pop("cryptographic_commitment", None)
    if record_hash(body) != commitment.commitment_hash:
        return False
    return verify(commitment.public_key, commitment.signature, bytes.fromhex(commitment.commitment_hash))


# --- economic proposal --------------------------------------------------------


@dataclass(frozen=True)
class QualityMultiplier:
    dimension: str
    function: str  # linear | exponential
    parameters: dict

    def __post_init__(self):
        if self.function not in ("linear", "exponential"):
            raise PayloadError(f"unknown multiplier function {self.function!r}")

    def apply(self, q: float) -> float:
        if self.function == "linear":
            return self.parameters.get("slope", 1.0) * q + self.parameters.get("intercept", 0.0)
        # exponential: base * 2^(exponent * q), documented in the format notes
        return self.parameters.get("base", 1.0) * 2.0 ** (self.parameters.get("exponent", 0.0) * q)

    def to_record(self) -> dict:
        return {"dimension": self.dimension, "function": self.function, "parameters": dict(self.parameters)}

    @classmethod
    def from_record(cls, record: dict) -> "QualityMultiplier":
        _require_keys(record, {"dimension", "function", "parameters"}, set(), "quality_multiplier")
        return cls(record["dimension"], record["function"], dict(record["parameters"]))


@dataclass(frozen=True)
class VolumeDiscount:
    threshold: int
    discount_rate: float

    def __post_init__(self):
        if not (0.0 <= self.discount_rate < 1.0):
            raise PayloadError(f"discount_rate {self.discount_rate} outside [0, 1)")

    def to_record(self) -> dict:
        return {"threshold": self.threshold, "discount_rate": self.discount_rate}

    @classmethod
    def from_record(cls, record: dict) -> "VolumeDiscount":
        _require_keys(record, {"threshold", "discount_rate"}, set(), "volume_discount")
        return cls(record["threshold"], record["discount_rate"])


@dataclass(frozen=True)
class PricingModel:
    type: str
    base_price: Money
    quality_multipliers: tuple[QualityMultiplier, ...] = ()
    volume_discounts: tuple[VolumeDiscount, ...] = ()

    def to_record(self) -> dict:
        return {
            "type": self.type,
            "base_price": {
                "amount": self.base_price.format(),
                "currency": self.base_price.currency,
                "precision": self.base_price.precision,
            },
            "quality_multipliers": [m.to_record() for m in self.quality_multipliers],
            "volume_discounts": [d.to_record() for d in self.volume_discounts],
        }

    @classmethod
    def from_record(cls, record: dict) -> "PricingModel":
        _require_keys(
            record,
            {"type", "base_price", "quality_multipliers", "volume_discounts"},
            set(),
            "pricing_model",
        )
        bp = record["base_price"]
        _require_keys(bp, {"amount", "currency", "precision"}, set(), "base_price")
        price = parse_amount(bp["amount"], bp["currency"], int(bp["precision"]))
        return cls(
            record["type"],
            price,
            tuple(QualityMultiplier.from_record(m) for m in record["quality_multipliers"]),
            tuple(VolumeDiscount.from_record(d) for d in record["volume_discounts"]),
        )


@dataclass(frozen=True)
class RefundPolicy:
    full_refund_conditions: tuple[str, ...] = ("service_failure", "sla_violation")
    partial_refund_conditions: tuple[str, ...] = ("quality_degradation",)
    refund_timeframe: str = "immediate"

    def to_record(self) -> dict:
        return {
            "full_refund_conditions": list(self.full_refund_conditions),
            "partial_refund_conditions": list(self.partial_refund_conditions),
            "refund_timeframe": self.refund_timeframe,
        }

    @classmethod
    def from_record(cls, record: dict) -> "RefundPolicy":
        _require_keys(
            record,
            {"full_refund_conditions", "partial_refund_conditions", "refund_timeframe"},
            set(),
            "refund_policy",
        )
        return cls(
            tuple(record["full_refund_conditions"]),
            tuple(record["partial_refund_conditions"]),
            record["refund_timeframe"],
        )


PAYMENT_METHODS = ("X402", "H402", "lightning")


@dataclass(frozen=True)
class PaymentTerms:
    accepted_methods: tuple[str, ...]
    payment_timing: str = "post_delivery"
    escrow_required: bool = True
    refund_policy: RefundPolicy = field(default_factory=RefundPolicy)

    def __post_init__(self):
        for method in self.accepted_methods:
            if method not in PAYMENT_METHODS:
                raise PayloadError(f"unknown payment method {method!r}")

    def to_record(self) -> dict:
        return {
            "accepted_methods": list(self.accepted_methods),
            "payment_timing": self.payment_timing,
            "escrow_required": self.escrow_required,
            "refund_policy": self.refund_policy.to_record(),
        }

    @classmethod
    def from_record(cls, record: dict) -> "PaymentTerms":
        _require_keys(
            record,
            {"accepted_methods", "payment_timing", "escrow_required", "refund_policy"},
            set(),
            "payment_terms",
        )
        return cls(
            tuple(record["accepted_methods"]),
            record["payment_timing"],
            bool(record["escrow_required"]),
            RefundPolicy.from_record(record["refund_policy"]),
        )


@dataclass(frozen=True)
class QualityGuarantee:
    dimension: str
    guarantee: str
    penalty: str

    def __post_init__(self):
        # must parse and re-emit losslessly
        rule = SlaRule.parse(self.dimension, self.guarantee, self.penalty)
        if rule.emit_guarantee() != self.guarantee or rule.emit_penalty() != self.penalty:
            raise PayloadError(
                f"guarantee/penalty not in canonical form: {self.guarantee!r} / {self.penalty!r}"
            )

    def to_record(self) -> dict:
        return {"dimension": self.dimension, "guarantee": self.guarantee, "penalty": self.penalty}

    @classmethod
    def from_record(cls, record: dict) -> "QualityGuarantee":
        _require_keys(record, {"dimension", "guarantee", "penalty"}, set(), "quality_guarantee")
        return cls(record["dimension"], record["guarantee"], record["penalty"])


@dataclass(frozen=True)
class ServiceLevelAgreement:
    quality_guarantees: tuple[QualityGuarantee, ...]
    availability_guarantee: str = "99.9%"
    capacity_limits: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "quality_guarantees": [g.to_record() for g in self.quality_guarantees],
            "availability_guarantee": self.availability_guarantee,
            "capacity_limits": dict(self.capacity_limits),
        }

    @classmethod
    def from_record(cls, record: dict) -> "ServiceLevelAgreement":
        _require_keys(
            record,
            {"quality_guarantees", "availability_guarantee", "capacity_limits"},
            set(),
            "service_level_agreement",
        )
        return cls(
            tuple(QualityGuarantee.from_record(g) for g in record["quality_guarantees"]),
            record["availability_guarantee"],
            dict(record["capacity_limits"]),
        )

    def rules(self) -> list[SlaRule]:
        return sla_rules_from_guarantees(list(self.quality_guarantees))


@dataclass(frozen=True)
class EconomicProposal:
    version: str
    proposal_id: str
    timestamp: str
    pricing_model: PricingModel
    payment_terms: PaymentTerms
    service_level_agreement: ServiceLevelAgreement
    nanda_capability_hash: str
    cryptographic_commitment: Commitment | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamp", normalize_timestamp(self.timestamp))

    def to_record(self) -> dict:
        record = {
            "version": self.version,
            "proposal_id": self.proposal_id,
            "timestamp": self.timestamp,
            "pricing_model": self.pricing_model.to_record(),
            "payment_terms": self.payment_terms.to_record(),
            "service_level_agreement": self.service_level_agreement.to_record(),
            "nanda_capability_hash": self.nanda_capability_hash,
        }
        if self.cryptographic_commitment is not None:
            record["cryptographic_commitment"] = self.cryptographic_commitment.to_record()
        return record

    @classmethod
    def from_record(cls, record: dict) -> "EconomicProposal":
        _require_keys(
            record,
            {
                "version", "proposal_id", "timestamp", "pricing_model",
                "payment_terms", "service_level_agreement", "nanda_capability_hash",
            },
            {"cryptographic_commitment"},
            "economic_proposal",
        )
        commitment = record.get("cryptographic_commitment")
        return cls(
            record["version"],
            record["proposal_id"],
            record["timestamp"],
            PricingModel.from_record(record["pricing_model"]),
            PaymentTerms.from_record(record["payment_terms"]),
            ServiceLevelAgreement.from_record(record["service_level_agreement"]),
            record["nanda_capability_hash"],
            Commitment.from_record(commitment) if commitment else None,
        )

    def committed(self, key: SigningKey) -> "EconomicProposal":
        return replace(self, cryptographic_commitment=commit(self, key))


def price_quote(ep: EconomicProposal, q, volume: int, dims=None) -> Money:
    """Quoted price: base * product of multipliers * (1 - volume discount).

    `q` is a QualityVector over the scenario dimension registry `dims`
    (required when the proposal carries quality multipliers). Rounded
    half-even once, at the currency precision, floored at zero.
    """
    if volume < 1:
        raise PayloadError("volume must be >= 1")
    model = ep.pricing_model
    factor = 1.0
    for mult in model.quality_multipliers:
        if dims is None:
            raise PayloadError("dimension registry required to apply quality multipliers")
        factor *= mult.apply(q.values[dims.index_of(mult.dimension)])
    rate = 0.0
    for disc in sorted(model.volume_discounts, key=lambda d: d.threshold):
        if volume >= disc.threshold:
            rate = disc.discount_rate
    quote = model.base_price.scaled(factor * (1.0 - rate))
    if quote.minor < 0:
        quote = Money(0, quote.currency, quote.precision)
    return quote


# --- payment instruction ------------------------------------------------------


@dataclass(frozen=True)
class QualityAdjustment:
    dimension: str
    measured_value: str
    adjustment: str  # signed decimal string, e.g. "+0.15"

    def __post_init__(self):
        parse_measured(self.measured_value)
        if not re.match(r"^[+-]\d+(\.\d+)?$", self.adjustment):
            raise PayloadError(f"adjustment must be a signed decimal, got {self.adjustment!r}")

    def to_record(self) -> dict:
        return {
            "dimension": self.dimension,
            "measured_value": self.measured_value,
            "adjustment": self.adjustment,
        }

    @classmethod
    def from_record(cls, record: dict) -> "QualityAdjustment":
        _require_keys(record, {"dimension", "measured_value", "adjustment"}, set(), "quality_adjustment")
        return cls(record["dimension"], record["measured_value"], record["adjustment"])


@dataclass(frozen=True)
class PaymentSchedule:
    type: str = "post_delivery"
    trigger_conditions: tuple[str, ...] = ("service_completion", "quality_verification")
    timeout: int = 300  # seconds

    def __post_init__(self):
        if self.timeout <= 0:
            raise PayloadError("timeout must be > 0")

    def to_record(self) -> dict:
        return {
            "type": self.type,
            "trigger_conditions": list(self.trigger_conditions),
            "timeout": f"{self.timeout}s",
        }

    @classmethod
    def from_record(cls, record: dict) -> "PaymentSchedule":
        _require_keys(record, {"type", "trigger_conditions", "timeout"}, set(), "payment_schedule")
        timeout = record["timeout"]
        if not isinstance(timeout, str) or not timeout.endswith("s"):
            raise PayloadError(f"timeout must look like '300s', got {timeout!r}")
        return cls(record["type"], tuple(record["trigger_conditions"]), int(timeout[:-1]))


@dataclass(frozen=True)
class EscrowDetails:
    escrow_agent: str
    release_conditions: tuple[str, ...] = ("mutual_agreement", "sla_compliance", "timeout")

    def to_record(self) -> dict:
        return {"escrow_agent": self.escrow_agent, "release_conditions": list(self.release_conditions)}

    @classmethod
    def from_record(cls, record: dict) -> "EscrowDetails":
        _require_keys(record, {"escrow_agent", "release_conditions"}, set(), "escrow_details")
        return cls(record["escrow_agent"], tuple(record["release_conditions"]))


@dataclass(frozen=True)
class RefundCapability:
    capability_token: str
    refund_conditions: tuple[str, ...] = ("service_failure", "sla_violation")
    automatic_triggers: bool = True

    def to_record(self) -> dict:
        return {
            "capability_token": self.capability_token,
            "refund_conditions": list(self.refund_conditions),
            "automatic_triggers": self.automatic_triggers,
        }

    @classmethod
    def from_record(cls, record: dict) -> "RefundCapability":
        _require_keys(
            record,
            {"capability_token", "refund_conditions", "automatic_triggers"},
            set(),
            "refund_capability",
        )
        return cls(
            record["capability_token"],
            tuple(record["refund_conditions"]),
            bool(record["automatic_triggers"]),
        )


@dataclass(frozen=True)
class CryptographicProof:
    payment_commitment: str
    signature: str
    timestamp: str

    def __post_init__(self):
        object.__setattr__(self, "timestamp", normalize_timestamp(self.timestamp))

    def to_record(self) -> dict:
        return {
            "payment_commitment": self.payment_commitment,
            "signature": self.signature,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_record(cls, record: dict) -> "CryptographicProof":
        _require_keys(record, {"payment_commitment", "signature", "timestamp"}, set(), "cryptographic_proof")
        return cls(record["payment_commitment"], record["signature"], record["timestamp"])


@dataclass(frozen=True)
class PaymentInstruction:
    version: str
    instruction_id: str
    payment_method: str
    base_amount: Money
    quality_adjustments: tuple[QualityAdjustment, ...]
    final_amount: Money | None
    payment_schedule: PaymentSchedule
    escrow_details: EscrowDetails
    refund_capability: RefundCapability
    cryptographic_proof: CryptographicProof | None = None

    def to_record(self) -> dict:
        record = {
            "version": self.version,
            "instruction_id": self.instruction_id,
            "payment_method": self.payment_method,
            "amount": {
                "base_amount": self.base_amount.format(),
                "currency": self.base_amount.currency,
                "quality_adjustments": [a.to_record() for a in self.quality_adjustments],
                "final_amount": self.final_amount.format() if self.final_amount else "",
            },
            "payment_schedule": self.payment_schedule.to_record(),
            "escrow_details": self.escrow_details.to_record(),
            "refund_capability": self.refund_capability.to_record(),
        }
        if self.cryptographic_proof is not None:
            record["cryptographic_proof"] = self.cryptographic_proof.to_record()
        return record

    @classmethod
    def from_record(cls, record: dict) -> "PaymentInstruction":
        _require_keys(
            record,
            {
                "version", "instruction_id", "payment_method", "amount",
                "payment_schedule", "escrow_details", "refund_capability",
            },
            {"cryptographic_proof"},
            "payment_instruction",
        )
        amount = record["amount"]
        _require_keys(amount, {"base_amount", "currency", "quality_adjustments", "final_amount"}, set(), "amount")
        base = infer_amount(amount["base_amount"], amount["currency"])
        final = None
        if amount["final_amount"]:
            final = parse_amount(amount["final_amount"], base.currency, base.precision)
        proof = record.get("cryptographic_proof")
        return cls(
            record["version"],
            record["instruction_id"],
            record["payment_method"],
            base,
            tuple(QualityAdjustment.from_record(a) for a in amount["quality_adjustments"]),
            final,
            PaymentSchedule.from_record(record["payment_schedule"]),
            EscrowDetails.from_record(record["escrow_details"]),
            RefundCapability.from_record(record["refund_capability"]),
            CryptographicProof.from_record(proof) if proof else None,
        )

    def finalized(self) -> "PaymentInstruction":
        return replace(self, final_amount=compute_final_amount(self))


def compute_final_amount(instr: PaymentInstruction) -> Money:
    """base_amount plus the signed adjustments, in minor units, floored at 0.

    Adjustments with more fraction digits than the base amount's precision are
    a currency precision mismatch.
    """
    base = instr.base_amount
    total = base.minor
    for adj in instr.quality_adjustments:
        try:
            delta = parse_amount(adj.adjustment, base.currency, base.precision)
        except MoneyError as exc:
            raise PayloadError(f"adjustment {adj.adjustment!r}: {exc}") from exc
        total += delta.minor
    return Money(max(0, total), base.currency, base.precision)


# --- quality attestation --------------------------------------------------------


@dataclass(frozen=True)
class QualityMeasurement:
    dimension: str
    measured_value: str
    measurement_method: str
    confidence_interval: str

    def __post_init__(self):
        parse_measured(self.measured_value)

    def to_record(self) -> dict:
        return {
            "dimension": self.dimension,
            "measured_value": self.measured_value,
            "measurement_method": self.measurement_method,
            "confidence_interval": self.confidence_interval,
        }

    @classmethod
    def from_record(cls, record: dict) -> "QualityMeasurement":
        _require_keys(
            record,
            {"dimension", "measured_value", "measurement_method", "confidence_interval"},
            set(),
            "quality_measurement",
        )
        return cls(
            record["dimension"],
            record["measured_value"],
            record["measurement_method"],
            record["confidence_interval"],
        )


@dataclass(frozen=True)
class SlaCompliance:
    overall_compliance: bool
    violations: tuple[str, ...] = ()
    penalties_applied: tuple[str, ...] = ()

    def to_record(self) -> dict:
        return {
            "overall_compliance": self.overall_compliance,
            "violations": list(self.violations),
            "penalties_applied": list(self.penalties_applied),
        }

    @classmethod
    def from_record(cls, record: dict) -> "SlaCompliance":
        _require_keys(
            record, {"overall_compliance", "violations", "penalties_applied"}, set(), "sla_compliance"
        )
        return cls(
            bool(record["overall_compliance"]),
            tuple(record["violations"]),
            tuple(record["penalties_applied"]),
        )


@dataclass(frozen=True)
class AttestationSource:
    type: str = "trusted_execution_environment"  # emulated by a designated attester keypair
    attester_id: str = ""

    def to_record(self) -> dict:
        return {"type": self.type, "attester_id": self.attester_id}

    @classmethod
    def from_record(cls, record: dict) -> "AttestationSource":
        _require_keys(record, {"type", "attester_id"}, set(), "attestation_source")
        return cls(record["type"], record["attester_id"])


@dataclass(frozen=True)
class AttestationProof:
    measurement_hash: str
    signature: str
    certificate_chain: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "measurement_hash": self.measurement_hash,
            "signature": self.signature,
            "certificate_chain": list(self.certificate_chain),
        }

    @classmethod
    def from_record(cls, record: dict) -> "AttestationProof":
        _require_keys(
            record, {"measurement_hash", "signature", "certificate_chain"}, set(), "cryptographic_proof"
        )
        return cls(record["measurement_hash"], record["signature"], tuple(record["certificate_chain"]))


@dataclass(frozen=True)
class QualityAttestation:
    version: str
    attestation_id: str
    service_instance_id: str
    timestamp: str
    quality_measurements: tuple[QualityMeasurement, ...]
    sla_compliance: SlaCompliance
    attestation_source: AttestationSource
    cryptographic_proof: AttestationProof | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamp", normalize_timestamp(self.timestamp))

    def to_record(self) -> dict:
        record = {
            "version": self.version,
            "attestation_id": self.attestation_id,
            "service_instance_id": self.service_instance_id,
            "timestamp": self.timestamp,
            "quality_measurements": [m.to_record() for m in self.quality_measurements],
            "sla_compliance": self.sla_compliance.to_record(),
            "attestation_source": self.attestation_source.to_record(),
        }
        if self.cryptographic_proof is not None:
            record["cryptographic_proof"] = self.cryptographic_proof.to_record()
        return record

    @classmethod
    def from_record(cls, record: dict) -> "QualityAttestation":
        _require_keys(
            record,
            {
                "version", "attestation_id", "service_instance_id", "timestamp",
                "quality_measurements", "sla_compliance", "attestation_source",
            },
            {"cryptographic_proof"},
            "quality_attestation",
        )
        proof = record.get("cryptographic_proof")
        return cls(
            record["version"],
            record["attestation_id"],
            record["service_instance_id"],
            record["timestamp"],
            tuple(QualityMeasurement.from_record(m) for m in record["quality_measurements"]),
            SlaCompliance.from_record(record["sla_compliance"]),
            AttestationSource.from_record(record["attestation_source"]),
            AttestationProof.from_record(proof) if proof else None,
        )


def measurements_hash(measurements: tuple[QualityMeasurement, ...]) -> str:
    return record_hash([m.to_record() for m in measurements])


# --- attester certificate chain ---------------------------------------------


@dataclass(frozen=True)
class Certificate:
    """Minimal attester certificate: issuer signs the subject's public key."""

    subject_id: str
    public_key: str  # base64
    issuer_id: str
    signature: str  # base64, by the issuer over the cert body

    def body(self) -> dict:
        return {"subject_id": self.subject_id, "public_key": self.public_key, "issuer_id": self.issuer_id}

    def encode(self) -> str:
        record = dict(self.body(), signature=self.signature)
        return base64.b64encode(canonical_bytes(record)).decode("ascii")

    @classmethod
    def decode(cls, text: str) -> "Certificate":
        try:
            record = json.loads(base64.b64decode(text, validate=True))
        except Exception as exc:
            raise PayloadError(f"undecodable certificate: {exc}") from exc
        _require_keys(record, {"subject_id", "public_key", "issuer_id", "signature"}, set(), "certificate")
        return cls(record["subject_id"], record["public_key"], record["issuer_id"], record["signature"])

    @classmethod
    def issue(cls, subject_id: str, subject_key: SigningKey, issuer_id: str, issuer_key: SigningKey) -> "Certificate":
        body = {"subject_id": subject_id, "public_key": subject_key.public_b64, "issuer_id": issuer_id}
        return cls(subject_id, subject_key.public_b64, issuer_id, issuer_key.sign_b64(canonical_bytes(body)))


MAX_CHAIN_DEPTH = 3


def validate_chain(chain: tuple[str, ...], trust_root_public_b64: str) -> Certificate | None:
    """Decode and verify a leaf-to-root chain; returns the leaf cert or None.

    Each certificate must be signed by the next one's key; the final cert is
    self-signed and must match the configured trust root public key.
    """
    if not chain or len(chain) > MAX_CHAIN_DEPTH:
        return None
    try:
        certs = [Certificate.decode(text) for text in chain]
    except PayloadError:
        return None
    for cert, issuer in zip(certs, certs[1:] + [certs[-1]]):
        if not verify(issuer.public_key, cert.signature, canonical_bytes(cert.body())):
            return None
    if certs[-1].public_key != trust_root_public_b64:
        return None
    return certs[0]


def make_attestation(
    attestation_id: str,
    service_instance_id: str,
    timestamp,
    measurements: tuple[QualityMeasurement, ...],
    rules: list[SlaRule],
    attester_id: str,
    attester_key: SigningKey,
    chain: tuple[str, ...],
) -> QualityAttestation:
    """Build a signed attestation whose compliance block mirrors the SLA rules."""
    bare = QualityAttestation(
        "1.0", attestation_id, service_instance_id, normalize_timestamp(timestamp),
        measurements, SlaCompliance(True), AttestationSource(attester_id=attester_id),
    )
    report = evaluate_sla(rules, bare) if rules else ComplianceReport(True, 0.0, ())
    digest = measurements_hash(measurements)
    proof = AttestationProof(digest, attester_key.sign_b64(bytes.fromhex(digest)), chain)
    compliance = SlaCompliance(
        report.compliant,
        report.violated_rules,
        tuple(f"{d}:penalty" for d in report.violated_rules),
    )
    return replace(bare, sla_compliance=compliance, cryptographic_proof=proof)


def verify_attestation(att: QualityAttestation, trust_root_public_b64: str) -> bool:
    """Hash, signature, and certificate-chain validation for an attestation."""
    proof = att.cryptographic_proof
    if proof is None:
        return False
    if measurements_hash(att.quality_measurements) != proof.measurement_hash:
        return False
    leaf = validate_chain(proof.certificate_chain, trust_root_public_b64)
    if leaf is None:
        return False
    return verify(leaf.public_key, proof.signature, bytes.fromhex(proof.measurement_hash))
