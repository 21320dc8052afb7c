"""Seeded random generators for the three payload record kinds (test-only)."""

import random

from cpmm.keys import SigningKey
from cpmm.money import Money
from cpmm.payloads import (
    AttestationProof,
    AttestationSource,
    CryptographicProof,
    EconomicProposal,
    EscrowDetails,
    PaymentInstruction,
    PaymentSchedule,
    PaymentTerms,
    Penalty,
    PricingModel,
    QualityAdjustment,
    QualityAttestation,
    QualityGuarantee,
    QualityMeasurement,
    QualityMultiplier,
    RefundCapability,
    RefundPolicy,
    ServiceLevelAgreement,
    SlaCompliance,
    SlaRule,
    VolumeDiscount,
)

DIMS = ["latency", "accuracy", "throughput", "availability"]
UNITS = {"latency": "ms", "accuracy": "%", "throughput": "rps", "availability": "%"}


def rand_timestamp(rng: random.Random) -> str:
    return f"202{rng.randint(4, 6)}-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}T{rng.randint(10, 23)}:{rng.randint(10, 59)}:{rng.randint(10, 59)}Z"


def rand_penalty(rng: random.Random, unit: str) -> str:
    kind = rng.choice(["per_unit", "full_refund", "fixed"])
    if kind == "per_unit":
        return Penalty("percent_per_unit_over", rng.randint(1, 20) / 100, rng.randint(1, 50), unit=unit).emit()
    if kind == "full_refund":
        return Penalty("full_refund_below", threshold=rng.randint(50, 99), unit=unit).emit()
    return Penalty("fixed_percent", rate=rng.randint(1, 30) / 100).emit()


def rand_guarantee(rng: random.Random) -> QualityGuarantee:
    dim = rng.choice(DIMS)
    unit = UNITS[dim]
    comparator = rng.choice(["<", ">", "<=", ">="])
    rule = SlaRule(dim, comparator, rng.randint(1, 200), unit, Penalty.parse(rand_penalty(rng, unit)))
    return QualityGuarantee(dim, rule.emit_guarantee(), rule.emit_penalty())


def rand_ep(rng: random.Random, signed: bool = True) -> EconomicProposal:
    precision = rng.randint(0, 4)
    multipliers = tuple(
        QualityMultiplier(
            rng.choice(DIMS),
            rng.choice(["linear", "exponential"]),
            {"slope": rng.randint(1, 40) / 10, "intercept": rng.randint(0, 10) / 10}
            if rng.random() < 0.5
            else {"base": rng.randint(1, 20) / 10, "exponent": rng.randint(-10, 10) / 10},
        )
        for _ in range(rng.randint(0, 3))
    )
    discounts = tuple(
        VolumeDiscount(rng.randint(10, 500), rng.randint(0, 30) / 100)
        for _ in range(rng.randint(0, 2))
    )
    ep = EconomicProposal(
        version="1.0",
        proposal_id=f"prop-{rng.getrandbits(48):012x}",
        timestamp=rand_timestamp(rng),
        pricing_model=PricingModel(
            rng.choice(["fixed", "dynamic_quality_based"]),
            Money(rng.randint(1, 10_000), rng.choice(["USD", "EUR", "AGT"]), precision),
            multipliers,
            discounts,
        ),
        payment_terms=PaymentTerms(
            tuple(rng.sample(["X402", "H402", "lightning"], rng.randint(1, 3))),
            rng.choice(["post_delivery", "pre_delivery"]),
            rng.random() < 0.8,
            RefundPolicy(),
        ),
        service_level_agreement=ServiceLevelAgreement(
            tuple(rand_guarantee(rng) for _ in range(rng.randint(0, 3))),
            f"{rng.randint(90, 99)}.{rng.randint(0, 9)}%",
            {"max_concurrent_requests": rng.randint(1, 64)},
        ),
        nanda_capability_hash=f"{rng.getrandbits(256):064x}",
    )
    if signed:
        ep = ep.committed(SigningKey.from_seed(f"ep-{rng.random()}"))
    return ep


def rand_measurement(rng: random.Random) -> QualityMeasurement:
    dim = rng.choice(DIMS)
    unit = UNITS[dim]
    return QualityMeasurement(
        dim,
        f"{rng.randint(1, 150)}{unit}",
        rng.choice(["client_side_timing", "reference_comparison", "sampled_probe"]),
        f"±{rng.randint(1, 9)}{unit}",
    )


def rand_instruction(rng: random.Random) -> PaymentInstruction:
    precision = rng.randint(0, 3)
    base = Money(rng.randint(1, 99_999), "USD", precision)
    adjustments = tuple(
        QualityAdjustment(
            rng.choice(DIMS),
            f"{rng.randint(1, 150)}{UNITS[rng.choice(DIMS)]}",
            f"{rng.choice(['+', '-'])}{Money(rng.randint(0, 500), 'USD', precision).format()}",
        )
        for _ in range(rng.randint(0, 3))
    )
    instr = PaymentInstruction(
        version="1.0",
        instruction_id=f"ins-{rng.getrandbits(48):012x}",
        payment_method=rng.choice(["X402", "H402"]),
        base_amount=base,
        quality_adjustments=adjustments,
        final_amount=None,
        payment_schedule=PaymentSchedule(timeout=rng.randint(30, 900)),
        escrow_details=EscrowDetails(f"escrow-agent-{rng.randint(0, 9)}"),
        refund_capability=RefundCapability(f"token-{rng.getrandbits(32):08x}"),
        cryptographic_proof=CryptographicProof(
            f"{rng.getrandbits(256):064x}",
            "c2ln" * 21 + "c2ln"[: rng.randint(0, 3)],
            rand_timestamp(rng),
        ),
    )
    return instr.finalized()


def rand_attestation(rng: random.Random) -> QualityAttestation:
    return QualityAttestation(
        version="1.0",
        attestation_id=f"att-{rng.getrandbits(48):012x}",
        service_instance_id=f"svc-{rng.getrandbits(48):012x}",
        timestamp=rand_timestamp(rng),
        quality_measurements=tuple(rand_measurement(rng) for _ in range(rng.randint(1, 4))),
        sla_compliance=SlaCompliance(rng.random() < 0.7, (), ()),
        attestation_source=AttestationSource(attester_id=f"attester-{rng.randint(0, 9)}"),
        cryptographic_proof=AttestationProof(
            f"{rng.getrandbits(256):064x}", "c2lnbmF0dXJl", ("Y2VydDE=", "cm9vdA==")
        ),
    )
