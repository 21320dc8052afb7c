"""Golden wire fixtures and the reference records they freeze.

The two header blocks are stored verbatim as they appear on the wire; the
three payload records are built from fixed example values with deterministic
signing keys, so their canonical bytes are reproducible from source. The
verifier re-encodes everything and compares byte-exactly against the files
shipped under data/fixtures/.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from .canonical import canonical_bytes, record_hash
from .keys import SigningKey
from .money import Money
from .payloads import (
    AttestationProof,
    AttestationSource,
    Certificate,
    CryptographicProof,
    EconomicProposal,
    EscrowDetails,
    PaymentInstruction,
    PaymentSchedule,
    PaymentTerms,
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
    VolumeDiscount,
    canonical_serialize,
    measurements_hash,
)
from .x402 import H402Wire, encode_402, headers_to_text, parse_402

# deterministic fixture keys
SELLER_KEY = SigningKey.from_seed("fixture-seller")
BUYER_KEY = SigningKey.from_seed("fixture-buyer")
TRUST_ROOT_KEY = SigningKey.from_seed("fixture-trust-root")
ATTESTER_KEY = SigningKey.from_seed("fixture-attester")

X402_RESPONSE_BLOCK = """X402-Payment-Required: amount=0.001 currency=USD method=H402
X402-Payment-Address: H402://payment.endpoint/invoice/12345
X402-Payment-Metadata: sla_vector=latency:100ms,accuracy:95% refund_policy=automatic
CPMM-Economic-Proposal: base64_encoded_ep_record
CPMM-Negotiation-Token: jwt_token_for_continued_negotiation"""

H402_PAYMENT_BLOCK = """H402-Payment-Key: ed25519_public_key_base64
H402-Payment-Amount: 0.001
H402-Payment-Currency: USD
H402-Payment-Invoice: invoice_id_12345
H402-Payment-Signature: schnorr_signature_base64
H402-Payment-Timestamp: unix_timestamp
H402-Quality-Request: latency:100ms,accuracy:95%
H402-SLA-Acceptance: sla_hash_sha256"""

FIXTURE_TIMESTAMP = "2025-07-27T00:59:38Z"


def reference_proposal() -> EconomicProposal:
    """The reference EP record: dynamic quality pricing with the example
    multipliers, the 100-unit volume discount at 5%, and the latency/accuracy
    SLA with its stepped and full-refund penalties."""
    ep = EconomicProposal(
        version="1.0",
        proposal_id="0e1f6f1e-02b3-45c7-9f63-6f3f5b2f7a10",
        timestamp=FIXTURE_TIMESTAMP,
        pricing_model=PricingModel(
            type="dynamic_quality_based",
            base_price=Money(1, "USD", 3),  # 0.001 USD
            quality_multipliers=(
                QualityMultiplier("latency", "exponential", {"base": 1.0, "exponent": -0.5}),
                QualityMultiplier("accuracy", "linear", {"slope": 2.0, "intercept": 0.0}),
            ),
            volume_discounts=(VolumeDiscount(100, 0.05),),
        ),
        payment_terms=PaymentTerms(
            accepted_methods=("X402", "H402", "lightning"),
            payment_timing="post_delivery",
            escrow_required=True,
            refund_policy=RefundPolicy(
                ("service_failure", "sla_violation"), ("quality_degradation",), "immediate"
            ),
        ),
        service_level_agreement=ServiceLevelAgreement(
            quality_guarantees=(
                QualityGuarantee("latency", "< 100ms", "5% price reduction per 10ms over"),
                QualityGuarantee("accuracy", "> 95%", "full refund if < 90%"),
            ),
            availability_guarantee="99.9%",
            capacity_limits={"max_concurrent_requests": 10, "max_requests_per_hour": 1000},
        ),
        nanda_capability_hash=record_hash("nlp.translation.v2"),
    )
    return ep.committed(SELLER_KEY)


def reference_instruction() -> PaymentInstruction:
    """The reference payment instruction: base 1.000 plus the +0.15 quality
    adjustment at measured 85ms, H402 settled, 300s post-delivery schedule."""
    instr = PaymentInstruction(
        version="1.0",
        instruction_id="6a7b9c10-3d4e-4f50-8a91-b2c3d4e5f607",
        payment_method="H402",
        base_amount=Money(1000, "USD", 3),  # 1.000
        quality_adjustments=(QualityAdjustment("latency", "85ms", "+0.15"),),
        final_amount=None,
        payment_schedule=PaymentSchedule(
            "post_delivery", ("service_completion", "quality_verification"), 300
        ),
        escrow_details=EscrowDetails(
            "nanda:escrow-authority", ("mutual_agreement", "sla_compliance", "timeout")
        ),
        refund_capability=RefundCapability(
            "nanda_bounded_token", ("service_failure", "sla_violation"), True
        ),
        cryptographic_proof=None,
    ).finalized()
    body = instr.to_record()
    body.pop("cryptographic_proof", None)
    digest = record_hash(body)
    proof = CryptographicProof(
        digest, BUYER_KEY.sign_b64(bytes.fromhex(digest)), FIXTURE_TIMESTAMP
    )
    return PaymentInstruction.from_record({**instr.to_record(), "cryptographic_proof": proof.to_record()})


def attester_chain() -> tuple[str, ...]:
    root_cert = Certificate.issue("cpmm:trust-root", TRUST_ROOT_KEY, "cpmm:trust-root", TRUST_ROOT_KEY)
    leaf_cert = Certificate.issue("attester:sim-tee-1", ATTESTER_KEY, "cpmm:trust-root", TRUST_ROOT_KEY)
    return (leaf_cert.encode(), root_cert.encode())


def reference_attestation() -> QualityAttestation:
    """The reference attestation: 85ms latency / 97.3% accuracy measurements
    signed by the simulated attester under the fixture trust root."""
    measurements = (
        QualityMeasurement("latency", "85ms", "client_side_timing", "±5ms"),
        QualityMeasurement("accuracy", "97.3%", "reference_comparison", "±1.2%"),
    )
    digest = measurements_hash(measurements)
    return QualityAttestation(
        version="1.0",
        attestation_id="9c8d7e6f-5a4b-4c3d-8e2f-1a0b9c8d7e6f",
        service_instance_id="2b3c4d5e-6f70-4182-93a4-b5c6d7e8f901",
        timestamp=FIXTURE_TIMESTAMP,
        quality_measurements=measurements,
        sla_compliance=SlaCompliance(True, (), ()),
        attestation_source=AttestationSource("trusted_execution_environment", "attester:sim-tee-1"),
        cryptographic_proof=AttestationProof(
            digest, ATTESTER_KEY.sign_b64(bytes.fromhex(digest)), attester_chain()
        ),
    )


@dataclass(frozen=True)
class FixtureResult:
    name: str
    ok: bool
    detail: str = ""


def _reencode_x402(stored: bytes) -> bytes:
    challenge = parse_402(stored.decode("utf-8"))
    return headers_to_text(encode_402(challenge)).encode("utf-8")


def _reencode_h402(stored: bytes) -> bytes:
    wire = H402Wire.parse(stored.decode("utf-8"))
    return headers_to_text(wire.encode()).encode("utf-8")


def _reencode_record(kind):
    def reencode(stored: bytes) -> bytes:
        record = kind.from_record(json.loads(stored))
        return canonical_serialize(record)

    return reencode


FIXTURES = {
    "x402_response.headers": (lambda: X402_RESPONSE_BLOCK.encode("utf-8"), _reencode_x402),
    "h402_payment.headers": (lambda: H402_PAYMENT_BLOCK.encode("utf-8"), _reencode_h402),
    "economic_proposal.json": (
        lambda: canonical_serialize(reference_proposal()),
        _reencode_record(EconomicProposal),
    ),
    "payment_instruction.json": (
        lambda: canonical_serialize(reference_instruction()),
        _reencode_record(PaymentInstruction),
    ),
    "quality_attestation.json": (
        lambda: canonical_serialize(reference_attestation()),
        _reencode_record(QualityAttestation),
    ),
}


def fixture_dir():
    return resources.files("cpmm").joinpath("data", "fixtures")


def write_fixtures(directory=None) -> None:
    """Regenerate the fixture files from source (build-time freezing step)."""
    base = directory or fixture_dir()
    for name, (build, _reencode) in FIXTURES.items():
        base.joinpath(name).write_bytes(build())


def verify_fixtures() -> list[FixtureResult]:
    """Re-encode every shipped fixture and compare byte-exactly."""
    results = []
    base = fixture_dir()
    for name, (build, reencode) in FIXTURES.items():
        path = base.joinpath(name)
        try:
            stored = path.read_bytes()
        except FileNotFoundError:
            results.append(FixtureResult(name, False, "fixture file missing"))
            continue
        expected = build()
        if stored != expected:
            results.append(FixtureResult(name, False, "stored bytes differ from source build"))
            continue
        try:
            round_tripped = reencode(stored)
        except Exception as exc:
            results.append(FixtureResult(name, False, f"re-encode failed: {exc}"))
            continue
        if round_tripped != stored:
            results.append(FixtureResult(name, False, "re-encode is not byte-identical"))
        else:
            results.append(FixtureResult(name, True))
    return results
