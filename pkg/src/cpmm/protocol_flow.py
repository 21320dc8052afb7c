"""Canned end-to-end negotiation flows.

Drives a session through all ten steps with real payloads: a committed
economic proposal, escrow funding at Commit, a signed quality attestation at
Verify, settlement at Release and the audit trail at Audit. Used by the
market simulator's full-protocol mode, the demo command and tests.
"""

from __future__ import annotations

from dataclasses import dataclass

from .acnbp import NegotiationEngine, NegotiationSession
from .canonical import record_hash
from .fixtures import ATTESTER_KEY, attester_chain
from .keys import SigningKey
from .money import Money
from .payloads import (
    EconomicProposal,
    PaymentTerms,
    PricingModel,
    QualityGuarantee,
    QualityMeasurement,
    RefundPolicy,
    ServiceLevelAgreement,
    make_attestation,
)

DEFAULT_GUARANTEES = (
    QualityGuarantee("latency", "< 100ms", "5% price reduction per 10ms over"),
    QualityGuarantee("accuracy", "> 95%", "full refund if < 90%"),
)

COMPLIANT_MEASUREMENTS = (
    QualityMeasurement("latency", "85ms", "client_side_timing", "±5ms"),
    QualityMeasurement("accuracy", "97.3%", "reference_comparison", "±1.2%"),
)


def build_proposal(seller: str, price: Money, capability: str,
                   seller_key: SigningKey, session_id: str) -> EconomicProposal:
    ep = EconomicProposal(
        version="1.0",
        proposal_id=f"{session_id}-ep",
        timestamp="2025-07-27T00:59:40Z",
        pricing_model=PricingModel("fixed", price),
        payment_terms=PaymentTerms(("X402", "H402"), "post_delivery", True, RefundPolicy()),
        service_level_agreement=ServiceLevelAgreement(DEFAULT_GUARANTEES, "99.9%", {}),
        nanda_capability_hash=record_hash(capability),
    )
    return ep.committed(seller_key)


@dataclass
class FlowMessages:
    """Payload overrides for exercising failure paths in tests."""

    measurements: tuple = COMPLIANT_MEASUREMENTS
    max_price: Money | None = None
    quality_request: dict | None = None


def run_full_session(
    engine: NegotiationEngine,
    session_id: str,
    buyer: str,
    seller: str,
    price: Money,
    capability: str = "svc.translate",
    flow: FlowMessages | None = None,
) -> NegotiationSession:
    """Advance a fresh session Discover -> Audit with economic payloads."""
    flow = flow or FlowMessages()
    session = engine.open_session(session_id, buyer, seller)
    seller_key = engine.agent_keys[seller]
    max_price = flow.max_price or price
    quality_request = flow.quality_request or {"latency": "<100ms", "accuracy": ">95%"}
    ep = build_proposal(seller, price, capability, seller_key, session_id)

    engine.advance(session, engine.message(session, "Discover", {"capability": capability}))
    engine.advance(session, engine.message(session, "PreScreen", {"passed": [seller]}))
    engine.advance(session, engine.message(session, "NegotiateRequest", {
        "quality_request": quality_request,
        "max_price": {"minor": max_price.minor, "currency": max_price.currency,
                      "precision": max_price.precision},
        "payment_method": "H402",
    }))
    engine.advance(session, engine.message(session, "NegotiateResponse", {
        "price_quote": {"minor": price.minor, "currency": price.currency,
                        "precision": price.precision},
        "sla_commitment": [g.to_record() for g in DEFAULT_GUARANTEES],
        "economic_proposal": ep.to_record(),
    }))
    engine.advance(session, engine.message(session, "Bind", {
        "accepted_proposal_hash": ep.cryptographic_commitment.commitment_hash,
    }))
    engine.advance(session, engine.message(session, "Commit", {}))
    engine.advance(session, engine.message(session, "Execute", {
        "service_instance_id": f"{session_id}-svc",
    }))
    attestation = make_attestation(
        f"{session_id}-att", f"{session_id}-svc", "2025-07-27T00:59:43Z",
        flow.measurements,
        session.economic.proposal.service_level_agreement.rules() if not session.legacy_mode else [],
        "attester:sim-tee-1", ATTESTER_KEY, attester_chain(),
    )
    engine.advance(session, engine.message(session, "Verify", {
        "attestation": attestation.to_record(),
    }))
    engine.advance(session, engine.message(session, "Release", {}))
    engine.advance(session, engine.message(session, "Audit", {}))
    return session
