"""Replay of the marketplace walkthrough: MarketOracleAgent buys 100 units of
ScheduleManagement from SchedulingAgent through the full ten-step protocol.

The transcript follows the reference transaction log step for step (the two
negotiation messages both print under the [Negotiate] label) and ends with a
digital trade certificate carrying both parties' signatures over the terms.
Everything is driven through the real engine: registry discovery, signed
messages, escrow, attestation, settlement and the audit trail.
"""

from __future__ import annotations

from dataclasses import dataclass

from .acnbp import NegotiationEngine
from .canonical import canonical_bytes, record_hash
from .economics import CapabilitySpec, Dimension, DimensionRegistry
from .fixtures import TRUST_ROOT_KEY
from .money import Money
from .protocol_flow import run_full_session
from .registry import Attribute, DiscoveryQuery, Registry, RegistryEntry

BUYER = "MarketOracleAgent"
SELLER = "SchedulingAgent"
CAPABILITY = "ScheduleManagement"
PAYMENT_UNITS = 100

DIMS = DimensionRegistry((
    Dimension("latency", "ms", higher_is_better=False, cap=200.0),
    Dimension("accuracy", "%", higher_is_better=True, cap=100.0),
))

STEP_LABELS = {
    "Discover": "[Discover]",
    "PreScreen": "[Pre-screen]",
    "NegotiateRequest": "[Negotiate]",
    "NegotiateResponse": "[Negotiate]",
    "Bind": "[Bind]",
    "Commit": "[Commit]",
    "Execute": "[Execute]",
    "Verify": "[Verify]",
    "Release": "[Release]",
    "Audit": "[Audit]",
}

STEP_TEXT = {
    "Discover": f"{BUYER} uses ANS to find agents with '{CAPABILITY}' capability. Found {SELLER}.",
    "PreScreen": f"{BUYER} filters candidates. {SELLER} passes basic checks.",
    "NegotiateRequest": f"{BUYER} requests to use capability for {PAYMENT_UNITS} units.",
    "NegotiateResponse": f"{SELLER} confirms capability and agrees to terms.",
    "Bind": "Mutual commitment to terms, creating an enforceable service agreement.",
    "Commit": "Cryptographic commitment to service delivery. Certificate generated.",
    "Execute": f"{SELLER} performs '{CAPABILITY}' service for {BUYER}.",
    "Verify": f"{BUYER} verifies service quality and compliance.",
    "Release": f"{BUYER} releases {PAYMENT_UNITS} units to {SELLER}.",
    "Audit": "Transaction outcome recorded. Reputation scores for both agents updated.",
}


@dataclass(frozen=True)
class TradeCertificate:
    serial: str
    issuer: str
    buyer: str
    seller: str
    capability: str
    payment: str
    buyer_signature: str  # full hex
    seller_signature: str

    @staticmethod
    def _short(signature_hex: str) -> str:
        return f"0x{signature_hex[:8]}...{signature_hex[-8:]}"

    def display_lines(self) -> list[str]:
        return [
            "Digital Trade Certificate",
            f"Serial: {self.serial}",
            f"Issuer: {self.issuer}",
            f"Buyer: {self.buyer}",
            f"Seller: {self.seller}",
            f"Capability: {self.capability}",
            f"Payment: {self.payment}",
            f"Buyer Signature: {self._short(self.buyer_signature)}",
            f"Seller Signature: {self._short(self.seller_signature)}",
        ]

    def to_record(self) -> dict:
        return {
            "serial": self.serial,
            "issuer": self.issuer,
            "buyer": self.buyer,
            "seller": self.seller,
            "capability": self.capability,
            "payment": self.payment,
            "buyer_signature": self.buyer_signature,
            "seller_signature": self.seller_signature,
        }


@dataclass
class DemoResult:
    transcript: list[str]
    certificate: TradeCertificate
    audit_entries: int
    escrow_conserved: bool

    @property
    def step_labels(self) -> list[str]:
        return [line.split(" ", 1)[0] for line in self.transcript if line.startswith("[")]


def make_certificate(engine: NegotiationEngine, session_id: str, price: Money) -> TradeCertificate:
    terms = {
        "session_id": session_id,
        "buyer": BUYER,
        "seller": SELLER,
        "capability": CAPABILITY,
        "payment": f"{price.format()} units",
    }
    payload = canonical_bytes(terms)
    buyer_sig = engine.agent_keys[BUYER].sign(payload).hex()
    seller_sig = engine.agent_keys[SELLER].sign(payload).hex()
    serial = f"CERT-{int(record_hash(terms), 16) % 10**13:013d}"
    return TradeCertificate(
        serial, "CPMM Secure Authority", BUYER, SELLER, CAPABILITY,
        f"{price.format()} units", buyer_sig, seller_sig,
    )


def run_demo() -> DemoResult:
    registry = Registry()
    engine = NegotiationEngine(trust_root_public_b64=TRUST_ROOT_KEY.public_b64, dims=DIMS)
    engine.register_agent(BUYER)
    engine.register_agent(SELLER)
    registry.register(RegistryEntry(
        SELLER,
        CapabilitySpec(CAPABILITY, "calendar and task scheduling", ((0.0, 1.0), (0.0, 1.0))),
        (Attribute("quality:accuracy", 0.97, 0), Attribute("base_price", float(PAYMENT_UNITS), 1)),
        disclosure=1.0,
    ))
    found = registry.discover(DiscoveryQuery(CAPABILITY))
    assert [e.agent_id for e in found] == [SELLER]

    price = Money(PAYMENT_UNITS, "AGT", 0)
    session = run_full_session(engine, "demo-figure", BUYER, SELLER, price, capability=CAPABILITY)
    certificate = make_certificate(engine, session.session_id, price)

    transcript = [
        f"{STEP_LABELS[env.step]} {STEP_TEXT[env.step]}" for env in session.message_log
    ]
    commit_at = next(i for i, line in enumerate(transcript) if line.startswith("[Commit]"))
    transcript[commit_at + 1:commit_at + 1] = [f"  {line}" for line in certificate.display_lines()]
    transcript.append("Simulation complete. All steps executed successfully.")

    trail = engine.emit_audit(session)
    return DemoResult(
        transcript, certificate, len(trail),
        engine.escrow.ledger.global_sum() == 0,
    )
