"""Ten-step negotiation state machine with economic guards and rollback.

Sessions walk Discover -> Pre-screen -> Negotiate-Request -> Negotiate-
Response -> Bind -> Commit -> Execute -> Verify -> Release -> Audit, with up
to three negotiate request/response rounds before Bind. Every message is a
signed envelope; transition guards block Bind without agreed payment terms,
Commit without funding capability or over the buyer's max price, and Release
without a recorded Verify outcome. Economic failures roll the session back
to its latest stable checkpoint (Discover, Bind or Release), refunding any
open escrow before the state change completes.

A session is a single logical thread of state; an engine hosts many sessions
with no shared mutable state between them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Any

from .canonical import canonical_bytes, record_hash
from .economics import DimensionRegistry
from .escrow import EscrowEvent, EscrowManager
from .keys import SigningKey, verify
from .money import Money
from .payloads import EconomicProposal, sla_hash, verify_commitment
from .x402 import (
    H402PaymentHeaders,
    X402Challenge,
    build_h402_payment,
    verify_payment,
)

CPMM_EXTENSION_ID = "org.cpmm.economic-coordination.v1"

STEPS = (
    "Discover",
    "PreScreen",
    "NegotiateRequest",
    "NegotiateResponse",
    "Bind",
    "Commit",
    "Execute",
    "Verify",
    "Release",
    "Audit",
)
STEP_INDEX = {name: i for i, name in enumerate(STEPS)}
STABLE_STEPS = ("Discover", "Bind", "Release")
MAX_NEGOTIATION_ROUNDS = 3

# which party sends each step's message
STEP_SENDER = {
    "Discover": "buyer",
    "PreScreen": "buyer",
    "NegotiateRequest": "buyer",
    "NegotiateResponse": "seller",
    "Bind": "buyer",
    "Commit": "buyer",
    "Execute": "seller",
    "Verify": "buyer",
    "Release": "buyer",
    "Audit": "buyer",
}


class ProtocolError(ValueError):
    pass


class GuardViolation(ProtocolError):
    pass


class StepOrderViolation(ProtocolError):
    pass


@dataclass(frozen=True)
class ExtensionManifest:
    extension_id: str = CPMM_EXTENSION_ID
    version: str = "1.0"
    supported_features: tuple[str, ...] = (
        "dynamic_pricing", "quality_negotiation", "micropayments", "sla_enforcement"
    )

    @property
    def cpmm_capable(self) -> bool:
        return self.extension_id == CPMM_EXTENSION_ID


LEGACY_MANIFEST = ExtensionManifest(extension_id="org.acnbp.base.v1", supported_features=())


@dataclass(frozen=True)
class Envelope:
    """Signed protocol message. performance_bond is reserved, always None."""

    session_id: str
    step: str
    sender: str
    payload: dict
    timestamp: int
    signature: str = ""
    performance_bond: None = None

    def body(self) -> dict:
        return {
            "session_id": self.session_id,
            "step": self.step,
            "sender": self.sender,
            "payload": self.payload,
            "timestamp": self.timestamp,
            "performance_bond": self.performance_bond,
        }

    def signed_by(self, key: SigningKey) -> "Envelope":
        return replace(self, signature=key.sign_b64(canonical_bytes(self.body())))

    def signature_valid(self, public_key_b64: str) -> bool:
        return verify(public_key_b64, self.signature, canonical_bytes(self.body()))


@dataclass
class EconomicContext:
    quality_request: dict[str, str] = field(default_factory=dict)
    max_price: Money | None = None
    payment_method: str = ""
    price_quote: Money | None = None
    proposal: EconomicProposal | None = None
    agreed_price: Money | None = None
    agreed_sla_hash: str = ""


@dataclass
class PaymentState:
    escrow_account_id: str = ""
    instruction: dict = field(default_factory=dict)
    h402_headers: H402PaymentHeaders | None = None
    verify_ok: bool | None = None
    penalty_fraction: float = 0.0
    failed_step: int | None = None
    final_amounts: dict[str, str] = field(default_factory=dict)


@dataclass
class NegotiationSession:
    session_id: str
    buyer: str
    seller: str
    buyer_manifest: ExtensionManifest = field(default_factory=ExtensionManifest)
    seller_manifest: ExtensionManifest = field(default_factory=ExtensionManifest)
    step: str | None = None  # last completed step
    checkpoint: str | None = None
    economic: EconomicContext = field(default_factory=EconomicContext)
    payment: PaymentState = field(default_factory=PaymentState)
    attestation: Any = None
    negotiation_rounds: int = 0
    message_log: list[Envelope] = field(default_factory=list)
    aborted: bool = False
    reputation_delta: dict[str, int] = field(default_factory=dict)

    @property
    def legacy_mode(self) -> bool:
        return not (self.buyer_manifest.cpmm_capable and self.seller_manifest.cpmm_capable)

    @property
    def terminal(self) -> bool:
        return self.aborted or self.step == "Audit"

    def expected_next_steps(self) -> tuple[str, ...]:
        if self.terminal:
            return ()
        if self.step is None:
            return ("Discover",)
        if self.step == "NegotiateResponse":
            if self.negotiation_rounds < MAX_NEGOTIATION_ROUNDS:
                return ("Bind", "NegotiateRequest")
            return ("Bind",)
        idx = STEP_INDEX[self.step]
        if idx + 1 < len(STEPS):
            return (STEPS[idx + 1],)
        return ()


_THRESHOLD_RE = re.compile(r"^\s*[<>]?=?\s*(.+)$")


def _strip_comparator(threshold: str) -> str:
    match = _THRESHOLD_RE.match(threshold)
    return match.group(1).strip() if match else threshold


class NegotiationEngine:
    """Hosts sessions, agent keys, the escrow rail and reputation scores."""

    def __init__(self, escrow: EscrowManager | None = None,
                 trust_root_public_b64: str = "", dims: DimensionRegistry | None = None):
        self.escrow = escrow or EscrowManager()
        self.trust_root_public_b64 = trust_root_public_b64
        self.dims = dims
        self.agent_keys: dict[str, SigningKey] = {}
        self.reputation: dict[str, int] = {}
        self.funding_limits: dict[str, Money] = {}
        self._clock = 0

    def register_agent(self, agent_id: str, key: SigningKey | None = None,
                       funding_limit: Money | None = None) -> SigningKey:
        key = key or SigningKey.from_seed(f"agent-{agent_id}")
        self.agent_keys[agent_id] = key
        self.reputation.setdefault(agent_id, 0)
        if funding_limit is not None:
            self.funding_limits[agent_id] = funding_limit
        return key

    def open_session(self, session_id: str, buyer: str, seller: str,
                     buyer_manifest: ExtensionManifest | None = None,
                     seller_manifest: ExtensionManifest | None = None) -> NegotiationSession:
        for agent in (buyer, seller):
            if agent not in self.agent_keys:
                self.register_agent(agent)
        return NegotiationSession(
            session_id, buyer, seller,
            buyer_manifest or ExtensionManifest(),
            seller_manifest or ExtensionManifest(),
        )

    def message(self, session: NegotiationSession, step: str, payload: dict | None = None) -> Envelope:
        """Build and sign the envelope for `step` from its designated sender."""
        sender = session.buyer if STEP_SENDER[step] == "buyer" else session.seller
        self._clock += 1
        env = Envelope(session.session_id, step, sender, payload or {}, self._clock)
        return env.signed_by(self.agent_keys[sender])

    # --- guards ---

    def check_guard(self, session: NegotiationSession, target_step: str) -> str | None:
        """Pure predicate over session state; returns a violation or None."""
        if target_step == "Bind":
            if session.legacy_mode:
                return None  # legacy sessions bind without economic payloads
            if not (session.buyer_manifest.cpmm_capable and session.seller_manifest.cpmm_capable):
                return "both manifests must support the CPMM extension"
            econ = session.economic
            if econ.proposal is None or not verify_commitment(econ.proposal):
                return "payment terms not agreed: no committed economic proposal"
            methods = set(econ.proposal.payment_terms.accepted_methods)
            if econ.payment_method and econ.payment_method not in methods:
                return "payment terms not agreed: no common payment method"
            if econ.price_quote is None:
                return "payment terms not agreed: no price quote"
            return None
        if target_step == "Commit":
            if session.legacy_mode:
                return None
            econ = session.economic
            price = econ.agreed_price
            if price is None:
                return "no agreed price to commit"
            if econ.max_price is not None and price.minor > econ.max_price.minor:
                return f"agreed price {price.format()} exceeds max price {econ.max_price.format()}"
            limit = self.funding_limits.get(session.buyer)
            if limit is not None and price.minor > limit.minor:
                return "buyer lacks escrow funding capability for the agreed price"
            return None
        if target_step == "Release":
            if session.legacy_mode:
                return None
            if session.payment.verify_ok is None:
                return "no Verify outcome recorded"
            return None
        return None

    # --- the protocol ---

    def advance(self, session: NegotiationSession, message: Envelope) -> NegotiationSession:
        """Apply one protocol message: order check, signature, guard, effects."""
        if session.terminal:
            raise StepOrderViolation("session is terminal")
        if message.session_id != session.session_id:
            raise ProtocolError("message addressed to a different session")
        expected = session.expected_next_steps()
        if message.step not in expected:
            raise StepOrderViolation(
                f"step {message.step} out of order; expected one of {expected}"
            )
        expected_sender = session.buyer if STEP_SENDER[message.step] == "buyer" else session.seller
        if message.sender != expected_sender:
            raise ProtocolError(f"step {message.step} must be sent by {expected_sender}")
        sender_key = self.agent_keys.get(message.sender)
        if sender_key is None or not message.signature_valid(sender_key.public_b64):
            raise ProtocolError("message signature invalid")
        violation = self.check_guard(session, message.step)
        if violation is not None:
            raise GuardViolation(f"{message.step} guard: {violation}")

        getattr(self, f"_apply_{message.step.lower()}")(session, message.payload)
        session.step = message.step
        if message.step in STABLE_STEPS:
            session.checkpoint = message.step
        session.message_log.append(message)
        return session

    # --- per-step effects ---

    def _apply_discover(self, session, payload):
        pass

    def _apply_prescreen(self, session, payload):
        pass

    def _apply_negotiaterequest(self, session, payload):
        session.negotiation_rounds += 1
        if session.legacy_mode:
            return
        econ = session.economic
        econ.quality_request = dict(payload.get("quality_request", {}))
        if "max_price" in payload:
            econ.max_price = Money(**payload["max_price"])
        econ.payment_method = payload.get("payment_method", "")

    def _apply_negotiateresponse(self, session, payload):
        if session.legacy_mode:
            return
        econ = session.economic
        if "price_quote" in payload:
            econ.price_quote = Money(**payload["price_quote"])
        if "economic_proposal" in payload:
            econ.proposal = EconomicProposal.from_record(payload["economic_proposal"])

    def _apply_bind(self, session, payload):
        if session.legacy_mode:
            return
        econ = session.economic
        accepted_hash = payload.get("accepted_proposal_hash", "")
        actual = econ.proposal.cryptographic_commitment.commitment_hash
        if accepted_hash != actual:
            raise GuardViolation("Bind guard: accepted proposal hash does not match the committed EP")
        econ.agreed_price = econ.price_quote
        econ.agreed_sla_hash = sla_hash(econ.proposal.service_level_agreement.rules())

    def _apply_commit(self, session, payload):
        if session.legacy_mode:
            return
        econ, pay = session.economic, session.payment
        price = econ.agreed_price
        acct = self.escrow.open(session.buyer, session.seller, price,
                                instruction_id=f"{session.session_id}-instr")
        self.escrow.fund(acct.account_id, price, timestamp=self._clock)
        pay.escrow_account_id = acct.account_id
        challenge = X402Challenge(
            amount=price,
            methods=(econ.payment_method or "H402",),
            payment_address=f"H402://escrow.local/invoice/{session.session_id}",
            sla_vector=tuple(
                (dim, _strip_comparator(threshold))
                for dim, threshold in sorted(econ.quality_request.items())
            ),
            refund_policy="automatic",
            economic_proposal_b64="ZXA=",
            negotiation_token=session.session_id,
        )
        ephemeral = SigningKey.from_seed(f"{session.session_id}-payment-{self._clock}")
        pay.h402_headers = build_h402_payment(
            challenge, ephemeral,
            challenge.sla_vector, econ.agreed_sla_hash,
            timestamp=self._clock, invoice=f"{session.session_id}-inv",
        )
        pay.instruction = {
            "instruction_id": f"{session.session_id}-instr",
            "amount": price.format(),
            "currency": price.currency,
            "escrow_account": acct.account_id,
        }

    def _apply_execute(self, session, payload):
        session.payment.final_amounts.setdefault("delivered", "true")

    def _apply_verify(self, session, payload):
        if session.legacy_mode:
            session.payment.verify_ok = True
            return
        attestation = payload.get("attestation")
        if attestation is None:
            raise ProtocolError("Verify message must attach a quality attestation")
        from .payloads import QualityAttestation

        att = QualityAttestation.from_record(attestation)
        session.attestation = att
        rules = session.economic.proposal.service_level_agreement.rules()
        result = verify_payment(
            session.payment.h402_headers, att, rules,
            session.economic.agreed_sla_hash, self.trust_root_public_b64, self.dims,
        )
        session.payment.verify_ok = result.ok
        session.payment.penalty_fraction = result.penalty_fraction
        session.payment.failed_step = result.failed_step

    def _apply_release(self, session, payload):
        if session.legacy_mode:
            return
        pay = session.payment
        if pay.verify_ok:
            self.escrow.apply(pay.escrow_account_id, EscrowEvent("verify_pass"), self._clock)
            pay.final_amounts["released"] = session.economic.agreed_price.format()
        elif pay.failed_step == 3 and 0.0 < pay.penalty_fraction < 1.0:
            self.escrow.apply(
                pay.escrow_account_id,
                EscrowEvent("verify_fail", pay.penalty_fraction),
                self._clock,
            )
            kept = session.economic.agreed_price.scaled(1.0 - pay.penalty_fraction)
            pay.final_amounts["released"] = kept.format()
            pay.final_amounts["refunded_fraction"] = f"{pay.penalty_fraction:g}"
        else:
            self.escrow.apply(pay.escrow_account_id, EscrowEvent("verify_fail", 1.0), self._clock)
            pay.final_amounts["released"] = Money(
                0, session.economic.agreed_price.currency, session.economic.agreed_price.precision
            ).format()

    def _apply_audit(self, session, payload):
        success = bool(session.payment.verify_ok)
        delta = 1 if success else -1
        for agent in (session.buyer, session.seller):
            session.reputation_delta[agent] = delta
            self.reputation[agent] = max(0, self.reputation.get(agent, 0) + delta)

    # --- rollback ---

    def rollback(self, session: NegotiationSession, reason: str) -> NegotiationSession:
        """Return to the latest stable checkpoint, refunding any open escrow."""
        if session.terminal:
            raise ProtocolError("cannot roll back a terminal session")
        acct_id = session.payment.escrow_account_id
        if acct_id:
            acct = self.escrow.get(acct_id)
            if not acct.terminal:
                self.escrow.apply(acct_id, EscrowEvent("timeout"), self._clock)
        target = session.checkpoint
        if target is None:
            session.aborted = True
        else:
            if STEP_INDEX.get(session.step or "", -1) >= STEP_INDEX["Commit"]:
                session.payment = PaymentState()
            session.step = target
        self._clock += 1
        session.message_log.append(
            Envelope(session.session_id, "Rollback", "engine",
                     {"reason": reason, "to": target or "Aborted"}, self._clock)
        )
        return session

    # --- audit trail ---

    def emit_audit(self, session: NegotiationSession) -> list[dict]:
        """Hash-chained trail over the message log plus financial outcome."""
        if session.step is None or STEP_INDEX.get(session.step, -1) < STEP_INDEX["Release"]:
            raise ProtocolError("audit trail available only from Release onward")
        trail: list[dict] = []
        prev_hash = "0" * 64
        for i, env in enumerate(session.message_log):
            entry = {
                "index": i,
                "step": env.step,
                "sender": env.sender,
                "timestamp": env.timestamp,
                "payload_hash": record_hash(env.payload),
                "signature": env.signature,
                "prev": prev_hash,
            }
            trail.append(entry)
            prev_hash = record_hash(entry)
        trail.append({
            "index": len(trail),
            "step": "Summary",
            "sender": "engine",
            "timestamp": self._clock,
            "payload_hash": record_hash({
                "final_amounts": session.payment.final_amounts,
                "penalty_fraction": session.payment.penalty_fraction,
                "reputation_delta": session.reputation_delta,
            }),
            "signature": "",
            "prev": prev_hash,
        })
        return trail

    @staticmethod
    def verify_audit_chain(trail: list[dict]) -> bool:
        prev_hash = "0" * 64
        for entry in trail:
            if entry["prev"] != prev_hash:
                return False
            prev_hash = record_hash(entry)
        return True


def export_audit_lines(trail: list[dict]) -> str:
    return "\n".join(canonical_bytes(entry).decode("utf-8") for entry in trail)
