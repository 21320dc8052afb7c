"""X402 / H402 payment header codecs and the five-step verification pipeline.

The wire format is line-oriented HTTP headers exactly as the 402 challenge
and payment header blocks appear on the wire. Codecs are two-layered:

* wire layer: strict tokenization of known header names in canonical order,
  rejecting duplicates, unknown X402-/CPMM-/H402- names and missing
  mandatory headers, while leaving values as opaque validated strings. The
  shipped header fixtures round-trip byte-identically through this layer.
* semantic layer: typed X402Challenge / H402PaymentHeaders values (fixed-point
  amounts, integer timestamps, real base64 keys and 64-byte signatures).

Payment verification runs exactly five ordered steps: signature, delivered
quality vs the quality request, SLA compliance, attestation validation, and
settlement-instruction emission; the lowest failing step is reported.
"""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field

from .economics import DimensionRegistry
from .keys import SIGNATURE_LEN, SigningKey, verify
from .money import Money, MoneyError, infer_amount
from .payloads import (
    ComplianceReport,
    QualityAttestation,
    SlaRule,
    evaluate_sla,
    parse_measured,
    sla_hash,
    verify_attestation,
)

CLOCK_SKEW_WINDOW = 300  # seconds, matching the payment_schedule timeout

X402_HEADER_ORDER = (
    "X402-Payment-Required",
    "X402-Payment-Address",
    "X402-Payment-Metadata",
    "CPMM-Economic-Proposal",
    "CPMM-Negotiation-Token",
)

H402_HEADER_ORDER = (
    "H402-Payment-Key",
    "H402-Payment-Amount",
    "H402-Payment-Currency",
    "H402-Payment-Invoice",
    "H402-Payment-Signature",
    "H402-Payment-Timestamp",
    "H402-Quality-Request",
    "H402-SLA-Acceptance",
)

# standard plus urlsafe base64 alphabets; tokens are carried opaquely
_B64_TOKEN_RE = re.compile(r"^[A-Za-z0-9+/_=-]+$")
_OPAQUE_TOKEN_RE = re.compile(r"^[!-~]+$")  # printable, no spaces
_CURRENCY_RE = re.compile(r"^[A-Z]{3,8}$")
_QUALITY_PAIR_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*):([^,\s]+)$")

KNOWN_METHODS = ("X402", "H402", "lightning")


class WireError(ValueError):
    pass


# --- generic header-block helpers -------------------------------------------


def headers_to_text(headers: list[tuple[str, str]]) -> str:
    return "\n".join(f"{name}: {value}" for name, value in headers)


def text_to_headers(block: str) -> list[tuple[str, str]]:
    headers = []
    for line in block.splitlines():
        if not line.strip():
            continue
        if ": " not in line:
            raise WireError(f"malformed header line {line!r}")
        name, value = line.split(": ", 1)
        headers.append((name, value))
    return headers


def _collect(headers, order: tuple[str, ...], prefixes: tuple[str, ...], kind: str) -> dict[str, str]:
    if isinstance(headers, str):
        headers = text_to_headers(headers)
    seen: dict[str, str] = {}
    for name, value in headers:
        if not any(name.startswith(p) for p in prefixes):
            continue  # foreign headers (Content-Type etc.) are ignored
        if name not in order:
            raise WireError(f"unknown {kind} header {name!r}")
        if name in seen:
            raise WireError(f"duplicated header {name!r}")
        seen[name] = value
    missing = [name for name in order if name not in seen]
    if missing:
        raise WireError(f"missing mandatory header {missing[0]!r}")
    return seen


def _parse_kv_tokens(value: str, header: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for token in value.split(" "):
        if not token:
            raise WireError(f"{header}: empty token")
        if "=" not in token:
            raise WireError(f"{header}: malformed token {token!r}")
        key, val = token.split("=", 1)
        if key in out:
            raise WireError(f"{header}: repeated key {key!r}")
        out[key] = val
    return out


def parse_quality_request(text: str, header: str = "quality request") -> tuple[tuple[str, str], ...]:
    """Parse 'latency:100ms,accuracy:95%' into ((dim, threshold), ...)."""
    pairs = []
    for part in text.split(","):
        match = _QUALITY_PAIR_RE.match(part)
        if not match:
            raise WireError(f"{header}: malformed quality pair {part!r}")
        parse_measured(match.group(2))  # threshold must carry a number
        pairs.append((match.group(1), match.group(2)))
    return tuple(pairs)


def format_quality_request(pairs) -> str:
    return ",".join(f"{dim}:{threshold}" for dim, threshold in pairs)


# --- X402 challenge -----------------------------------------------------------


@dataclass(frozen=True)
class X402Challenge:
    """Server-side 402 response payload carried in X402-/CPMM- headers."""

    amount: Money
    methods: tuple[str, ...]
    payment_address: str
    sla_vector: tuple[tuple[str, str], ...]
    refund_policy: str
    economic_proposal_b64: str
    negotiation_token: str

    def __post_init__(self):
        if self.amount.minor <= 0:
            raise WireError("challenge amount must be > 0")
        if not self.methods:
            raise WireError("method preference list must be non-empty")
        for method in self.methods:
            if method not in KNOWN_METHODS:
                raise WireError(f"unknown payment method {method!r}")
        if "://" not in self.payment_address:
            raise WireError(f"payment address {self.payment_address!r} lacks a URI scheme")
        if not _B64_TOKEN_RE.match(self.economic_proposal_b64):
            raise WireError("economic proposal is not a base64 token")
        if not _OPAQUE_TOKEN_RE.match(self.negotiation_token):
            raise WireError("negotiation token contains unencodable characters")

    @property
    def invoice_hint(self) -> str:
        """Trailing path segment of the payment address (the invoice id)."""
        return self.payment_address.rstrip("/").rsplit("/", 1)[-1]

    def decode_proposal(self):
        """Decode the embedded EP record; padding is repaired if trimmed."""
        from .payloads import EconomicProposal
        import json

        text = self.economic_proposal_b64
        padded = text + "=" * (-len(text) % 4)
        try:
            raw = base64.b64decode(padded.replace("-", "+").replace("_", "/"), validate=True)
            return EconomicProposal.from_record(json.loads(raw))
        except Exception as exc:
            raise WireError(f"CPMM-Economic-Proposal: bad base64 payload: {exc}") from exc


def encode_402(challenge: X402Challenge) -> list[tuple[str, str]]:
    """Emit the five canonical-order X402-/CPMM- headers for a challenge."""
    required = (
        f"amount={challenge.amount.format()} "
        f"currency={challenge.amount.currency} "
        f"method={','.join(challenge.methods)}"
    )
    metadata = f"refund_policy={challenge.refund_policy}"
    if challenge.sla_vector:
        metadata = f"sla_vector={format_quality_request(challenge.sla_vector)} " + metadata
    return [
        ("X402-Payment-Required", required),
        ("X402-Payment-Address", challenge.payment_address),
        ("X402-Payment-Metadata", metadata),
        ("CPMM-Economic-Proposal", challenge.economic_proposal_b64),
        ("CPMM-Negotiation-Token", challenge.negotiation_token),
    ]


def parse_402(headers) -> X402Challenge:
    """Strict parse of a 402 header block into a challenge."""
    raw = _collect(headers, X402_HEADER_ORDER, ("X402-", "CPMM-"), "X402")

    required = _parse_kv_tokens(raw["X402-Payment-Required"], "X402-Payment-Required")
    for key in ("amount", "currency", "method"):
        if key not in required:
            raise WireError(f"X402-Payment-Required: missing {key}=")
    if not _CURRENCY_RE.match(required["currency"]):
        raise WireError(f"X402-Payment-Required: unknown currency {required['currency']!r}")
    try:
        amount = infer_amount(required["amount"], required["currency"])
    except MoneyError as exc:
        raise WireError(f"X402-Payment-Required: {exc}") from exc

    metadata = _parse_kv_tokens(raw["X402-Payment-Metadata"], "X402-Payment-Metadata")
    unknown_meta = set(metadata) - {"sla_vector", "refund_policy"}
    if unknown_meta:
        raise WireError(f"X402-Payment-Metadata: unknown keys {sorted(unknown_meta)}")
    if "refund_policy" not in metadata:
        raise WireError("X402-Payment-Metadata: missing refund_policy=")
    sla_vector = ()
    if "sla_vector" in metadata:
        sla_vector = parse_quality_request(metadata["sla_vector"], "X402-Payment-Metadata")

    return X402Challenge(
        amount=amount,
        methods=tuple(required["method"].split(",")),
        payment_address=raw["X402-Payment-Address"],
        sla_vector=sla_vector,
        refund_policy=metadata["refund_policy"],
        economic_proposal_b64=raw["CPMM-Economic-Proposal"],
        negotiation_token=raw["CPMM-Negotiation-Token"],
    )


# --- H402 payment -------------------------------------------------------------


@dataclass(frozen=True)
class H402Wire:
    """Raw H402 header block: validated names, opaque values."""

    values: tuple[tuple[str, str], ...]  # in canonical order

    @classmethod
    def parse(cls, headers) -> "H402Wire":
        raw = _collect(headers, H402_HEADER_ORDER, ("H402-",), "H402")
        return cls(tuple((name, raw[name]) for name in H402_HEADER_ORDER))

    def encode(self) -> list[tuple[str, str]]:
        return list(self.values)

    def get(self, name: str) -> str:
        for key, value in self.values:
            if key == name:
                return value
        raise KeyError(name)


@dataclass(frozen=True)
class H402PaymentHeaders:
    """Typed H402 payment commitment."""

    payment_key: str  # base64 Ed25519 public key
    amount: Money
    invoice: str
    signature: str  # base64, exactly 64 bytes decoded
    timestamp: int  # unix seconds
    quality_request: tuple[tuple[str, str], ...]
    sla_acceptance: str  # sha256 hex of the accepted SLA

    def __post_init__(self):
        try:
            key = base64.b64decode(self.payment_key, validate=True)
            sig = base64.b64decode(self.signature, validate=True)
        except Exception as exc:
            raise WireError(f"bad base64 in payment key/signature: {exc}") from exc
        if len(sig) != SIGNATURE_LEN:
            raise WireError(f"signature must be exactly {SIGNATURE_LEN} bytes, got {len(sig)}")
        if len(key) != 32:
            raise WireError(f"payment key must be 32 bytes, got {len(key)}")
        if not re.match(r"^[0-9a-f]{64}$", self.sla_acceptance):
            raise WireError("sla_acceptance must be a sha256 hex digest")

    def signing_payload(self) -> bytes:
        return h402_signing_payload(
            self.amount, self.invoice, self.timestamp, self.quality_request, self.sla_acceptance
        )

    def to_wire(self) -> H402Wire:
        return H402Wire((
            ("H402-Payment-Key", self.payment_key),
            ("H402-Payment-Amount", self.amount.format()),
            ("H402-Payment-Currency", self.amount.currency),
            ("H402-Payment-Invoice", self.invoice),
            ("H402-Payment-Signature", self.signature),
            ("H402-Payment-Timestamp", str(self.timestamp)),
            ("H402-Quality-Request", format_quality_request(self.quality_request)),
            ("H402-SLA-Acceptance", self.sla_acceptance),
        ))

    @classmethod
    def from_wire(cls, wire: H402Wire) -> "H402PaymentHeaders":
        timestamp_text = wire.get("H402-Payment-Timestamp")
        if not re.match(r"^\d+$", timestamp_text):
            raise WireError(f"H402-Payment-Timestamp: not an integer: {timestamp_text!r}")
        try:
            amount = infer_amount(wire.get("H402-Payment-Amount"), wire.get("H402-Payment-Currency"))
        except MoneyError as exc:
            raise WireError(f"H402-Payment-Amount: {exc}") from exc
        return cls(
            payment_key=wire.get("H402-Payment-Key"),
            amount=amount,
            invoice=wire.get("H402-Payment-Invoice"),
            signature=wire.get("H402-Payment-Signature"),
            timestamp=int(timestamp_text),
            quality_request=parse_quality_request(
                wire.get("H402-Quality-Request"), "H402-Quality-Request"
            ),
            sla_acceptance=wire.get("H402-SLA-Acceptance"),
        )


def h402_signing_payload(amount: Money, invoice: str, timestamp: int, quality_request, sla_acceptance: str) -> bytes:
    """Canonical byte string the H402 signature covers.

    Binding quality_request and sla_acceptance into the signed bytes is what
    makes the payment atomic with respect to the agreed service quality.
    """
    parts = (
        "h402", "v1",
        amount.format(), amount.currency, invoice, str(timestamp),
        format_quality_request(quality_request), sla_acceptance,
    )
    return "|".join(parts).encode("utf-8")


class SeenKeyCache:
    """Rejects ephemeral-key reuse across payments."""

    def __init__(self):
        self._seen: set[str] = set()

    def check_fresh(self, public_b64: str) -> None:
        if public_b64 in self._seen:
            raise WireError("ephemeral payment key reuse rejected")
        self._seen.add(public_b64)


def build_h402_payment(
    challenge: X402Challenge,
    ephemeral_key: SigningKey,
    quality_request,
    sla_acceptance: str,
    timestamp: int,
    invoice: str | None = None,
    now: int | None = None,
    key_cache: SeenKeyCache | None = None,
) -> H402PaymentHeaders:
    """Sign a payment commitment answering a 402 challenge.

    Each payment must use a fresh ephemeral key (enforced through the
    key cache) and a timestamp within the clock-skew window of `now`.
    """
    if key_cache is not None:
        key_cache.check_fresh(ephemeral_key.public_b64)
    if now is not None and abs(timestamp - now) > CLOCK_SKEW_WINDOW:
        raise WireError(f"timestamp outside ±{CLOCK_SKEW_WINDOW}s clock-skew window")
    invoice = invoice if invoice is not None else challenge.invoice_hint
    quality_request = tuple(quality_request)
    payload = h402_signing_payload(
        challenge.amount, invoice, timestamp, quality_request, sla_acceptance
    )
    return H402PaymentHeaders(
        payment_key=ephemeral_key.public_b64,
        amount=challenge.amount,
        invoice=invoice,
        signature=ephemeral_key.sign_b64(payload),
        timestamp=timestamp,
        quality_request=quality_request,
        sla_acceptance=sla_acceptance,
    )


# --- five-step verification ---------------------------------------------------


@dataclass(frozen=True)
class SettlementInstruction:
    invoice: str
    amount: Money
    payee: str = ""


@dataclass(frozen=True)
class VerificationResult:
    ok: bool
    failed_step: int | None = None
    reason: str | None = None
    penalty_fraction: float = 0.0
    compliance: ComplianceReport | None = None
    settlement: SettlementInstruction | None = None

    @staticmethod
    def fail(step: int, reason: str, penalty: float = 0.0, compliance=None) -> "VerificationResult":
        return VerificationResult(False, step, reason, penalty, compliance)


_LOWER_IS_BETTER_UNITS = {"ms", "s"}


def _meets_threshold(dimension: str, measured: str, threshold: str, dims: DimensionRegistry | None) -> bool:
    got, _unit = parse_measured(measured)
    want, unit = parse_measured(threshold)
    if dims is not None:
        higher_better = dims.by_name(dimension).higher_is_better
    else:
        higher_better = unit not in _LOWER_IS_BETTER_UNITS
    return got >= want if higher_better else got <= want


def verify_payment(
    headers: H402PaymentHeaders,
    att: QualityAttestation,
    sla_rules: list[SlaRule],
    agreed_sla_hash: str,
    trust_root_public_b64: str,
    dims: DimensionRegistry | None = None,
    now: int | None = None,
    payee: str = "",
) -> VerificationResult:
    """Run the five ordered verification steps; report the first failure.

    1. signature verification (plus clock-skew when `now` is given)
    2. delivered quality vs the quality request in the payment headers
    3. SLA compliance via evaluate_sla against the agreed rule set
    4. attestation validation (hash, signature, chain to the trust root)
    5. settlement-instruction emission
    """
    # step 1: signature
    if now is not None and abs(headers.timestamp - now) > CLOCK_SKEW_WINDOW:
        return VerificationResult.fail(1, "payment timestamp outside clock-skew window")
    if not verify(headers.payment_key, headers.signature, headers.signing_payload()):
        return VerificationResult.fail(1, "payment signature invalid")

    # step 2: delivered quality vs quality_request
    measured = {m.dimension: m.measured_value for m in att.quality_measurements}
    for dimension, threshold in headers.quality_request:
        if dimension not in measured:
            return VerificationResult.fail(2, f"no measurement for requested dimension {dimension!r}")
        if not _meets_threshold(dimension, measured[dimension], threshold, dims):
            return VerificationResult.fail(
                2, f"{dimension} measured {measured[dimension]} misses request {threshold}"
            )

    # step 3: SLA compliance
    if headers.sla_acceptance != agreed_sla_hash or sla_hash(sla_rules) != agreed_sla_hash:
        return VerificationResult.fail(3, "accepted SLA hash does not match agreed terms")
    report = evaluate_sla(sla_rules, att)
    if not report.compliant:
        return VerificationResult.fail(
            3,
            f"SLA violated on {', '.join(report.violated_rules)}",
            report.penalty_fraction,
            report,
        )

    # step 4: attestation validation
    if not verify_attestation(att, trust_root_public_b64):
        return VerificationResult.fail(4, "attestation hash/signature/chain invalid", compliance=report)

    # step 5: settlement instruction
    settlement = SettlementInstruction(headers.invoice, headers.amount, payee)
    return VerificationResult(True, compliance=report, settlement=settlement)


class SpentRegistry:
    """Double-spend guard: one settlement per (payment_key, invoice)."""

    def __init__(self):
        self._spent: set[tuple[str, str]] = set()

    def spend(self, payment_key: str, invoice: str) -> None:
        token = (payment_key, invoice)
        if token in self._spent:
            raise WireError("double-spend rejected: payment key already used for this invoice")
        self._spent.add(token)
