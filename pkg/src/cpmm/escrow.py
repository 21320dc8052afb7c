"""Escrow state machine, double-entry ledger and refund capability tokens.

Funds move payer -> escrow -> payee/payer through an append-only ledger of
transfer entries; every escrow transition emits its entries atomically with
the state change, so conservation (payer debits = payee credits + payer
refunds) holds after any event sequence. Escrow accounts are serialized
per account; the ledger append is a single linearization point.

Refund capability tokens are signed by the escrow authority at funding time
and bind the account id to an allowed condition set; exercising one is
idempotent and requires evidence matching the claimed condition.
"""

from __future__ import annotations

import base64
import itertools
import json
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_EVEN, Decimal

from .canonical import canonical_bytes
from .keys import SigningKey, verify
from .money import Money


class EscrowError(ValueError):
    pass


class IllegalTransition(EscrowError):
    pass


STATES = ("Created", "Funded", "Released", "Refunded", "PartiallyRefunded")
TERMINAL_STATES = ("Released", "Refunded", "PartiallyRefunded")
REASONS = ("fund", "release", "refund_full", "refund_partial")


@dataclass(frozen=True)
class LedgerEntry:
    entry_id: str
    src: str
    dst: str
    amount: Money
    reason: str
    timestamp: int

    def to_record(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "from": self.src,
            "to": self.dst,
            "amount": self.amount.format(),
            "currency": self.amount.currency,
            "precision": self.amount.precision,
            "reason": self.reason,
            "timestamp": self.timestamp,
        }


class Ledger:
    """Append-only transfer log with running balances."""

    def __init__(self):
        self._entries: list[LedgerEntry] = []
        self._balances: dict[str, int] = {}
        self._counter = itertools.count(1)

    def append(self, src: str, dst: str, amount: Money, reason: str, timestamp: int = 0) -> LedgerEntry:
        if reason not in REASONS:
            raise EscrowError(f"unknown ledger reason {reason!r}")
        if amount.minor < 0:
            raise EscrowError("ledger amounts must be non-negative")
        entry = LedgerEntry(f"le-{next(self._counter):06d}", src, dst, amount, reason, timestamp)
        self._entries.append(entry)
        self._balances[src] = self._balances.get(src, 0) - amount.minor
        self._balances[dst] = self._balances.get(dst, 0) + amount.minor
        return entry

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        return tuple(self._entries)

    def balance(self, entity: str) -> int:
        """Net minor units received by an entity (negative = net payer)."""
        return self._balances.get(entity, 0)

    def global_sum(self) -> int:
        """Sum of all net balances; zero by double-entry construction."""
        return sum(self._balances.values())

    def export_lines(self) -> str:
        return "\n".join(
            canonical_bytes(e.to_record()).decode("utf-8") for e in self._entries
        )


@dataclass(frozen=True)
class EscrowAccount:
    account_id: str
    state: str
    held: Money
    payer: str
    payee: str
    deadline: int  # unix seconds
    instruction_id: str = ""

    def __post_init__(self):
        if self.state not in STATES:
            raise EscrowError(f"unknown escrow state {self.state!r}")
        if self.held.minor < 0:
            raise EscrowError("held amount must be >= 0")
        if self.state in TERMINAL_STATES and self.held.minor != 0:
            raise EscrowError("terminal escrow accounts must hold zero")

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


def open_escrow(account_id: str, payer: str, payee: str, amount: Money, deadline: int,
                instruction_id: str = "") -> EscrowAccount:
    if amount.minor <= 0:
        raise EscrowError("escrow amount must be > 0")
    return EscrowAccount(account_id, "Created", Money(0, amount.currency, amount.precision),
                         payer, payee, deadline, instruction_id)


def _split_partial(held: Money, fraction: float) -> tuple[Money, Money]:
    """Refund split: payer share rounded half-even, payee gets the remainder."""
    payer_minor = int(
        (Decimal(str(fraction)) * held.minor).to_integral_value(ROUND_HALF_EVEN)
    )
    payer_minor = min(max(payer_minor, 0), held.minor)
    payer_share = Money(payer_minor, held.currency, held.precision)
    payee_share = Money(held.minor - payer_minor, held.currency, held.precision)
    return payer_share, payee_share


@dataclass(frozen=True)
class EscrowEvent:
    kind: str  # fund | verify_pass | verify_fail | timeout
    penalty_fraction: float = 0.0
    amount: Money | None = None  # for fund

    def __post_init__(self):
        if self.kind not in ("fund", "verify_pass", "verify_fail", "timeout"):
            raise EscrowError(f"unknown escrow event {self.kind!r}")
        if self.kind == "verify_fail" and not (0.0 < self.penalty_fraction <= 1.0):
            raise EscrowError("verify_fail needs a penalty fraction in (0, 1]")


def escrow_transition(acct: EscrowAccount, event: EscrowEvent, ledger: Ledger,
                      timestamp: int = 0) -> tuple[EscrowAccount, tuple[LedgerEntry, ...]]:
    """Apply one event; emits the ledger entries atomically with the new state.

    fund: Created -> Funded (payer money moves into the escrow account).
    verify_pass: Funded -> Released, full amount to payee.
    timeout: Funded -> Refunded, full amount back to payer.
    verify_fail(f): f = 1 -> Refunded; 0 < f < 1 -> PartiallyRefunded with
    the payer share rounded half-even and the payee getting the remainder.
    Anything else is an illegal transition and leaves the account unchanged.
    """
    esc = acct.account_id
    if event.kind == "fund":
        if acct.state != "Created":
            raise IllegalTransition(f"fund only applies to Created, not {acct.state}")
        amount = event.amount
        if amount is None or amount.minor <= 0:
            raise EscrowError("fund requires a positive amount")
        entry = ledger.append(acct.payer, esc, amount, "fund", timestamp)
        return replace(acct, state="Funded", held=amount), (entry,)

    if acct.state != "Funded":
        raise IllegalTransition(f"{event.kind} only applies to Funded, not {acct.state}")
    zero = Money(0, acct.held.currency, acct.held.precision)

    if event.kind == "verify_pass":
        entry = ledger.append(esc, acct.payee, acct.held, "release", timestamp)
        return replace(acct, state="Released", held=zero), (entry,)

    if event.kind == "timeout":
        entry = ledger.append(esc, acct.payer, acct.held, "refund_full", timestamp)
        return replace(acct, state="Refunded", held=zero), (entry,)

    # verify_fail
    if event.penalty_fraction >= 1.0:
        entry = ledger.append(esc, acct.payer, acct.held, "refund_full", timestamp)
        return replace(acct, state="Refunded", held=zero), (entry,)
    payer_share, payee_share = _split_partial(acct.held, event.penalty_fraction)
    entries = (
        ledger.append(esc, acct.payer, payer_share, "refund_partial", timestamp),
        ledger.append(esc, acct.payee, payee_share, "release", timestamp),
    )
    return replace(acct, state="PartiallyRefunded", held=zero), entries


def check_conservation(ledger: Ledger, account_id: str) -> bool:
    """Escrow inflows equal outflows plus anything still held (balance >= 0)."""
    return ledger.balance(account_id) >= 0


# --- refund capability tokens ---------------------------------------------------

REFUND_CONDITIONS = ("service_failure", "sla_violation", "quality_degradation")


@dataclass(frozen=True)
class RefundEvidence:
    """What the compliance/verification pipeline established about a delivery."""

    timeout: bool = False
    failed_step: int | None = None
    penalty_fraction: float = 0.0


def _evidence_supports(condition: str, evidence: RefundEvidence) -> bool:
    if condition == "service_failure":
        return evidence.timeout or evidence.failed_step in (1, 4)
    if condition == "sla_violation":
        return evidence.failed_step == 3 and evidence.penalty_fraction > 0.0
    if condition == "quality_degradation":
        return evidence.failed_step == 2 or (
            evidence.failed_step == 3 and 0.0 < evidence.penalty_fraction < 1.0
        )
    return False


@dataclass(frozen=True)
class RefundOutcome:
    accepted: bool
    reason: str
    account_state: str = ""
    replayed: bool = False


class EscrowManager:
    """Holds escrow accounts, the ledger, and the refund-token authority key.

    All events for one account apply in a single total order; the manager is
    the per-process linearization point for desk-scale runs.
    """

    def __init__(self, authority_key: SigningKey | None = None):
        self.ledger = Ledger()
        self.authority_key = authority_key or SigningKey.from_seed("escrow-authority")
        self._accounts: dict[str, EscrowAccount] = {}
        self._exercised: dict[tuple[str, str], RefundOutcome] = {}
        self._counter = itertools.count(1)

    def open(self, payer: str, payee: str, amount: Money, deadline: int = 0,
             instruction_id: str = "") -> EscrowAccount:
        account_id = f"esc-{next(self._counter):06d}"
        acct = open_escrow(account_id, payer, payee, amount, deadline, instruction_id)
        self._accounts[account_id] = acct
        return acct

    def get(self, account_id: str) -> EscrowAccount:
        if account_id not in self._accounts:
            raise EscrowError(f"unknown escrow account {account_id!r}")
        return self._accounts[account_id]

    def apply(self, account_id: str, event: EscrowEvent, timestamp: int = 0) -> EscrowAccount:
        acct, _entries = escrow_transition(self.get(account_id), event, self.ledger, timestamp)
        self._accounts[account_id] = acct
        return acct

    def fund(self, account_id: str, amount: Money, timestamp: int = 0) -> EscrowAccount:
        return self.apply(account_id, EscrowEvent("fund", amount=amount), timestamp)

    # -- refund capability tokens --

    def issue_refund_token(self, account_id: str, conditions: tuple[str, ...],
                           issued_at: int = 0) -> str:
        for condition in conditions:
            if condition not in REFUND_CONDITIONS:
                raise EscrowError(f"unknown refund condition {condition!r}")
        self.get(account_id)
        body = {
            "account_id": account_id,
            "conditions": sorted(conditions),
            "issued_at": issued_at,
        }
        payload = canonical_bytes(body)
        token = {
            "body": body,
            "signature": self.authority_key.sign_b64(payload),
        }
        return base64.b64encode(canonical_bytes(token)).decode("ascii")

    def exercise_refund_capability(self, token: str, condition: str,
                                   evidence: RefundEvidence, timestamp: int = 0) -> RefundOutcome:
        """Refund iff the token allows `condition` and the evidence supports it.

        Idempotent: replaying an exercised (token, condition) returns the
        original outcome without new ledger entries.
        """
        try:
            decoded = json.loads(base64.b64decode(token, validate=True))
            body, signature = decoded["body"], decoded["signature"]
        except Exception:
            return RefundOutcome(False, "undecodable token")
        if not verify(self.authority_key.public_b64, signature, canonical_bytes(body)):
            return RefundOutcome(False, "token signature invalid (forged or foreign authority)")
        memo_key = (signature, condition)
        if memo_key in self._exercised:
            return replace(self._exercised[memo_key], replayed=True)
        if condition not in body["conditions"]:
            outcome = RefundOutcome(False, f"condition {condition!r} outside token scope")
        elif not _evidence_supports(condition, evidence):
            outcome = RefundOutcome(False, f"evidence does not establish {condition!r}")
        else:
            acct = self.get(body["account_id"])
            if acct.state != "Funded":
                outcome = RefundOutcome(False, f"account in state {acct.state}", acct.state)
            else:
                if condition == "service_failure" or evidence.penalty_fraction >= 1.0:
                    event = EscrowEvent("timeout") if evidence.timeout else EscrowEvent(
                        "verify_fail", penalty_fraction=1.0
                    )
                else:
                    fraction = evidence.penalty_fraction if evidence.penalty_fraction > 0 else 1.0
                    event = EscrowEvent("verify_fail", penalty_fraction=fraction)
                acct = self.apply(body["account_id"], event, timestamp)
                outcome = RefundOutcome(True, f"refunded under {condition}", acct.state)
        self._exercised[memo_key] = outcome
        return outcome
