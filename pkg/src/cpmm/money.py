"""Fixed-point money values.

All monetary amounts are integer counts of minor units at a per-currency
precision (number of decimal fraction digits). Arithmetic stays in ints so
serialized amounts, hashes and ledger sums are exact across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation


class MoneyError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Money:
    """An amount of `minor` units of `currency` at `precision` fraction digits."""

    minor: int
    currency: str = "USD"
    precision: int = 2

    def __post_init__(self):
        if self.precision < 0:
            raise MoneyError(f"precision must be >= 0, got {self.precision}")
        if not self.currency:
            raise MoneyError("currency code required")

    @property
    def unit(self) -> Decimal:
        return Decimal(1).scaleb(-self.precision)

    def as_decimal(self) -> Decimal:
        return Decimal(self.minor).scaleb(-self.precision)

    def as_float(self) -> float:
        return float(self.as_decimal())

    def format(self, explicit_sign: bool = False) -> str:
        """Decimal string with exactly `precision` fraction digits."""
        text = f"{self.as_decimal():.{self.precision}f}" if self.precision else str(self.minor)
        if explicit_sign and self.minor >= 0:
            text = "+" + text
        return text

    def check_same_unit(self, other: "Money") -> None:
        if self.currency != other.currency or self.precision != other.precision:
            raise MoneyError(
                f"currency/precision mismatch: {self.currency}/{self.precision} "
                f"vs {other.currency}/{other.precision}"
            )

    def __add__(self, other: "Money") -> "Money":
        self.check_same_unit(other)
        return Money(self.minor + other.minor, self.currency, self.precision)

    def __sub__(self, other: "Money") -> "Money":
        self.check_same_unit(other)
        return Money(self.minor - other.minor, self.currency, self.precision)

    def scaled(self, factor: float | Decimal) -> "Money":
        """Scale by a factor, rounding half-even to the currency precision."""
        raw = self.as_decimal() * Decimal(str(factor))
        return Money(int(raw.scaleb(self.precision).to_integral_value(ROUND_HALF_EVEN)),
                     self.currency, self.precision)

    def is_zero(self) -> bool:
        return self.minor == 0


def parse_amount(text: str, currency: str, precision: int) -> Money:
    """Parse a decimal string into Money; rejects more fraction digits than precision."""
    try:
        dec = Decimal(text)
    except InvalidOperation as exc:
        raise MoneyError(f"bad decimal amount {text!r}") from exc
    if dec != dec.quantize(Decimal(1).scaleb(-precision)):
        raise MoneyError(f"amount {text!r} has more than {precision} fraction digits")
    return Money(int(dec.scaleb(precision)), currency, precision)


def infer_amount(text: str, currency: str) -> Money:
    """Parse a decimal string, taking precision from the digits present."""
    try:
        dec = Decimal(text)
    except InvalidOperation as exc:
        raise MoneyError(f"bad decimal amount {text!r}") from exc
    exponent = dec.as_tuple().exponent
    if not isinstance(exponent, int):
        raise MoneyError(f"non-finite amount {text!r}")
    precision = max(0, -exponent)
    return Money(int(dec.scaleb(precision)), currency, precision)


def from_float(value: float, currency: str = "USD", precision: int = 2) -> Money:
    raw = Decimal(str(value)).scaleb(precision).to_integral_value(ROUND_HALF_EVEN)
    return Money(int(raw), currency, precision)
