"""Exact-rational helpers shared by the model, engine and billing code."""

from __future__ import annotations

from decimal import Decimal
from fractions import Fraction
from typing import Union

Number = Union[int, Fraction]

MICROS = 1_000_000


def to_fraction(value, field: str = "value") -> Fraction:
    """Coerce an int, Fraction, decimal string or "p/q" string to a Fraction.

    Floats are accepted only through their shortest repr, so ``2.35`` becomes
    exactly 47/20 rather than the nearest binary double.
    """
    if isinstance(value, bool):
        raise TypeError(f"{field}: expected a number, got bool")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except ValueError:
            raise ValueError(f"{field}: not a rational number: {value!r}") from None
    raise TypeError(f"{field}: expected a number, got {type(value).__name__}")


def quantize_micros(x: float) -> Fraction:
    """Round a float draw to whole microseconds (keeps denominators small)."""
    return Fraction(round(x * MICROS), MICROS)


def _terminates(den: int) -> bool:
    for p in (2, 5):
        while den % p == 0:
            den //= p
    return den == 1


def format_rational(x: Number) -> str:
    """Lossless text form: plain decimal when it terminates, else ``p/q``."""
    x = Fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    if _terminates(x.denominator):
        d = Decimal(x.numerator) / Decimal(x.denominator)
        return format(d.normalize(), "f")
    return f"{x.numerator}/{x.denominator}"


def json_number(x: Number):
    """JSON value for a rational that reads back exactly: an int, a float whose
    repr is the exact value, or failing both the ``p/q`` string."""
    x = Fraction(x)
    if x.denominator == 1:
        return x.numerator
    f = float(x)
    if Fraction(repr(f)) == x:
        return f
    return format_rational(x)


def fixed(x: Number, places: int = 6) -> str:
    """Presentation form with a fixed number of decimals ('.' separator).

    Rounds half-to-even on the exact value; nothing is rounded before this.
    """
    scaled = round(Fraction(x) * 10**places)
    return str(Decimal(scaled).scaleb(-places))
