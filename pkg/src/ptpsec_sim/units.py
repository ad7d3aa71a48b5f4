"""Integer-nanosecond time helpers.

All simulation quantities are integer nanoseconds. Scenario files use
microseconds and seconds, possibly with fractional digits, so conversion goes
through ``Decimal`` to keep values such as ``1.25`` exact.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation

NS_PER_US = 1_000
NS_PER_S = 1_000_000_000


def _scaled(value: int | float | str, factor: int, unit: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"expected a number of {unit}, got {value!r}")
    try:
        scaled = Decimal(str(value)) * factor
    except InvalidOperation as exc:
        raise ValueError(f"expected a number of {unit}, got {value!r}") from exc
    if scaled != scaled.to_integral_value():
        raise ValueError(f"{value!r} {unit} is not a whole number of nanoseconds")
    return int(scaled)


def us(value: int | float | str) -> int:
    """Convert microseconds to integer nanoseconds."""
    return _scaled(value, NS_PER_US, "us")


def seconds(value: int | float | str) -> int:
    """Convert seconds to integer nanoseconds."""
    return _scaled(value, NS_PER_S, "s")


def _fixed(ns: int, scale: int, digits: int) -> str:
    sign = "-" if ns < 0 else ""
    whole, frac = divmod(abs(ns), scale)
    return f"{sign}{whole}.{frac:0{digits}d}"


def fmt_us(ns: int) -> str:
    """Format nanoseconds as microseconds with exactly 3 fractional digits."""
    return _fixed(ns, NS_PER_US, 3)


def fmt_s(ns: int) -> str:
    """Format nanoseconds as seconds with exactly 9 fractional digits."""
    return _fixed(ns, NS_PER_S, 9)


def to_us_number(ns: int) -> int | float:
    """JSON-friendly microsecond value; integral values stay ints."""
    whole, frac = divmod(ns, NS_PER_US)
    return whole if frac == 0 else ns / NS_PER_US


def to_s_number(ns: int) -> int | float:
    whole, frac = divmod(ns, NS_PER_S)
    return whole if frac == 0 else ns / NS_PER_S


def half(value: int) -> int:
    """Halve an integer, rounding toward zero."""
    return -((-value) // 2) if value < 0 else value // 2
