"""Unit-bearing scalars for scenario documents.

Every dimensional value in a scenario document is a string such as
``"25.1 MHz"`` or ``"1.27 us"``. Conversion to SI happens here and nowhere
else. Frequencies of kind ``ANGULAR`` given in Hz-type units are ordinary
frequencies (value = Omega / 2pi) unless the caller passes ``angular=True``.
"""

from __future__ import annotations

import enum
import math
import re

TWO_PI = 2.0 * math.pi


class UnitError(ValueError):
    pass


class UnitMissingError(UnitError):
    pass


class Kind(str, enum.Enum):
    TIME = "time"
    LENGTH = "length"
    ANGULAR = "angular_frequency"
    RATE = "rate"
    SPEED = "speed"
    DIMENSIONLESS = "dimensionless"
    PROBABILITY = "probability"


_PREFIX = {
    "": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
    "m": 1e-3, "u": 1e-6, "µ": 1e-6, "μ": 1e-6, "n": 1e-9, "p": 1e-12, "c": 1e-2,
}

_NUMBER = r"[+-]?(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf)"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*(\S*)\s*$")

# canonical unit written by format_quantity for each kind
CANONICAL_UNIT = {
    Kind.TIME: "s",
    Kind.LENGTH: "m",
    Kind.ANGULAR: "rad/s",
    Kind.RATE: "1/s",
    Kind.SPEED: "m/s",
}


def _split(text: str) -> tuple[float, str]:
    cleaned = text.replace("−", "-").strip()
    m = _QUANTITY.match(cleaned)
    if not m:
        raise UnitError(f"cannot parse quantity {text!r}")
    return float(m.group(1)), m.group(2)


def _prefixed(unit: str, base: str) -> float | None:
    if unit.endswith(base):
        pre = unit[: len(unit) - len(base)]
        if pre in _PREFIX:
            return _PREFIX[pre]
    return None


def _scale(unit: str, kind: Kind, angular: bool) -> float:
    if kind is Kind.TIME:
        f = _prefixed(unit, "s")
        if f is not None:
            return f
    elif kind is Kind.LENGTH:
        f = _prefixed(unit, "m")
        if f is not None:
            return f
    elif kind is Kind.SPEED:
        if unit.endswith("/s"):
            f = _prefixed(unit[:-2], "m")
            if f is not None:
                return f
    elif kind is Kind.ANGULAR:
        f = _prefixed(unit, "Hz")
        if f is not None:
            return f if angular else f * TWO_PI
        if unit.endswith("rad/s"):
            f = _prefixed(unit[:-2], "rad")
            if f is not None:
                return f
    elif kind is Kind.RATE:
        f = _prefixed(unit, "Hz")
        if f is not None:
            return f
        for base in ("1/", "/"):
            if unit.startswith(base):
                f = _prefixed(unit[len(base):], "s")
                if f is not None:
                    return 1.0 / f
        if unit.endswith("^-1"):
            f = _prefixed(unit[:-3], "s")
            if f is not None:
                return 1.0 / f
    raise UnitError(f"unit {unit!r} is not valid for a {kind.value} quantity")


def parse_quantity(value, kind: Kind, angular: bool = False) -> float:
    """Convert a document value to SI (rad/s for angular frequencies)."""
    kind = Kind(kind)
    if isinstance(value, bool):
        raise UnitError(f"expected a {kind.value} quantity, got a boolean")
    if kind in (Kind.DIMENSIONLESS, Kind.PROBABILITY):
        if isinstance(value, (int, float)):
            return float(value)
        number, unit = _split(str(value))
        if unit not in ("", "1"):
            raise UnitError(f"{kind.value} quantity must not carry a unit, got {unit!r}")
        return number
    if isinstance(value, (int, float)):
        raise UnitMissingError(f"bare number {value!r} given for a {kind.value} quantity; "
                               f"a unit such as {CANONICAL_UNIT[kind]!r} is required")
    number, unit = _split(str(value))
    if not unit:
        raise UnitMissingError(f"{value!r} has no unit; a {kind.value} quantity needs one "
                               f"(e.g. {CANONICAL_UNIT[kind]!r})")
    return number * _scale(unit, kind, angular)


def format_quantity(value: float, kind: Kind):
    """Inverse of :func:`parse_quantity` using canonical SI units (exact round trip)."""
    kind = Kind(kind)
    if kind in (Kind.DIMENSIONLESS, Kind.PROBABILITY):
        return float(value)
    return f"{float(value)!r} {CANONICAL_UNIT[kind]}"


def mhz_to_angular(value_mhz: float) -> float:
    """Ordinary frequency in MHz to angular frequency in rad/s."""
    return value_mhz * (TWO_PI * 1e6)
