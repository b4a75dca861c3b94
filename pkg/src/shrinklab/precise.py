"""Fixed-point numbers in [0, 1) with an explicit bit width."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigError

DEFAULT_BITS = 1024


@dataclass(frozen=True, order=True)
class PrecisePoint:
    """The dyadic number ``num / 2**bits``.

    Parameters
    ----------
    num : int
        Numerator, ``0 <= num < 2**bits``.
    bits : int
        Bit width; orbits keep it fixed.
    """

    num: int
    bits: int = DEFAULT_BITS

    def __post_init__(self):
        if self.bits < 1:
            raise ConfigError("bit width must be positive")
        if not 0 <= self.num < (1 << self.bits):
            raise ConfigError("fixed-point value outside [0, 1)")

    @classmethod
    def from_value(cls, value, bits: int = DEFAULT_BITS) -> "PrecisePoint":
        """Round ``value`` down onto the grid of width ``bits``.

        Accepts floats, ints, ``Fraction`` and strings such as ``"1/3"`` or
        ``"0.3"`` (strings are read as exact decimals or ratios).
        """
        if isinstance(value, PrecisePoint):
            return value.with_bits(bits)
        try:
            frac = Fraction(value)
        except (TypeError, ValueError):
            raise ConfigError(f"cannot read a point from {value!r}") from None
        if not 0 <= frac < 1:
            raise ConfigError(f"point {value!r} is outside [0, 1)")
        return cls(math.floor(frac * (1 << bits)), bits)

    @classmethod
    def random(cls, rng: np.random.Generator, bits: int = DEFAULT_BITS,
               low: float = 0.0, high: float = 1.0) -> "PrecisePoint":
        """Uniform random point of ``[low, high)`` with all ``bits`` bits random."""
        nbytes = (bits + 7) // 8
        raw = int.from_bytes(rng.bytes(nbytes), "little") >> (8 * nbytes - bits)
        if (low, high) == (0.0, 1.0):
            return cls(raw, bits)
        lo = Fraction(low)
        width = Fraction(high) - lo
        scale = 1 << bits
        num = math.floor(lo * scale + width * raw)
        return cls(min(num, scale - 1), bits)

    @classmethod
    def from_hex(cls, text: str) -> "PrecisePoint":
        bits, digits = text.split(":")
        return cls(int(digits, 16), int(bits))

    def hex(self) -> str:
        """``"<bits>:<hex digits>"``, the format used in run manifests."""
        return f"{self.bits}:{self.num:0{(self.bits + 3) // 4}x}"

    def with_bits(self, bits: int) -> "PrecisePoint":
        if bits >= self.bits:
            return PrecisePoint(self.num << (bits - self.bits), bits)
        return PrecisePoint(self.num >> (self.bits - bits), bits)

    def to_fraction(self) -> Fraction:
        return Fraction(self.num, 1 << self.bits)

    def __float__(self) -> float:
        return self.num / (1 << self.bits)

    def __repr__(self) -> str:
        return f"PrecisePoint({float(self)!r}, bits={self.bits})"
