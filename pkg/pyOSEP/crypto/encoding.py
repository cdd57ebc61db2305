"""Signed fixed-point encoding of reals into Z_n.

   A real x at scale level l is the integer round(x * 2^(f*l)), reduced
   mod n. Residues above n // 2 stand for negative values. Matrix entries
   and iterates are encoded at level one; the product of two level-one
   encodings lives at level two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Integral
from typing import Iterable, Sequence

import numpy as np

DEFAULT_FRAC_BITS = 40
DEFAULT_GUARD_BITS = 64


class CodecError(Exception):
    def __init__(self, message: str, cause=None) -> None:
        self.message = message
        self.__cause__ = cause
        super().__init__(self.message)


class CodecRangeError(CodecError):
    """The modulus is too small for the requested precision."""


class CodecOverflowError(CodecError):
    """A value does not fit the signed range of the modulus."""


@dataclass(frozen=True)
class FixedPointCodec:
    """Fixed-point codec bound to a modulus.

    Parameters
    ----------
    modulus : int
        The plaintext modulus n of the key.
    frac_bits : int, optional
        Fractional bits f per scale level, by default 40.
    guard_bits : int, optional
        Headroom required above a level-two product, by default 64.

    Raises
    ------
    CodecRangeError
        When 2^(2f + guard_bits) is not below n / 2.
    """
    modulus: int
    frac_bits: int = DEFAULT_FRAC_BITS
    guard_bits: int = DEFAULT_GUARD_BITS
    max_int: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        modulus = int(self.modulus)
        if self.frac_bits < 0 or self.guard_bits < 0:
            raise CodecRangeError(
                f"Invalid precision f={self.frac_bits}, guard={self.guard_bits}.")
        if 1 << (2 * self.frac_bits + self.guard_bits + 1) >= modulus:
            raise CodecRangeError(
                f"A {modulus.bit_length()}-bit modulus cannot hold f={self.frac_bits} "
                f"with {self.guard_bits} guard bits.")
        object.__setattr__(self, "modulus", modulus)
        object.__setattr__(self, "max_int", (modulus - 1) // 2)

    def scale(self, level: int = 1) -> int:
        if level not in (1, 2):
            raise CodecError(f"Scale level must be 1 or 2, got {level}.")
        return 1 << (self.frac_bits * level)

    def max_magnitude(self, level: int = 1) -> float:
        """The largest |x| that encodes at the given level."""
        try:
            return self.max_int / self.scale(level)
        except OverflowError:
            return math.inf

    def to_fixed(self, x, level: int = 1) -> int:
        """The signed integer round(x * 2^(f*level)) without reduction."""
        if isinstance(x, Integral):
            value = int(x) * self.scale(level)
        else:
            x = float(x)
            if not math.isfinite(x):
                raise CodecOverflowError(f"Cannot encode the non-finite value {x}.")
            value = round(math.ldexp(x, self.frac_bits * level))
        if abs(value) > self.max_int:
            raise CodecOverflowError(
                f"|{x}| exceeds the {self.max_magnitude(level):.3e} limit at level {level}.")
        return value

    def to_residue(self, value: int) -> int:
        """Reduce a signed integer into [0, n)."""
        value = int(value)
        if abs(value) > self.max_int:
            raise CodecOverflowError("The integer exceeds the signed range of the modulus.")
        return value % self.modulus

    def to_signed(self, residue: int) -> int:
        """Lift a residue of [0, n) to the signed representative."""
        residue = int(residue) % self.modulus
        return residue - self.modulus if residue > self.modulus // 2 else residue

    def from_fixed(self, value: int, level: int = 1) -> float:
        return int(value) / self.scale(level)

    def encode(self, x, level: int = 1) -> int:
        """Encode a real into [0, n).

        Raises
        ------
        CodecOverflowError
            x is not finite or |x| * 2^(f*level) exceeds (n - 1) / 2.
        """
        return self.to_fixed(x, level) % self.modulus

    def decode(self, residue: int, level: int = 1) -> float:
        return self.from_fixed(self.to_signed(residue), level)

    def encode_vector(self, x: Iterable, level: int = 1) -> list[int]:
        return [self.encode(v, level) for v in x]

    def decode_vector(self, residues: Sequence[int], level: int = 1) -> np.ndarray:
        return np.array([self.decode(v, level) for v in residues], dtype=float)

    def fixed_vector(self, x: Iterable, level: int = 1) -> list[int]:
        return [self.to_fixed(v, level) for v in x]

    def fixed_matrix(self, A) -> list[list[int]]:
        """Signed level-one integers of every entry, row major."""
        return [self.fixed_vector(row, 1) for row in np.asarray(A, dtype=float)]

    def encode_matrix(self, A) -> list[list[int]]:
        return [[v % self.modulus for v in row] for row in self.fixed_matrix(A)]


def fixed_product(A_int: Sequence[Sequence[int]], x_int: Sequence[int]) -> list[int]:
    """Exact integer matrix-vector product."""
    return [sum(a * b for a, b in zip(row, x_int)) for row in A_int]


def row_bound(A_int: Sequence[Sequence[int]]) -> int:
    """max_i sum_j |A_int[i][j]|"""
    return max(sum(abs(a) for a in row) for row in A_int)
