"""Prime-field helpers.

Field elements are plain Python ints in ``[0, p)``; a :class:`PrimeField`
carries the modulus and the signed embedding used by the circuit compiler.
"""

from __future__ import annotations

from dataclasses import dataclass

MERSENNE61 = (1 << 61) - 1
BN254_SCALAR = 21888242871839275222246405745257275088548364400416711297436683353952381


@dataclass(frozen=True)
class PrimeField:
    modulus: int = MERSENNE61

    @property
    def value_bytes(self) -> int:
        """Little-endian width used when hashing a field value."""
        return 8 if self.modulus < (1 << 64) else 32

    def reduce(self, x: int) -> int:
        return x % self.modulus

    def embed(self, q: int) -> int:
        """Map a signed integer with |q| < p/2 into the field."""
        if 2 * abs(q) >= self.modulus:
            raise OverflowError(f"{q} does not fit the signed range of the field")
        return q % self.modulus

    def to_signed(self, v: int) -> int:
        v %= self.modulus
        return v - self.modulus if 2 * v >= self.modulus else v

    def add(self, a: int, b: int) -> int:
        return (a + b) % self.modulus

    def mul(self, a: int, b: int) -> int:
        return (a * b) % self.modulus

    def inv(self, a: int) -> int:
        if a % self.modulus == 0:
            raise ZeroDivisionError("zero has no inverse")
        return pow(a, -1, self.modulus)

    def encode(self, v: int) -> bytes:
        return (v % self.modulus).to_bytes(self.value_bytes, "little")

    def from_digest(self, digest: bytes) -> int:
        """Big-endian digest bytes reduced into the field."""
        return int.from_bytes(digest, "big") % self.modulus


DEFAULT_FIELD = PrimeField(MERSENNE61)
