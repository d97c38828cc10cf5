"""Bind a proof bundle to image content with a keyed perceptual-hash signature.

The 512-bit average hash is computed over a 32 x 16 cell grid after clearing
the two low bit planes of every channel. Those are the only planes the
steganographic embedder writes, so the hash of a watermarked image equals
the hash of its carrier exactly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .errors import ImageTooSmall, SignatureAlreadyPresent, WeakSecretKey
from .graph import RasterImage
from .proof import ProofBundle

GRID_W, GRID_H = 32, 16
HASH_BITS = GRID_W * GRID_H
LOW_PLANES_MASK = 0xFC
MIN_KEY_BYTES = 16
SECRET_ENV_VAR = "ZKMARK_SECRET_KEY"


@dataclass(frozen=True)
class PerceptualHash:
    bits: tuple[bool, ...]

    def __post_init__(self):
        if len(self.bits) != HASH_BITS:
            raise ValueError(f"hash needs {HASH_BITS} bits, got {len(self.bits)}")
        object.__setattr__(self, "bits", tuple(bool(b) for b in self.bits))

    @property
    def hex(self) -> str:
        return np.packbits(np.array(self.bits, dtype=np.uint8)).tobytes().hex()

    @classmethod
    def from_hex(cls, text: str) -> "PerceptualHash":
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        return cls(tuple(np.unpackbits(raw).astype(bool)))

    def grid(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool).reshape(GRID_H, GRID_W)

    def hamming(self, other: "PerceptualHash") -> int:
        return sum(a != b for a, b in zip(self.bits, other.bits))


class SecretKey:
    """Owner secret. Deliberately has no serializer and a redacted repr."""

    __slots__ = ("_raw",)

    def __init__(self, raw: bytes):
        if len(raw) < MIN_KEY_BYTES:
            raise WeakSecretKey(f"secret key must be at least {MIN_KEY_BYTES} bytes")
        self._raw = bytes(raw)

    def __bytes__(self) -> bytes:
        return self._raw

    def __repr__(self) -> str:
        return "SecretKey(<redacted>)"

    __str__ = __repr__

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "SecretKey":
        with open(path, "rb") as fh:
            return cls(fh.read().strip())

    @classmethod
    def from_env(cls, var: str = SECRET_ENV_VAR) -> "SecretKey":
        value = os.environ.get(var)
        if value is None:
            raise WeakSecretKey(f"environment variable {var} is not set")
        return cls(value.encode("utf-8"))


def _cell_edges(n: int, cells: int) -> list[int]:
    return [(i * n) // cells for i in range(cells + 1)]


def average_hash(image: RasterImage) -> PerceptualHash:
    if image.width < GRID_W or image.height < GRID_H:
        raise ImageTooSmall(
            f"{image.width}x{image.height} image, need at least {GRID_W}x{GRID_H}"
        )
    px = (image.pixels & LOW_PLANES_MASK).astype(np.int64)
    luma = (77 * px[..., 0] + 150 * px[..., 1] + 29 * px[..., 2]) >> 8
    xs = _cell_edges(image.width, GRID_W)
    ys = _cell_edges(image.height, GRID_H)
    # integral image gives every cell sum in O(1)
    integral = np.zeros((image.height + 1, image.width + 1), dtype=np.int64)
    integral[1:, 1:] = luma.cumsum(0).cumsum(1)
    means = []
    for r in range(GRID_H):
        for c in range(GRID_W):
            y0, y1, x0, x1 = ys[r], ys[r + 1], xs[c], xs[c + 1]
            total = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
            means.append(Fraction(int(total), (y1 - y0) * (x1 - x0)))
    global_mean = sum(means, Fraction(0)) / HASH_BITS
    return PerceptualHash(tuple(m > global_mean for m in means))


def sign(phash: PerceptualHash, key: SecretKey | bytes) -> str:
    """Lowercase hex SHA-256 of the hash's hex string followed by the key bytes."""
    return hashlib.sha256(phash.hex.encode("ascii") + bytes(key)).hexdigest()


def attach_signature(bundle: ProofBundle, signature: str) -> ProofBundle:
    if bundle.signature is not None:
        raise SignatureAlreadyPresent("bundle is already signed")
    if len(signature) != 64 or any(c not in "0123456789abcdef" for c in signature):
        raise ValueError("signature must be 64 lowercase hex characters")
    return replace(bundle, signature=signature)


def signature_for(image: RasterImage, key: SecretKey | bytes) -> str:
    return sign(average_hash(image), key)
