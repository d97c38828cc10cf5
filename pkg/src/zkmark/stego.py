"""Gzip framing and LSB embedding of the signed proof bundle.

Layout: channel slots run row-major from the top-left pixel, R then G then B.
Bit plane 0 of every slot is filled before plane 1 is touched. The first 64
plane-0 slots hold the payload length in bytes as a big-endian u64; payload
bits follow MSB-first within each byte.
"""

from __future__ import annotations

import math
import struct
import zlib

import numpy as np

from .errors import CapacityExceeded, GzipFormatError, ImplausibleHeader
from .graph import RasterImage

HEADER_BITS = 64
# ID1 ID2 CM=deflate FLG=0 MTIME=0 XFL=2 (max compression) OS=0
GZIP_HEADER = b"\x1f\x8b\x08\x00\x00\x00\x00\x00\x02\x00"


def compress(raw: bytes) -> bytes:
    """Single RFC 1952 member, maximum compression, zeroed mtime and OS byte."""
    co = zlib.compressobj(9, zlib.DEFLATED, -zlib.MAX_WBITS)
    body = co.compress(raw) + co.flush()
    trailer = struct.pack("<II", zlib.crc32(raw), len(raw) & 0xFFFFFFFF)
    return GZIP_HEADER + body + trailer


def _inflate(stream: bytes) -> tuple[bytes, bool, bytes]:
    d = zlib.decompressobj(-zlib.MAX_WBITS)
    out = d.decompress(stream)
    return out, d.eof, d.unused_data


def decompress(data: bytes) -> bytes:
    """Strict inverse of :func:`compress`.

    Beyond CRC and length checks this rejects non-canonical header bytes,
    trailing data and non-zero padding after the final deflate block, so any
    altered member fails rather than decoding to the same content.
    """
    if len(data) < len(GZIP_HEADER) + 8:
        raise GzipFormatError("gzip member truncated")
    if data[: len(GZIP_HEADER)] != GZIP_HEADER:
        raise GzipFormatError("gzip header is not in canonical form")
    try:
        out, eof, unused = _inflate(data[len(GZIP_HEADER) :])
    except zlib.error as exc:
        raise GzipFormatError(f"deflate stream corrupt: {exc}") from exc
    if not eof:
        raise GzipFormatError("deflate stream truncated")
    if len(unused) != 8:
        raise GzipFormatError(f"expected 8 trailer bytes after deflate data, found {len(unused)}")
    crc, isize = struct.unpack("<II", unused)
    if crc != zlib.crc32(out) or isize != len(out) & 0xFFFFFFFF:
        raise GzipFormatError("gzip CRC or length mismatch")
    stream = data[len(GZIP_HEADER) : -8]
    last = stream[-1]
    for j in range(1, 8):
        masked = last & (0xFF >> j)
        if masked == last:
            continue
        try:
            alt, alt_eof, alt_unused = _inflate(stream[:-1] + bytes([masked]))
        except zlib.error:
            break
        if alt_eof and not alt_unused and alt == out:
            raise GzipFormatError("non-zero padding bits after final deflate block")
        break
    return out


def capacity_bits(width: int, height: int) -> int:
    return 2 * width * height * 3


def capacity_bytes(width: int, height: int) -> int:
    return max(capacity_bits(width, height) - HEADER_BITS, 0) // 8


def plane_usage(n_bytes: int, width: int, height: int) -> tuple[int, int]:
    """``(plane-0 bits, plane-1 bits)`` written for an ``n_bytes`` payload."""
    total = HEADER_BITS + 8 * n_bytes
    slots = width * height * 3
    return min(total, slots), max(total - slots, 0)


def lsb_embed(image: RasterImage, payload: bytes) -> RasterImage:
    required = HEADER_BITS + 8 * len(payload)
    available = capacity_bits(image.width, image.height)
    if required > available:
        raise CapacityExceeded(required, available)
    stream = struct.pack(">Q", len(payload)) + payload
    bits = np.unpackbits(np.frombuffer(stream, dtype=np.uint8))
    flat = image.pixels.reshape(-1).copy()
    n0 = min(bits.size, flat.size)
    flat[:n0] = (flat[:n0] & 0xFE) | bits[:n0]
    n1 = bits.size - n0
    if n1:
        flat[:n1] = (flat[:n1] & 0xFD) | (bits[n0:] << 1)
    return RasterImage(image.width, image.height, flat.reshape(image.pixels.shape))


def _read_bits(flat: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Stream bits ``[start, stop)`` in slot order: plane 0, then plane 1."""
    n = flat.size
    parts = []
    if start < n:
        parts.append(flat[start : min(stop, n)] & 1)
    if stop > n:
        parts.append((flat[max(start - n, 0) : stop - n] >> 1) & 1)
    return np.concatenate(parts) if parts else np.zeros(0, np.uint8)


def lsb_extract(image: RasterImage) -> bytes:
    flat = image.pixels.reshape(-1)
    available = capacity_bits(image.width, image.height)
    if available < HEADER_BITS:
        raise ImplausibleHeader("image too small to hold a length header")
    length = int.from_bytes(np.packbits(_read_bits(flat, 0, HEADER_BITS)).tobytes(), "big")
    if length > (available - HEADER_BITS) // 8:
        raise ImplausibleHeader(
            f"header declares {length} bytes, carrier holds at most "
            f"{capacity_bytes(image.width, image.height)}"
        )
    return np.packbits(_read_bits(flat, HEADER_BITS, HEADER_BITS + 8 * length)).tobytes()


def psnr(a: RasterImage, b: RasterImage) -> float:
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    return math.inf if mse == 0 else 10.0 * math.log10(255.0**2 / mse)
