"""Lossless image I/O: binary PPM (P6) and 8-bit RGB PNG.

Lossy formats are refused outright since they destroy the low bit planes that
carry the watermark.
"""

from __future__ import annotations

import io
import os

import numpy as np
from PIL import Image

from .errors import ImageFormatError
from .graph import RasterImage

LOSSY_SUFFIXES = {".jpg", ".jpeg", ".jpe", ".jfif", ".webp", ".heic", ".heif", ".avif"}


def encode_ppm(image: RasterImage) -> bytes:
    return f"P6\n{image.width} {image.height}\n255\n".encode("ascii") + image.to_bytes()


def decode_ppm(data: bytes) -> RasterImage:
    if not data.startswith(b"P6"):
        raise ImageFormatError("not a binary PPM (P6) file")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ImageFormatError("truncated PPM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ImageFormatError("malformed PPM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte before the raster
    width, height, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit PPM supported (maxval {maxval})")
    raster = data[pos : pos + width * height * 3]
    if len(raster) != width * height * 3:
        raise ImageFormatError("truncated PPM raster")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(width, height, arr)


def encode_png(image: RasterImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image.pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> RasterImage:
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.format != "PNG":
                raise ImageFormatError(f"expected PNG, got {im.format}")
            if im.mode not in ("RGB", "RGBA", "L", "P"):
                raise ImageFormatError(f"unsupported PNG mode {im.mode}")
            arr = np.array(im.convert("RGB"), dtype=np.uint8)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"cannot decode PNG: {exc}") from exc
    return RasterImage.from_array(arr)


def decode_image(data: bytes) -> RasterImage:
    """Sniff PNG or PPM from the leading bytes."""
    if data.startswith(b"\x89PNG\r\n\x1a\n"):
        return decode_png(data)
    if data.startswith(b"P6"):
        return decode_ppm(data)
    raise ImageFormatError("unrecognised image data (PNG or binary PPM expected)")


def _suffix(path: str | os.PathLike) -> str:
    return os.path.splitext(os.fspath(path))[1].lower()


def read_image(path: str | os.PathLike) -> RasterImage:
    with open(path, "rb") as fh:
        return decode_image(fh.read())


def write_image(path: str | os.PathLike, image: RasterImage) -> None:
    suffix = _suffix(path)
    if suffix in LOSSY_SUFFIXES:
        raise ImageFormatError(
            f"refusing lossy format {suffix!r}: lossy encoding destroys the LSB watermark"
        )
    if suffix == ".png":
        data = encode_png(image)
    elif suffix in (".ppm", ".pnm"):
        data = encode_ppm(image)
    else:
        raise ImageFormatError(f"unsupported image format {suffix!r} (use .png or .ppm)")
    with open(path, "wb") as fh:
        fh.write(data)
