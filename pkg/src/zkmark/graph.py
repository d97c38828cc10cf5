"""Minimal computation-graph format and fixed-point evaluation.

A graph is an ordered chain of ``Dense`` and ``Activation`` layers, serialized
as canonical JSON (the WGF format). Fixed-point evaluation at scale ``s``
quantizes weights to ``s`` fractional bits and biases to ``2s`` so a Dense
accumulator sits at scale ``2s``; it is then floor-divided by ``2**s``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from . import canonical
from .errors import (
    DimensionMismatch,
    MagnitudeOverflow,
    MalformedGraph,
    ShapeMismatch,
    UnsupportedLayerKind,
)

B_MAX = 52
MAG_LIMIT = 1 << B_MAX

DENSE = "Dense"
ACTIVATION = "Activation"
IDENTITY = "Identity"
RELU = "ReLU"
ARCHITECTURES = ("GAN", "Autoencoder")


def round_half_up_shift(q: int, shift: int) -> int:
    """``round_half_up(q / 2**shift)`` in exact integer arithmetic."""
    if shift <= 0:
        return q << -shift
    return (q + (1 << (shift - 1))) >> shift


def quantize_real(x: float, scale_bits: int) -> int:
    return math.floor(x * (1 << scale_bits) + 0.5)


def _as_int_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        ints = [int(v) for v in arr.ravel()]
        if any(abs(v) >= MAG_LIMIT for v in ints):
            raise MagnitudeOverflow(f"tensor entry exceeds 2^{B_MAX}")
        arr = np.array(ints, dtype=np.int64)
    elif arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise MalformedGraph("tensor data must be integers")
    return arr.astype(np.int64).ravel()


@dataclass(frozen=True, eq=False)
class FixedPointTensor:
    """Signed integers ``q`` standing for ``q / 2**scale_bits``, row-major."""

    shape: tuple[int, ...]
    data: np.ndarray
    scale_bits: int

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        data = _as_int_array(self.data)
        if any(d <= 0 for d in shape):
            raise ShapeMismatch(f"non-positive dimension in {shape}")
        if math.prod(shape) != data.size:
            raise ShapeMismatch(f"shape {shape} does not hold {data.size} values")
        if self.scale_bits < 0:
            raise ValueError("scale_bits must be non-negative")
        if data.size and int(np.abs(data).max()) >= MAG_LIMIT:
            raise MagnitudeOverflow(f"tensor entry exceeds 2^{B_MAX}")
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_real(cls, values: Sequence[float], scale_bits: int, shape=None):
        flat = np.asarray(values, dtype=np.float64).ravel()
        q = [quantize_real(float(v), scale_bits) for v in flat]
        return cls(tuple(shape) if shape else (len(q),), np.array(q, dtype=object), scale_bits)

    def to_real(self) -> np.ndarray:
        return self.data.astype(np.float64) / float(1 << self.scale_bits)

    def to_list(self) -> list[int]:
        return [int(v) for v in self.data]

    def to_json(self) -> dict:
        return {"shape": list(self.shape), "data": self.to_list(), "scale_bits": self.scale_bits}

    @classmethod
    def from_json(cls, obj) -> "FixedPointTensor":
        try:
            return cls(tuple(obj["shape"]), np.array(obj["data"], dtype=object), int(obj["scale_bits"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedGraph(f"bad tensor: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, FixedPointTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.scale_bits == other.scale_bits
            and np.array_equal(self.data, other.data)
        )

    def __len__(self):
        return self.data.size


@dataclass(frozen=True, eq=False)
class Layer:
    kind: str
    weights: FixedPointTensor | None = None
    bias: FixedPointTensor | None = None
    activation: str | None = None
    tags: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))
        if self.kind == DENSE:
            if self.weights is None or self.bias is None:
                raise MalformedGraph("Dense layer needs weights and bias")
            if len(self.weights.shape) != 2 or self.bias.shape != (self.weights.shape[0],):
                raise ShapeMismatch(
                    f"weights {self.weights.shape} and bias {self.bias.shape} disagree"
                )
        elif self.kind == ACTIVATION:
            if self.activation not in (IDENTITY, RELU):
                raise UnsupportedLayerKind(f"activation {self.activation!r}")
        else:
            raise UnsupportedLayerKind(f"layer kind {self.kind!r}")

    @classmethod
    def dense(cls, weights, bias, scale_bits: int = 0, tags: Iterable[str] = ()) -> "Layer":
        w = np.asarray(weights, dtype=object)
        b = np.asarray(bias, dtype=object).ravel()
        return cls(
            DENSE,
            weights=FixedPointTensor(w.shape, w.ravel(), scale_bits),
            bias=FixedPointTensor((b.size,), b, scale_bits),
            tags=frozenset(tags),
        )

    @classmethod
    def act(cls, activation: str, tags: Iterable[str] = ()) -> "Layer":
        return cls(ACTIVATION, activation=activation, tags=frozenset(tags))

    @property
    def in_dim(self) -> int | None:
        return self.weights.shape[1] if self.kind == DENSE else None

    @property
    def out_dim(self) -> int | None:
        return self.weights.shape[0] if self.kind == DENSE else None

    def float_params(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.weights.to_real().reshape(self.weights.shape)
        return w, self.bias.to_real()

    def fixed_params(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        """Weights re-quantized to scale ``s`` and bias to scale ``2s``."""
        cache = self.__dict__.setdefault("_fixed_cache", {})
        if s not in cache:
            w = self._requantize(self.weights, s)
            b = self._requantize(self.bias, 2 * s)
            cache[s] = (w.reshape(self.weights.shape), b)
        return cache[s]

    @staticmethod
    def _requantize(t: FixedPointTensor, target: int) -> np.ndarray:
        shift = t.scale_bits - target
        data = t.data
        if shift <= 0:
            bound = int(np.abs(data).max()) << -shift if data.size else 0
            if bound >= MAG_LIMIT:
                raise MagnitudeOverflow(f"re-quantized weight exceeds 2^{B_MAX}")
            return data << -shift
        return (data + (1 << (shift - 1))) >> shift

    def to_json(self) -> dict:
        obj: dict = {"kind": self.kind, "tags": sorted(self.tags)}
        if self.kind == DENSE:
            obj["weights"] = self.weights.to_json()
            obj["bias"] = self.bias.to_json()
        else:
            obj["activation"] = self.activation
        return obj

    @classmethod
    def from_json(cls, obj) -> "Layer":
        if not isinstance(obj, dict) or "kind" not in obj:
            raise MalformedGraph("layer must be an object with a 'kind'")
        tags = obj.get("tags", [])
        if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
            raise MalformedGraph("layer tags must be a list of strings")
        kind = obj["kind"]
        if kind == DENSE:
            if "weights" not in obj or "bias" not in obj:
                raise MalformedGraph("Dense layer needs 'weights' and 'bias'")
            return cls(
                DENSE,
                weights=FixedPointTensor.from_json(obj["weights"]),
                bias=FixedPointTensor.from_json(obj["bias"]),
                tags=frozenset(tags),
            )
        if kind == ACTIVATION:
            return cls(ACTIVATION, activation=obj.get("activation"), tags=frozenset(tags))
        raise UnsupportedLayerKind(f"layer kind {kind!r}")


def check_chain(input_dim: int, layers: Sequence[Layer]) -> int:
    """Type-check a layer chain; returns the final width."""
    width = input_dim
    for i, layer in enumerate(layers):
        if layer.kind == DENSE:
            if layer.in_dim != width:
                raise ShapeMismatch(f"layer {i} expects width {layer.in_dim}, got {width}")
            width = layer.out_dim
    return width


@dataclass(frozen=True, eq=False)
class ComputationGraph:
    model_id: str
    architecture: str
    input_dim: int
    layers: tuple[Layer, ...]
    output_shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "output_shape", tuple(int(d) for d in self.output_shape))
        if self.architecture not in ARCHITECTURES:
            raise MalformedGraph(f"unknown architecture {self.architecture!r}")
        if self.input_dim <= 0:
            raise MalformedGraph("input_dim must be positive")
        # [n] is only used by extracted layer segments, which do not render
        if not (
            (len(self.output_shape) == 3 and self.output_shape[2] == 3)
            or len(self.output_shape) == 1
        ) or min(self.output_shape) <= 0:
            raise ShapeMismatch(f"output_shape must be [H, W, 3], got {list(self.output_shape)}")
        width = check_chain(self.input_dim, self.layers)
        if width != math.prod(self.output_shape):
            raise ShapeMismatch(
                f"chain ends at width {width}, output_shape needs {math.prod(self.output_shape)}"
            )

    @property
    def depth(self) -> int:
        return len(self.layers)

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "architecture": self.architecture,
            "input_dim": self.input_dim,
            "output_shape": list(self.output_shape),
            "layers": [layer.to_json() for layer in self.layers],
        }

    @cached_property
    def canonical_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @cached_property
    def model_digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes).hexdigest()


def save_graph(graph: ComputationGraph) -> bytes:
    return graph.canonical_bytes


def load_graph(data: bytes | str) -> ComputationGraph:
    try:
        obj = canonical.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedGraph(f"not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedGraph("top level must be an object")
    missing = {"model_id", "architecture", "input_dim", "output_shape", "layers"} - obj.keys()
    if missing:
        raise MalformedGraph(f"missing keys: {sorted(missing)}")
    if not isinstance(obj["layers"], list) or not isinstance(obj["output_shape"], list):
        raise MalformedGraph("'layers' and 'output_shape' must be arrays")
    if not isinstance(obj["input_dim"], int) or not isinstance(obj["model_id"], str):
        raise MalformedGraph("bad 'input_dim' or 'model_id'")
    layers = tuple(Layer.from_json(layer) for layer in obj["layers"])
    return ComputationGraph(
        model_id=obj["model_id"],
        architecture=obj["architecture"],
        input_dim=obj["input_dim"],
        layers=layers,
        output_shape=tuple(obj["output_shape"]),
    )


def forward_float_layers(layers: Sequence[Layer], x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).ravel()
    for layer in layers:
        if layer.kind == DENSE:
            w, b = layer.float_params()
            v = w @ v + b
        elif layer.activation == RELU:
            v = np.maximum(v, 0.0)
    return v


def forward_float(graph: ComputationGraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size != graph.input_dim:
        raise DimensionMismatch(f"input has {x.size} values, graph expects {graph.input_dim}")
    return forward_float_layers(graph.layers, x)


def _int_matvec(w: np.ndarray, x: np.ndarray, b: np.ndarray) -> np.ndarray:
    wmax = int(np.abs(w).max()) if w.size else 0
    xmax = int(np.abs(x).max()) if x.size else 0
    bmax = int(np.abs(b).max()) if b.size else 0
    if wmax * xmax * max(w.shape[1], 1) + bmax < (1 << 62):
        return w @ x + b
    # exact big-int fallback; overflow is reported by the caller's bound check
    return np.array(
        [sum(int(wi) * int(xi) for wi, xi in zip(row, x)) + int(bi) for row, bi in zip(w, b)],
        dtype=object,
    )


@dataclass(frozen=True)
class LayerTrace:
    """Fixed-point values around one layer: input, Dense accumulator, output."""

    inputs: np.ndarray
    acc: np.ndarray | None
    outputs: np.ndarray


def trace_fixed(layers: Sequence[Layer], x_q: np.ndarray, scale_bits: int) -> list[LayerTrace]:
    s = scale_bits
    v = np.asarray(x_q, dtype=np.int64)
    out: list[LayerTrace] = []
    for i, layer in enumerate(layers):
        if layer.kind == DENSE:
            if layer.in_dim != v.size:
                raise DimensionMismatch(f"layer {i} expects {layer.in_dim} inputs, got {v.size}")
            w, b = layer.fixed_params(s)
            acc = _int_matvec(w, v, b)
            if acc.size and int(np.abs(acc).max()) >= MAG_LIMIT:
                raise MagnitudeOverflow(f"layer {i} accumulator exceeds 2^{B_MAX} at scale {s}")
            acc = acc.astype(np.int64)
            y = acc >> s
            out.append(LayerTrace(v, acc, y))
        elif layer.activation == RELU:
            y = np.maximum(v, 0)
            out.append(LayerTrace(v, None, y))
        else:
            y = v
            out.append(LayerTrace(v, None, y))
        v = y
    return out


def _scale_of(calib) -> int:
    return calib if isinstance(calib, int) else calib.scale_bits


def forward_fixed(graph: ComputationGraph, x: FixedPointTensor, calib) -> FixedPointTensor:
    """Quantized evaluation. ``calib`` is a CalibrationConfig or a bare scale."""
    s = _scale_of(calib)
    if x.scale_bits != s:
        raise DimensionMismatch(f"input scale {x.scale_bits} != calibration scale {s}")
    if len(x) != graph.input_dim:
        raise DimensionMismatch(f"input has {len(x)} values, graph expects {graph.input_dim}")
    trace = trace_fixed(graph.layers, x.data, s)
    result = trace[-1].outputs if trace else x.data
    return FixedPointTensor((result.size,), result, s)


def latent_from_seed(seed: int, dim: int) -> np.ndarray:
    """Counter-mode SHA-256 expansion of a 64-bit seed into ``[-1, 1]``."""
    seed_bytes = (seed % (1 << 64)).to_bytes(8, "little")
    z = np.empty(dim, dtype=np.float64)
    for i in range(dim):
        h = hashlib.sha256(seed_bytes + i.to_bytes(8, "little")).digest()
        u = (int.from_bytes(h[:8], "big") >> 11) / float(1 << 53)
        z[i] = 2.0 * u - 1.0
    return z


@dataclass(frozen=True, eq=False)
class RasterImage:
    """8-bit RGB raster; ``pixels`` is a read-only ``(height, width, 3)`` uint8 array."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.width <= 0 or self.height <= 0:
            raise ShapeMismatch("image dimensions must be positive")
        if px.shape != (self.height, self.width, 3):
            raise ShapeMismatch(f"pixel array {px.shape} != ({self.height}, {self.width}, 3)")
        if px is self.pixels:
            px = px.copy()
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, arr) -> "RasterImage":
        arr = np.asarray(arr, dtype=np.uint8)
        return cls(arr.shape[1], arr.shape[0], arr)

    def to_bytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.width == other.width and self.height == other.height and np.array_equal(
            self.pixels, other.pixels
        )


def render_image(output: FixedPointTensor, output_shape) -> RasterImage:
    """Clamp dequantized values to ``[0, 1]`` and scale to bytes, round half up."""
    h, w, c = (int(d) for d in output_shape)
    if c != 3 or h * w * c != len(output):
        raise ShapeMismatch(f"{len(output)} values cannot fill shape {list(output_shape)}")
    s = output.scale_bits
    q = output.data.astype(np.int64)
    one = 1 << s
    clamped = np.clip(q, 0, one)
    # floor(v * 255 + 1/2) with v = clamped / 2^s
    channels = (clamped * 510 + one) >> (s + 1)
    return RasterImage(w, h, channels.astype(np.uint8).reshape(h, w, 3))
