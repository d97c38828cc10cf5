"""Selective-layer circuit creation: pick the layers to prove, then calibrate.

Two selection policies exist. ``GanPrefix(k)`` keeps the first ``k`` layers
of a generator (the latent projection for ``k=1``); ``AeBottleneck`` keeps the
layers tagged ``bottleneck`` plus any activation directly after them.

Calibration walks the ``(scale_bits, value_bits)`` grid in lexicographic
order and returns the first point where the fixed-point sub-graph tracks the
float reference within tolerance and every witness value fits the
range-check width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from . import canonical
from .errors import (
    CalibrationInfeasible,
    EmptyBatch,
    MagnitudeOverflow,
    NoBottleneckTag,
    PolicyMismatch,
    SelectionOutOfRange,
    ShapeMismatch,
)
from .graph import (
    ACTIVATION,
    DENSE,
    ComputationGraph,
    forward_float_layers,
    latent_from_seed,
    quantize_real,
    trace_fixed,
)

SCALE_RANGE = (4, 16)
VALUE_RANGE = (8, 48)
DEFAULT_TOLERANCE = 2.0**-6
DEFAULT_BATCHES = 10
DEFAULT_BATCH_SIZE = 8
BOTTLENECK = "bottleneck"
PRIVATE, PUBLIC = "Private", "Public"


@dataclass(frozen=True)
class GanPrefix:
    k: int = 1

    def __str__(self):
        return f"gan-prefix:{self.k}"


@dataclass(frozen=True)
class AeBottleneck:
    def __str__(self):
        return "ae-bottleneck"


Policy = Union[GanPrefix, AeBottleneck]


def parse_policy(text: str) -> Policy:
    text = text.strip().lower()
    if text == "ae-bottleneck":
        return AeBottleneck()
    if text == "gan-prefix":
        return GanPrefix(1)
    if text.startswith("gan-prefix:"):
        try:
            return GanPrefix(int(text.split(":", 1)[1]))
        except ValueError:
            pass
    raise ValueError(f"unknown policy {text!r} (expected gan-prefix[:k] or ae-bottleneck)")


@dataclass(frozen=True)
class LayerSelection:
    policy: Policy
    selected_indices: tuple[int, ...]
    sub_graph: ComputationGraph
    input_visibility: tuple[str, ...]
    output_commitment_mode: str = "HashPublic"

    @property
    def start(self) -> int:
        return self.selected_indices[0]


def select_layers(graph: ComputationGraph, policy: Policy) -> LayerSelection:
    if isinstance(policy, GanPrefix):
        if graph.architecture != "GAN":
            raise PolicyMismatch(f"gan-prefix needs a GAN graph, got {graph.architecture}")
        if not 1 <= policy.k <= graph.depth:
            raise SelectionOutOfRange(f"k={policy.k} outside [1, {graph.depth}]")
        indices = tuple(range(policy.k))
    elif isinstance(policy, AeBottleneck):
        if graph.architecture != "Autoencoder":
            raise PolicyMismatch(
                f"ae-bottleneck needs an Autoencoder graph, got {graph.architecture}"
            )
        chosen = []
        for i, layer in enumerate(graph.layers):
            if BOTTLENECK in layer.tags:
                chosen.append(i)
                j = i + 1
                while j < graph.depth and graph.layers[j].kind == ACTIVATION:
                    chosen.append(j)
                    j += 1
        if not chosen:
            raise NoBottleneckTag(f"{graph.model_id} has no layer tagged {BOTTLENECK!r}")
        indices = tuple(sorted(set(chosen)))
        if indices != tuple(range(indices[0], indices[-1] + 1)):
            raise ShapeMismatch(f"bottleneck layers {indices} are not contiguous")
    else:
        raise TypeError(f"unknown policy {policy!r}")

    layers = [graph.layers[i] for i in indices]
    in_dim = _input_width(graph, indices[0])
    out_dim = in_dim
    for layer in layers:
        if layer.kind == DENSE:
            out_dim = layer.out_dim
    sub = ComputationGraph(
        model_id=graph.model_id + "#sel",
        architecture=graph.architecture,
        input_dim=in_dim,
        layers=tuple(layers),
        output_shape=(out_dim,),
    )
    return LayerSelection(
        policy=policy,
        selected_indices=indices,
        sub_graph=sub,
        input_visibility=(PRIVATE,) * in_dim,
    )


def _input_width(graph: ComputationGraph, index: int) -> int:
    width = graph.input_dim
    for layer in graph.layers[:index]:
        if layer.kind == DENSE:
            width = layer.out_dim
    return width


@dataclass(frozen=True)
class CalibrationConfig:
    scale_bits: int
    value_bits: int
    tolerance: float = DEFAULT_TOLERANCE
    input_visibility: tuple[str, ...] = field(default=())
    batches_used: int = 1

    def __post_init__(self):
        object.__setattr__(self, "input_visibility", tuple(self.input_visibility))
        if self.scale_bits < 0 or self.value_bits <= 0 or self.tolerance < 0:
            raise ValueError("invalid calibration parameters")

    def to_json(self) -> dict:
        return {
            "scale_bits": self.scale_bits,
            "value_bits": self.value_bits,
            "tolerance": self.tolerance,
            "input_visibility": list(self.input_visibility),
            "batches_used": self.batches_used,
        }

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "CalibrationConfig":
        return cls(
            scale_bits=int(obj["scale_bits"]),
            value_bits=int(obj["value_bits"]),
            tolerance=float(obj["tolerance"]),
            input_visibility=tuple(obj["input_visibility"]),
            batches_used=int(obj["batches_used"]),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "CalibrationConfig":
        return cls.from_json(canonical.loads(data))


def signed_width(v: int) -> int:
    """Smallest B with -2^(B-1) <= v < 2^(B-1)."""
    return (v if v >= 0 else -v - 1).bit_length() + 1


@dataclass(frozen=True)
class ScaleProbe:
    """Outcome of running a sub-graph at one scale over all calibration inputs."""

    scale_bits: int
    max_error: float
    needed_bits: int  # range-check width covering every witness value
    overflow: bool = False


def probe_scale(selection: LayerSelection, inputs: np.ndarray, s: int) -> ScaleProbe:
    layers = selection.sub_graph.layers
    max_err = 0.0
    needed = 1
    for x in inputs:
        x_q = np.array([quantize_real(float(v), s) for v in x], dtype=object)
        try:
            trace = trace_fixed(layers, np.array(x_q, dtype=np.int64), s)
        except (MagnitudeOverflow, OverflowError):
            return ScaleProbe(s, math.inf, 10**9, overflow=True)
        out_q = trace[-1].outputs if trace else np.array(x_q, dtype=np.int64)
        ref = forward_float_layers(layers, x)
        err = float(np.max(np.abs(out_q.astype(np.float64) / (1 << s) - ref))) if ref.size else 0.0
        max_err = max(max_err, err)
        values = [int(np.abs(x_q).max(initial=0))]
        for lt in trace:
            for arr in (lt.inputs, lt.acc, lt.outputs):
                if arr is not None and arr.size:
                    values.append(int(arr.max()))
                    values.append(int(arr.min()))
        needed = max(needed, max(signed_width(v) for v in values))
    return ScaleProbe(s, max_err, needed)


def min_value_bits(selection: LayerSelection, probe: ScaleProbe) -> int:
    """Lower bound on B from the circuit layout itself (bit split of rescales)."""
    has_rescale = probe.scale_bits > 0 and any(
        layer.kind == DENSE for layer in selection.sub_graph.layers
    )
    return max(probe.needed_bits, probe.scale_bits + 1 if has_rescale else 1)


def passes(
    selection: LayerSelection,
    inputs: np.ndarray,
    scale_bits: int,
    value_bits: int,
    tolerance: float,
) -> bool:
    probe = probe_scale(selection, inputs, scale_bits)
    if probe.overflow or probe.max_error > tolerance:
        return False
    return value_bits >= min_value_bits(selection, probe)


def _stack_batches(batches, dim: int) -> np.ndarray:
    if len(batches) == 0:
        raise EmptyBatch("no calibration batches supplied")
    rows = []
    for i, batch in enumerate(batches):
        arr = np.asarray(batch, dtype=np.float64)
        if arr.size == 0:
            raise EmptyBatch(f"calibration batch {i} is empty")
        arr = arr.reshape(-1, dim)
        rows.append(arr)
    return np.concatenate(rows, axis=0)


def calibrate(
    selection: LayerSelection,
    batches: Sequence,
    tolerance: float = DEFAULT_TOLERANCE,
    scale_range: tuple[int, int] = SCALE_RANGE,
    value_range: tuple[int, int] = VALUE_RANGE,
) -> CalibrationConfig:
    """Lexicographically smallest ``(s, B)`` meeting tolerance and range checks."""
    dim = selection.sub_graph.input_dim
    inputs = _stack_batches(batches, dim)
    lo_b, hi_b = value_range
    worst = []
    for s in range(scale_range[0], scale_range[1] + 1):
        probe = probe_scale(selection, inputs, s)
        worst.append(probe)
        if probe.overflow or probe.max_error > tolerance:
            continue
        for b in range(lo_b, hi_b + 1):
            if b >= min_value_bits(selection, probe):
                return CalibrationConfig(
                    scale_bits=s,
                    value_bits=b,
                    tolerance=tolerance,
                    input_visibility=selection.input_visibility,
                    batches_used=len(batches),
                )
    summary = ", ".join(
        f"s={p.scale_bits}: " + ("overflow" if p.overflow else f"err={p.max_error:.3g} B>={p.needed_bits}")
        for p in worst
    )
    raise CalibrationInfeasible(f"no (s, B) in range meets tolerance {tolerance}: {summary}")


def selection_inputs(graph: ComputationGraph, selection: LayerSelection, latents) -> np.ndarray:
    """Float inputs seen by the selected segment for the given graph latents."""
    prefix = graph.layers[: selection.start]
    return np.array([forward_float_layers(prefix, z) for z in latents])


def calibration_batches(
    graph: ComputationGraph,
    selection: LayerSelection,
    n_batches: int = DEFAULT_BATCHES,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
) -> list[np.ndarray]:
    """Default harness: ``n_batches`` x ``batch_size`` seeded latents pushed to the segment input."""
    batches = []
    for b in range(n_batches):
        latents = [
            latent_from_seed((seed << 32) + b * batch_size + i, graph.input_dim)
            for i in range(batch_size)
        ]
        batches.append(selection_inputs(graph, selection, latents))
    return batches
