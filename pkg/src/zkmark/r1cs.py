"""Compile a selected layer segment to a Rank-1 Constraint System.

Wire layout, fixed for determinism::

    [1 | public inputs | private inputs | layer outputs in order | bit wires in order]

Public inputs are the model-digest element and the output-hash element. The
output hash is carried as a public wire but is not constrained in-circuit.

Gadgets, with ``B`` the range-check width and ``s`` the scale:

* Dense at ``s == 0``: one linear row ``(W x + b) * 1 = y`` per output.
* Dense at ``s > 0``: ``(W x + b + 2^(B-1)) * 1 = sum(bit_t 2^t)``, then
  ``q' * 1 = sum_{t>=s}(bit_t 2^(t-s)) - 2^(B-1-s)``, then ``B`` booleanity
  rows. The low ``s`` bits are the floor-division remainder, so ``q'`` is
  exactly ``floor(acc / 2^s)`` and ``acc`` is range-checked to ``B`` bits.
* ReLU: ``(x + 2^(B-1)) * 1 = sum(c_t 2^t)``, ``B`` booleanity rows, and
  ``c_{B-1} * x = y`` (the top bit is set iff ``x >= 0``).
* Identity: no rows; output wires alias the input wires.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import canonical
from .errors import (
    HintOverflow,
    InputScaleMismatch,
    LengthMismatch,
    MalformedGraph,
    UnsupportedLayer,
    WidthOverflow,
)
from .field import DEFAULT_FIELD, PrimeField
from .graph import DENSE, IDENTITY, RELU, FixedPointTensor, trace_fixed
from .slzkcc import CalibrationConfig, LayerSelection

Row = dict  # wire index -> field element
Constraint = tuple  # (A, B, C)

NUM_PUBLIC = 2  # model digest element, output hash element


@dataclass(frozen=True, eq=False)
class R1CSInstance:
    num_wires: int
    num_public: int
    constraints: tuple
    label: str = "custom"
    field: PrimeField = DEFAULT_FIELD

    def __post_init__(self):
        p = self.field.modulus
        rows = tuple(
            tuple({int(k): int(v) % p for k, v in sorted(row.items()) if int(v) % p} for row in c)
            for c in self.constraints
        )
        object.__setattr__(self, "constraints", rows)
        if self.num_public < 0 or self.num_wires < self.num_public + 1:
            raise ValueError("num_wires must cover the constant and public wires")
        for i, c in enumerate(rows):
            if len(c) != 3:
                raise ValueError(f"constraint {i} must have three rows")
            for row in c:
                for k in row:
                    if not 0 <= k < self.num_wires:
                        raise ValueError(f"constraint {i} references wire {k} >= {self.num_wires}")

    def body_json(self) -> dict:
        return {
            "field_modulus": str(self.field.modulus),
            "label": self.label,
            "num_public": self.num_public,
            "num_wires": self.num_wires,
            "constraints": [
                [[[k, str(v)] for k, v in sorted(row.items())] for row in c]
                for c in self.constraints
            ],
        }

    @cached_property
    def canonical_bytes(self) -> bytes:
        return canonical.dumps(self.body_json())

    @cached_property
    def circuit_digest(self) -> str:
        return hashlib.sha256(self.canonical_bytes).hexdigest()

    @property
    def circuit_version(self) -> str:
        return f"{self.label}@{self.circuit_digest[:16]}"

    @property
    def num_constraints(self) -> int:
        return len(self.constraints)

    def to_json(self) -> dict:
        obj = self.body_json()
        obj["circuit_digest"] = self.circuit_digest
        obj["circuit_version"] = self.circuit_version
        return obj

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "R1CSInstance":
        try:
            inst = cls(
                num_wires=int(obj["num_wires"]),
                num_public=int(obj["num_public"]),
                constraints=tuple(
                    tuple({int(k): int(v) for k, v in row} for row in c)
                    for c in obj["constraints"]
                ),
                label=obj["label"],
                field=PrimeField(int(obj["field_modulus"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedGraph(f"bad R1CS instance: {exc}") from exc
        if "circuit_digest" in obj and obj["circuit_digest"] != inst.circuit_digest:
            raise MalformedGraph("R1CS instance digest does not match its contents")
        return inst

    def wires_of(self, index: int) -> set[int]:
        a, b, c = self.constraints[index]
        return set(a) | set(b) | set(c)

    def unconstrained_wires(self) -> set[int]:
        seen: set[int] = set()
        for i in range(self.num_constraints):
            seen |= self.wires_of(i)
        return set(range(self.num_public + 1, self.num_wires)) - seen


@dataclass(frozen=True, eq=False)
class Witness:
    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(v) for v in self.assignment))
        if not self.assignment or self.assignment[0] != 1:
            raise ValueError("witness wire 0 must be the constant 1")

    def __len__(self):
        return len(self.assignment)

    def public_inputs(self, num_public: int) -> list[int]:
        return list(self.assignment[1 : num_public + 1])

    def replace(self, index: int, value: int) -> "Witness":
        vals = list(self.assignment)
        vals[index] = value
        return Witness(tuple(vals))

    def to_json(self) -> dict:
        return {"assignment": [str(v) for v in self.assignment]}

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "Witness":
        return cls(tuple(int(v) for v in obj["assignment"]))


def _dot(row: Row, w: Sequence[int]) -> int:
    return sum(v * w[k] for k, v in row.items())


def check_satisfaction(instance: R1CSInstance, witness: Witness) -> tuple[bool, int | None]:
    """``(True, None)`` if every row holds, else ``(False, first violated index)``."""
    if len(witness) != instance.num_wires:
        raise LengthMismatch(f"witness has {len(witness)} wires, instance {instance.num_wires}")
    w = witness.assignment
    p = instance.field.modulus
    for i, (a, b, c) in enumerate(instance.constraints):
        if (_dot(a, w) * _dot(b, w) - _dot(c, w)) % p:
            return False, i
    return True, None


@dataclass
class _LayerWires:
    kind: str  # "dense0", "dense", "relu", "identity"
    inputs: list[int]
    outputs: list[int]
    bits: list[list[int]]


@dataclass
class CircuitLayout:
    """Wire allocation shared by the compiler and the witness generator."""

    num_public: int
    input_wires: list[int]
    layers: list[_LayerWires]
    num_wires: int

    @property
    def output_wires(self) -> list[int]:
        return self.layers[-1].outputs if self.layers else self.input_wires


def circuit_layout(selection: LayerSelection, calib: CalibrationConfig) -> CircuitLayout:
    s, B = calib.scale_bits, calib.value_bits
    sub = selection.sub_graph
    nxt = 1 + NUM_PUBLIC
    inputs = list(range(nxt, nxt + sub.input_dim))
    nxt += sub.input_dim
    plan: list[_LayerWires] = []
    current = inputs
    for i, layer in enumerate(sub.layers):
        if layer.kind == DENSE:
            outs = list(range(nxt, nxt + layer.out_dim))
            nxt += layer.out_dim
            plan.append(_LayerWires("dense" if s > 0 else "dense0", current, outs, []))
        elif layer.activation == RELU:
            outs = list(range(nxt, nxt + len(current)))
            nxt += len(current)
            plan.append(_LayerWires("relu", current, outs, []))
        elif layer.activation == IDENTITY:
            outs = current
            plan.append(_LayerWires("identity", current, outs, []))
        else:
            raise UnsupportedLayer(f"layer {i} ({layer.kind}) cannot be compiled")
        current = outs
    for lw in plan:
        if lw.kind in ("dense", "relu"):
            for _ in lw.outputs:
                lw.bits.append(list(range(nxt, nxt + B)))
                nxt += B
    return CircuitLayout(NUM_PUBLIC, inputs, plan, nxt)


def compile_r1cs(
    selection: LayerSelection, calib: CalibrationConfig, field: PrimeField = DEFAULT_FIELD
) -> R1CSInstance:
    s, B = calib.scale_bits, calib.value_bits
    has_rescale = s > 0 and any(l.kind == DENSE for l in selection.sub_graph.layers)
    if has_rescale and B <= s:
        raise WidthOverflow(f"value_bits {B} cannot split a remainder of {s} bits")
    if 2 * (1 << B) >= field.modulus:
        raise WidthOverflow(f"value_bits {B} too wide for a {field.modulus.bit_length()}-bit field")
    layout = circuit_layout(selection, calib)
    half = 1 << (B - 1)
    rows: list[Constraint] = []
    one = {0: 1}
    for layer, lw in zip(selection.sub_graph.layers, layout.layers):
        if lw.kind in ("dense0", "dense"):
            w, b = layer.fixed_params(s)
            for j, y in enumerate(lw.outputs):
                lin = {x: int(w[j, i]) for i, x in enumerate(lw.inputs) if int(w[j, i])}
                if lw.kind == "dense0":
                    lin[0] = int(b[j])
                    rows.append((lin, one, {y: 1}))
                    continue
                bits = lw.bits[j]
                lin[0] = int(b[j]) + half
                rows.append((lin, one, {bt: 1 << t for t, bt in enumerate(bits)}))
                hi = {bt: 1 << (t - s) for t, bt in enumerate(bits) if t >= s}
                hi[0] = -(1 << (B - 1 - s))
                rows.append(({y: 1}, one, hi))
                rows.extend(({bt: 1}, {bt: 1, 0: -1}, {}) for bt in bits)
        elif lw.kind == "relu":
            for j, (x, y) in enumerate(zip(lw.inputs, lw.outputs)):
                bits = lw.bits[j]
                rows.append(({x: 1, 0: half}, one, {bt: 1 << t for t, bt in enumerate(bits)}))
                rows.extend(({bt: 1}, {bt: 1, 0: -1}, {}) for bt in bits)
                rows.append(({bits[-1]: 1}, {x: 1}, {y: 1}))
    label = f"{selection.sub_graph.model_id}:s{s}:b{B}"
    return R1CSInstance(layout.num_wires, NUM_PUBLIC, tuple(rows), label, field)


def model_digest_element(selection: LayerSelection, field: PrimeField = DEFAULT_FIELD) -> int:
    return field.from_digest(bytes.fromhex(selection.sub_graph.model_digest))


def output_hash_element(output: FixedPointTensor, field: PrimeField = DEFAULT_FIELD) -> int:
    return field.from_digest(hashlib.sha256(canonical.dumps(output.to_json())).digest())


def segment_output(
    selection: LayerSelection, calib: CalibrationConfig, private_inputs: FixedPointTensor
) -> FixedPointTensor:
    trace = trace_fixed(selection.sub_graph.layers, private_inputs.data, calib.scale_bits)
    out = trace[-1].outputs if trace else private_inputs.data
    return FixedPointTensor((out.size,), out, calib.scale_bits)


def public_inputs_for(
    selection: LayerSelection,
    calib: CalibrationConfig,
    private_inputs: FixedPointTensor,
    field: PrimeField = DEFAULT_FIELD,
) -> list[int]:
    out = segment_output(selection, calib, private_inputs)
    return [model_digest_element(selection, field), output_hash_element(out, field)]


def _bits_of(v: int, B: int, where: str) -> list[int]:
    u = v + (1 << (B - 1))
    if not 0 <= u < (1 << B):
        raise HintOverflow(f"{where}: value {v} does not fit {B} signed bits")
    return [(u >> t) & 1 for t in range(B)]


def gen_witness(
    instance: R1CSInstance,
    selection: LayerSelection,
    calib: CalibrationConfig,
    private_inputs: FixedPointTensor,
    public_inputs: Sequence[int],
) -> Witness:
    s, B = calib.scale_bits, calib.value_bits
    if private_inputs.scale_bits != s:
        raise InputScaleMismatch(
            f"private inputs at scale {private_inputs.scale_bits}, calibration at {s}"
        )
    if len(private_inputs) != selection.sub_graph.input_dim:
        raise LengthMismatch(
            f"{len(private_inputs)} private inputs for a {selection.sub_graph.input_dim}-wide segment"
        )
    if len(public_inputs) != instance.num_public:
        raise LengthMismatch(f"{len(public_inputs)} public inputs, circuit has {instance.num_public}")
    layout = circuit_layout(selection, calib)
    if layout.num_wires != instance.num_wires:
        raise LengthMismatch("instance was not compiled from this selection and calibration")
    field = instance.field
    w = [0] * layout.num_wires
    w[0] = 1
    for i, v in enumerate(public_inputs):
        w[1 + i] = int(v) % field.modulus
    x = private_inputs.data
    for wire, v in zip(layout.input_wires, x):
        w[wire] = field.embed(int(v))
    trace = trace_fixed(selection.sub_graph.layers, np.asarray(x, dtype=np.int64), s)
    for n, (lt, lw) in enumerate(zip(trace, layout.layers)):
        for wire, v in zip(lw.outputs, lt.outputs):
            w[wire] = field.embed(int(v))
        if lw.kind == "dense":
            for j, acc in enumerate(lt.acc):
                for bt, bit in zip(lw.bits[j], _bits_of(int(acc), B, f"layer {n} accumulator")):
                    w[bt] = bit
        elif lw.kind == "relu":
            for j, v in enumerate(lt.inputs):
                for bt, bit in zip(lw.bits[j], _bits_of(int(v), B, f"layer {n} relu input")):
                    w[bt] = bit
    return Witness(tuple(w))


def witness_outputs(layout: CircuitLayout, witness: Witness, field: PrimeField = DEFAULT_FIELD) -> list[int]:
    """Signed values on the segment's output wires."""
    return [field.to_signed(witness.assignment[k]) for k in layout.output_wires]
