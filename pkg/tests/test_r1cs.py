import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zkmark.errors import InputScaleMismatch, LengthMismatch, MalformedGraph, WidthOverflow
from zkmark.field import BN254_SCALAR, DEFAULT_FIELD, PrimeField
from zkmark.graph import ComputationGraph, FixedPointTensor, Layer, forward_float_layers, trace_fixed
from zkmark.r1cs import (
    NUM_PUBLIC,
    R1CSInstance,
    Witness,
    check_satisfaction,
    circuit_layout,
    compile_r1cs,
    gen_witness,
    public_inputs_for,
    witness_outputs,
)
from zkmark.slzkcc import CalibrationConfig, GanPrefix, calibrate, select_layers

from . import oracles


def segment(w, b, acts=(), s_w=0):
    layers = [Layer.dense(w, b, s_w)] + [Layer.act(a) for a in acts]
    g = ComputationGraph("seg", "GAN", len(w[0]), tuple(layers), (len(w),))
    return select_layers(g, GanPrefix(len(layers)))


IDENTITY = segment([[1, 0], [0, 1]], [0, 0])
S0 = CalibrationConfig(0, 16)


def witness_for(sel, calib, x, inst=None):
    inst = inst or compile_r1cs(sel, calib)
    xq = FixedPointTensor((len(x),), x, calib.scale_bits)
    return inst, gen_witness(inst, sel, calib, xq, public_inputs_for(sel, calib, xq))


def test_identity_circuit_shape():
    inst = compile_r1cs(IDENTITY, S0)
    assert inst.num_constraints == 2 and inst.num_wires == 1 + NUM_PUBLIC + 4
    _, w = witness_for(IDENTITY, S0, [5, 9], inst)
    assert w.assignment[3:] == (5, 9, 5, 9)
    assert check_satisfaction(inst, w) == (True, None)


def test_hand_arithmetic_and_mutation():
    sel = segment([[1, 2], [3, 4]], [0, 0])
    inst, w = witness_for(sel, S0, [1, 1])
    y = circuit_layout(sel, S0).output_wires
    assert [w.assignment[k] for k in y] == [3, 7]
    assert check_satisfaction(inst, w.replace(y[0], 4)) == (False, 0)


def test_zero_witness_on_identity():
    inst = compile_r1cs(IDENTITY, S0)
    w = Witness((1,) + (0,) * (inst.num_wires - 1))
    assert check_satisfaction(inst, w) == (True, None)


def test_exhaustive_single_wire_mutation_on_identity():
    inst, w = witness_for(IDENTITY, S0, [5, 9])
    layout = circuit_layout(IDENTITY, S0)
    # defining constraint of output j is row j
    for j, wire in enumerate(layout.output_wires):
        bad = w.replace(wire, w.assignment[wire] + 1)
        assert check_satisfaction(inst, bad) == (False, j)
    for j, wire in enumerate(layout.input_wires):
        ok, idx = check_satisfaction(inst, w.replace(wire, w.assignment[wire] + 1))
        assert not ok and idx == j


def test_gan_constraint_count_matches_oracle(gan):
    sub = gan.selection.sub_graph
    kinds = [l.kind if l.kind == "Dense" else l.activation for l in sub.layers]
    widths = []
    width = sub.input_dim
    for l in sub.layers:
        width = l.out_dim if l.kind == "Dense" else width
        widths.append(width)
    B, s = gan.calib.value_bits, gan.calib.scale_bits
    want = oracles.constraint_count(kinds, widths, B, s)
    assert gan.instance.num_constraints == want
    out = sub.layers[0].out_dim
    assert want == out * (1 + 1) + out * B


def test_ae_constraint_count_matches_oracle(ae):
    sub = ae.selection.sub_graph
    out = sub.layers[0].out_dim
    B = ae.calib.value_bits
    assert [l.activation for l in sub.layers[1:]] == ["ReLU"]
    assert ae.instance.num_constraints == out * (2 + B) + out * (B + 2)


def test_no_unconstrained_wires(model):
    assert model.instance.unconstrained_wires() == set()


def test_random_single_wire_perturbations_break_fixture_circuits(model):
    rng = np.random.default_rng(1)
    x = FixedPointTensor.from_real(np.concatenate(model.batches)[0], model.calib.scale_bits)
    w = gen_witness(model.instance, model.selection, model.calib, x, public_inputs_for(model.selection, model.calib, x))
    p = model.instance.field.modulus
    assert check_satisfaction(model.instance, w)[0]
    for wire in range(1 + NUM_PUBLIC, model.instance.num_wires):
        delta = int(rng.integers(1, p))
        bad = w.replace(wire, (w.assignment[wire] + delta) % p)
        assert not check_satisfaction(model.instance, bad)[0], wire


def test_random_dense_relu_witnesses_satisfy():
    rng = np.random.default_rng(2)
    w = np.rint(rng.uniform(-1, 1, (16, 8)) * 256).astype(int).tolist()
    b = np.rint(rng.uniform(-0.5, 0.5, 16) * 256).astype(int).tolist()
    sel = segment(w, b, ["ReLU"], s_w=8)
    calib = calibrate(sel, [rng.uniform(-1, 1, (50, 8))])
    inst = compile_r1cs(sel, calib)
    for x in rng.uniform(-1, 1, (50, 8)):
        xq = FixedPointTensor.from_real(x, calib.scale_bits)
        wit = gen_witness(inst, sel, calib, xq, public_inputs_for(sel, calib, xq))
        assert check_satisfaction(inst, wit) == (True, None)


def test_outputs_match_fixed_and_float(model):
    layout = circuit_layout(model.selection, model.calib)
    s = model.calib.scale_bits
    layers = model.selection.sub_graph.layers
    rng = np.random.default_rng(3)
    inputs = np.concatenate(model.batches)
    for x in inputs[rng.choice(len(inputs), 20, replace=False)]:
        xq = FixedPointTensor.from_real(x, s)
        wit = gen_witness(model.instance, model.selection, model.calib, xq, public_inputs_for(model.selection, model.calib, xq))
        out = witness_outputs(layout, wit)
        assert out == trace_fixed(layers, xq.data, s)[-1].outputs.tolist()
        assert np.max(np.abs(np.array(out) / 2**s - forward_float_layers(layers, x))) <= model.calib.tolerance


def test_input_scale_mismatch(gan):
    x = FixedPointTensor.from_real(np.zeros(8), gan.calib.scale_bits + 1)
    with pytest.raises(InputScaleMismatch):
        gen_witness(gan.instance, gan.selection, gan.calib, x, [0, 0])


def test_length_mismatch(gan):
    x = FixedPointTensor.from_real(np.zeros(7), gan.calib.scale_bits)
    with pytest.raises(LengthMismatch):
        gen_witness(gan.instance, gan.selection, gan.calib, x, [0, 0])
    with pytest.raises(LengthMismatch):
        check_satisfaction(gan.instance, Witness((1, 2)))


def test_width_overflow():
    with pytest.raises(WidthOverflow):
        compile_r1cs(IDENTITY, CalibrationConfig(8, 8))
    with pytest.raises(WidthOverflow):
        compile_r1cs(IDENTITY, CalibrationConfig(0, 61))


def test_bn254_field_is_supported(gan):
    inst = compile_r1cs(gan.selection, gan.calib, PrimeField(BN254_SCALAR))
    x = FixedPointTensor.from_real(np.linspace(-1, 1, 8), gan.calib.scale_bits)
    pub = public_inputs_for(gan.selection, gan.calib, x, inst.field)
    assert check_satisfaction(inst, gen_witness(inst, gan.selection, gan.calib, x, pub))[0]
    assert inst.circuit_digest != gan.instance.circuit_digest


def test_compile_is_deterministic_and_round_trips(gan):
    again = compile_r1cs(gan.selection, gan.calib)
    assert again.canonical_bytes == gan.instance.canonical_bytes
    back = R1CSInstance.from_json(gan.instance.to_json())
    assert back.circuit_digest == gan.instance.circuit_digest


def test_instance_json_digest_is_checked(gan):
    obj = gan.instance.to_json()
    obj["circuit_digest"] = "0" * 64
    with pytest.raises(MalformedGraph):
        R1CSInstance.from_json(obj)


def test_wire_index_bound():
    with pytest.raises(ValueError):
        R1CSInstance(3, 1, (({5: 1}, {0: 1}, {}),))


def test_witness_json_round_trip(gan):
    _, w = witness_for(gan.selection, gan.calib, [3] * 8, gan.instance)
    assert Witness.from_json(w.to_json()).assignment == w.assignment


@settings(max_examples=40)
@given(st.lists(st.integers(-500, 500), min_size=2, max_size=2))
def test_identity_completeness_property(x):
    inst, w = witness_for(IDENTITY, S0, x)
    assert check_satisfaction(inst, w)[0]


@given(st.integers(-(2**60) + 1, 2**60 - 1))
def test_field_embed_round_trip(v):
    assert DEFAULT_FIELD.to_signed(DEFAULT_FIELD.embed(v)) == v
