import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zkmark.errors import CalibrationInfeasible, EmptyBatch, NoBottleneckTag, PolicyMismatch, SelectionOutOfRange
from zkmark.fixtures import toy_autoencoder, toy_gan
from zkmark.graph import ComputationGraph, FixedPointTensor, Layer, forward_fixed, forward_float_layers, trace_fixed
from zkmark.slzkcc import (
    AeBottleneck,
    CalibrationConfig,
    GanPrefix,
    calibrate,
    parse_policy,
    passes,
    select_layers,
    selection_inputs,
)


def test_gan_prefix_selects_latent_projection():
    sel = select_layers(toy_gan(), GanPrefix(1))
    assert sel.selected_indices == (0,)
    assert sel.sub_graph.input_dim == 8 and sel.sub_graph.output_shape == (16,)


def test_full_prefix_is_whole_graph():
    g = toy_gan()
    sel = select_layers(g, GanPrefix(g.depth))
    assert [l.to_json() for l in sel.sub_graph.layers] == [l.to_json() for l in g.layers]


def test_ae_bottleneck_selects_tag_plus_activation():
    g = toy_autoencoder()
    assert "bottleneck" in g.layers[2].tags
    sel = select_layers(g, AeBottleneck())
    assert sel.selected_indices == (2, 3)
    assert sel.sub_graph.input_dim == g.layers[2].in_dim


@pytest.mark.parametrize(
    "graph, policy, err",
    [
        (toy_gan(), AeBottleneck(), PolicyMismatch),
        (toy_autoencoder(), GanPrefix(1), PolicyMismatch),
        (toy_gan(), GanPrefix(0), SelectionOutOfRange),
        (toy_gan(), GanPrefix(5), SelectionOutOfRange),
    ],
)
def test_selection_preconditions(graph, policy, err):
    with pytest.raises(err):
        select_layers(graph, policy)


def test_missing_bottleneck_tag():
    g = ComputationGraph("ae", "Autoencoder", 2, (Layer.dense([[1, 0], [0, 1]], [0, 0]),), (2,))
    with pytest.raises(NoBottleneckTag):
        select_layers(g, AeBottleneck())


def test_parse_policy():
    assert parse_policy("gan-prefix") == GanPrefix(1)
    assert parse_policy("gan-prefix:3") == GanPrefix(3)
    assert parse_policy("ae-bottleneck") == AeBottleneck()
    with pytest.raises(ValueError):
        parse_policy("everything")


def test_identity_subgraph_calibrates_to_minimum_scale():
    g = ComputationGraph("id", "GAN", 4, (Layer.act("Identity"),), (4,))
    sel = select_layers(g, GanPrefix(1))
    rng = np.random.default_rng(0)
    calib = calibrate(sel, [rng.uniform(-1, 1, (8, 4))], tolerance=2.0**-4)
    assert calib.scale_bits == 4


def test_identity_is_exact_so_only_quantization_counts():
    # identity is exact on already-quantized inputs; max error is the input rounding
    g = ComputationGraph("id", "GAN", 2, (Layer.act("Identity"),), (2,))
    sel = select_layers(g, GanPrefix(1))
    calib = calibrate(sel, [[[0.25, -0.5]]], tolerance=0.0)
    assert calib.scale_bits == 4


def test_integer_dense_tolerance_zero_matches_exhaustive_search():
    w = [[3, -1], [2, 5]]
    g = ComputationGraph("int", "GAN", 2, (Layer.dense(w, [1, -2]), Layer.act("Identity")), (2,))
    sel = select_layers(g, GanPrefix(2))
    batch = [[1, 2], [-3, 4], [0, 0], [7, -7]]
    calib = calibrate(sel, [batch], tolerance=0.0)

    def exact_at(s):
        for x in batch:
            out = forward_fixed(g, FixedPointTensor.from_real(x, s), s).to_real()
            if not np.array_equal(out, forward_float_layers(g.layers, x)):
                return False
        return True

    assert calib.scale_bits == min(s for s in range(4, 17) if exact_at(s))


def test_overflow_everywhere_is_infeasible():
    big = 2**40
    g = ComputationGraph("big", "GAN", 2, (Layer.dense([[big, big], [big, big]], [0, 0]),), (2,))
    sel = select_layers(g, GanPrefix(1))
    with pytest.raises(CalibrationInfeasible):
        calibrate(sel, [[[1.0, 1.0]]])


def test_empty_batches():
    sel = select_layers(toy_gan(), GanPrefix(1))
    with pytest.raises(EmptyBatch):
        calibrate(sel, [])
    with pytest.raises(EmptyBatch):
        calibrate(sel, [np.zeros((0, 8))])


def test_fixture_calibration_meets_tolerance_and_ranges(model):
    inputs = np.concatenate(model.batches)
    s, B = model.calib.scale_bits, model.calib.value_bits
    layers = model.selection.sub_graph.layers
    for x in inputs:
        xq = FixedPointTensor.from_real(x, s)
        trace = trace_fixed(layers, xq.data, s)
        err = np.abs(trace[-1].outputs / 2**s - forward_float_layers(layers, x))
        assert err.max() <= model.calib.tolerance
        for lt in trace:
            for arr in (lt.inputs, lt.acc, lt.outputs):
                if arr is not None:
                    assert arr.min() >= -(2 ** (B - 1)) and arr.max() < 2 ** (B - 1)


def test_calibration_is_lexicographic_minimum(model):
    inputs = np.concatenate(model.batches)
    s, B = model.calib.scale_bits, model.calib.value_bits
    assert not passes(model.selection, inputs, s, B - 1, model.calib.tolerance)
    for smaller in range(4, s):
        assert not any(passes(model.selection, inputs, smaller, b, model.calib.tolerance) for b in (B, 48))


@settings(max_examples=15)
@given(st.integers(0, 4), st.integers(0, 6))
def test_value_bits_monotone(ds, db):
    g = toy_gan()
    sel = select_layers(g, GanPrefix(1))
    inputs = selection_inputs(g, sel, [np.linspace(-1, 1, 8) * (i / 5) for i in range(6)])
    s, B = 8 + ds, 16 + db
    if passes(sel, inputs, s, B, 2.0**-6):
        assert passes(sel, inputs, s, B + 1, 2.0**-6)


def test_prefix_consistency():
    g = toy_gan()
    sel = select_layers(g, GanPrefix(2))
    z = np.linspace(-1, 1, 8)
    s = 10
    zq = FixedPointTensor.from_real(z, s)
    full = trace_fixed(g.layers, zq.data, s)
    sub = trace_fixed(sel.sub_graph.layers, zq.data, s)
    assert np.array_equal(full[1].outputs, sub[-1].outputs)


def test_calibration_determinism_and_round_trip(gan):
    again = calibrate(gan.selection, gan.batches)
    assert again.to_bytes() == gan.calib.to_bytes()
    assert CalibrationConfig.from_bytes(gan.calib.to_bytes()) == gan.calib
