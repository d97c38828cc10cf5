import hashlib
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zkmark import merkle
from zkmark.errors import EmptyCircuit, MalformedBundle, UnsatisfiedWitness
from zkmark.graph import FixedPointTensor
from zkmark.proof import (
    SCHEME,
    ZERO_KNOWLEDGE,
    ProofBundle,
    ProvingKey,
    VerificationKey,
    _build_proof,
    derive_challenges,
    parse_proof,
    prove,
    prove_segment,
    setup,
    transcript_seed,
    verify,
)
from zkmark.r1cs import R1CSInstance, Witness, compile_r1cs, gen_witness, public_inputs_for
from zkmark.soundness import run_trials

from . import oracles
from .test_r1cs import IDENTITY, S0, witness_for


@pytest.fixture(scope="module")
def ident():
    inst, w = witness_for(IDENTITY, S0, [5, 9])
    pk, vk = setup(inst, 16)
    return inst, w, pk, vk


def honest(model, i=0):
    x = FixedPointTensor.from_real(np.concatenate(model.batches)[i], model.calib.scale_bits)
    return prove_segment(model.pk, model.selection, model.calib, x)


def test_setup_digest_matches_sha256_oracle(ident):
    inst, _, _, vk = ident
    assert vk.circuit_digest == hashlib.sha256(inst.canonical_bytes).hexdigest()
    assert vk.num_challenges == 16 and vk.scheme == SCHEME


def test_setup_is_deterministic(ident):
    inst = ident[0]
    a, b = setup(inst, 16), setup(inst, 16)
    assert a[0].to_bytes() == b[0].to_bytes() and a[1].to_bytes() == b[1].to_bytes()


def test_setup_rejects_zero_challenges(ident):
    with pytest.raises(ValueError):
        setup(ident[0], 0)


def test_keys_round_trip(gan):
    assert VerificationKey.from_bytes(gan.vk.to_bytes()).to_bytes() == gan.vk.to_bytes()
    assert ProvingKey.from_json(gan.pk.to_json()).to_bytes() == gan.pk.to_bytes()


def test_identity_completeness_and_determinism(ident):
    _, w, pk, vk = ident
    a, b = prove(pk, w), prove(pk, w)
    assert verify(vk, a) and a.to_bytes() == b.to_bytes()


def test_prove_refuses_falsehoods(ident):
    _, w, pk, _ = ident
    with pytest.raises(UnsatisfiedWitness):
        prove(pk, w.replace(5, 6))


def test_prove_refuses_empty_circuit():
    pk, _ = setup(R1CSInstance(3, 1, ()), 4)
    with pytest.raises(EmptyCircuit):
        prove(pk, Witness((1, 0, 0)))


def test_fixture_completeness(model):
    inputs = np.concatenate(model.batches)
    rng = np.random.default_rng(4)
    for x in rng.uniform(-1, 1, (100, inputs.shape[1])) if model.selection.start == 0 else inputs[:80]:
        bundle = prove_segment(model.pk, model.selection, model.calib, FixedPointTensor.from_real(x, model.calib.scale_bits))
        assert verify(model.vk, bundle)


def test_ae_completeness_on_fresh_latents(ae):
    from zkmark.pipeline import generate

    for seed in range(100, 120):
        gen = generate(ae.graph, ae.selection, ae.calib, seed)
        assert verify(ae.vk, prove_segment(ae.pk, ae.selection, ae.calib, gen.segment_input))


def test_flip_root_byte_is_bad_authentication(ident):
    _, w, pk, vk = ident
    b = prove(pk, w)
    proof = bytes([b.proof[0] ^ 1]) + b.proof[1:]
    r = verify(vk, ProofBundle(b.scheme, b.circuit_version, proof, b.public_inputs))
    assert not r and r.reason == "BadAuthentication"


def test_rejection_reasons(gan):
    b = honest(gan)
    pp = parse_proof(b.proof, gan.instance.field)

    def with_proof(data):
        return verify(gan.vk, ProofBundle(b.scheme, b.circuit_version, data, b.public_inputs)).reason

    # challenge list edited: Merkle data intact, transcript disagrees
    off = 32 + 4
    c0 = (pp.challenges[0] + 1) % gan.instance.num_constraints
    assert with_proof(b.proof[:off] + struct.pack("<I", c0) + b.proof[off + 4 :]) == "TranscriptMismatch"
    # opened value edited
    k = len(pp.challenges)
    val_off = 32 + 4 + 4 * k + 4 + 4
    edited = bytearray(b.proof)
    edited[val_off] ^= 1
    assert with_proof(bytes(edited)) == "BadAuthentication"
    assert with_proof(b.proof[:-1]) == "MalformedProof"
    assert with_proof(b.proof + b"\x00") == "MalformedProof"
    assert with_proof(b"") == "MalformedProof"
    pub = (b.public_inputs[0], str((int(b.public_inputs[1]) + 1) % gan.instance.field.modulus))
    assert verify(gan.vk, ProofBundle(b.scheme, b.circuit_version, b.proof, pub)).reason == "BadAuthentication"
    assert verify(gan.vk, ProofBundle("other", b.circuit_version, b.proof, b.public_inputs)).reason == "SchemeMismatch"
    assert verify(gan.vk, ProofBundle(b.scheme, "x@0", b.proof, b.public_inputs)).reason == "VersionMismatch"
    assert verify(gan.vk, ProofBundle(b.scheme, b.circuit_version, b.proof, ("1",))).reason == "MalformedProof"


def test_forged_consistent_proof_is_caught_when_row_is_challenged(gan):
    x = FixedPointTensor.from_real(np.concatenate(gan.batches)[0], gan.calib.scale_bits)
    w = gen_witness(gan.instance, gan.selection, gan.calib, x, public_inputs_for(gan.selection, gan.calib, x))
    # break every output wire: each output's rescale row is violated
    from zkmark.r1cs import circuit_layout

    bad = w
    for wire in circuit_layout(gan.selection, gan.calib).output_wires:
        bad = bad.replace(wire, bad.assignment[wire] + 1)
    r = verify(gan.vk, _build_proof(gan.pk, bad))
    assert not r and r.reason == "ConstraintViolated"


def test_proof_size_matches_accounting_oracle(gan):
    b = honest(gan)
    inst = gan.instance
    pp = parse_proof(b.proof, inst.field)
    wires = set()
    for i in set(pp.challenges):
        for row in inst.constraints[i]:
            wires |= set(row)
    opened = sorted(w for w in wires if w > inst.num_public)
    known = set(range(inst.num_public + 1)) | set(opened)
    depth = (inst.num_wires - 1).bit_length()
    nodes = oracles.multiproof_node_count(known, depth)
    k = len(pp.challenges)
    want = 32 + 4 + 4 * k + 4 + len(opened) * (4 + inst.field.value_bytes) + 4 + 32 * nodes
    assert len(b.proof) == want
    # coarse model: per-challenge support times one authentication path each
    avg_support = np.mean([len(inst.wires_of(i)) for i in range(inst.num_constraints)])
    assert len(b.proof) <= k * avg_support * (32 * depth + 12) + 64


def test_bundle_round_trip(model):
    b = honest(model)
    assert ProofBundle.from_bytes(b.to_bytes()) == b
    assert ProofBundle.from_bytes(b.to_bytes()).to_bytes() == b.to_bytes()


@pytest.mark.parametrize(
    "data",
    [b"[]", b"{}", b'{"scheme":"fs-merkle-v1"}', b"\xff", b'{"circuit_version":"a","proof":"zz","public_inputs":[],"scheme":"s"}'],
)
def test_bundle_parse_errors(data):
    with pytest.raises(MalformedBundle):
        ProofBundle.from_bytes(data)


def test_transcript_binding():
    rng = np.random.default_rng(7)
    digest = "ab" * 32
    root = bytes(range(32))
    from zkmark.field import DEFAULT_FIELD as F

    for _ in range(100):
        pub = [int(v) for v in rng.integers(0, 2**60, 2)]
        other = [pub[0], (pub[1] + int(rng.integers(1, 2**40))) % F.modulus]
        a = derive_challenges(transcript_seed(digest, root, pub, F), 320, 64)
        b = derive_challenges(transcript_seed(digest, root, other, F), 320, 64)
        assert a != b


@settings(max_examples=30)
@given(st.binary(min_size=1, max_size=64), st.integers(1, 1000), st.integers(1, 200))
def test_challenges_in_range(seed, m, k):
    cs = derive_challenges(seed, m, k)
    assert len(cs) == k and all(0 <= c < m for c in cs)


def test_challenges_roughly_uniform():
    from scipy.stats import chisquare

    cs = derive_challenges(b"uniformity", 10, 20000)
    assert chisquare(np.bincount(cs, minlength=10)).pvalue > 1e-4


def test_soundness_quarter_violated_k16():
    res = run_trials(m=64, violated=16, k=16, trials=400)
    lo, hi = oracles.binomial_interval(400, res.bound)
    assert lo <= res.accepted <= hi, (res.accepted, lo, hi)


def test_merkle_multiproof_detects_node_swap():
    leaves = [merkle.leaf_hash(i, bytes([i])) for i in range(11)]
    levels = merkle.build_levels(leaves)
    idx = [0, 3, 7]
    nodes = merkle.multiproof(levels, idx)
    depth = merkle.tree_depth(11)
    assert merkle.multiproof_root({i: leaves[i] for i in idx}, nodes, depth) == levels[-1][0]
    assert merkle.multiproof_root({i: leaves[i] for i in idx}, nodes[::-1], depth) != levels[-1][0]


def test_backend_is_documented_as_not_zero_knowledge():
    assert ZERO_KNOWLEDGE is False
