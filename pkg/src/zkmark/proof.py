"""Reference proving backend: Merkle commitment plus Fiat-Shamir spot checks.

The prover commits to the full witness, derives ``k`` constraint indices from
a SHA-256 transcript over ``circuit_digest || root || public inputs``, and
opens every wire those constraints touch. The verifier re-derives the indices
and checks the opened rows.

This backend is transparent, complete, and sound with acceptance probability
at most ``(1 - f)^k`` for a witness violating a fraction ``f`` of rows. It is
neither zero-knowledge (openings reveal witness entries) nor succinct. Other
backends can stand behind the same ``setup``/``prove``/``verify`` contract.

Proof byte layout (little-endian integers)::

    root[32] | k:u32 | k x index:u32 | n:u32 | n x (wire:u32, value[w]) | t:u32 | t x node[32]

``w`` is the field's value width (8 bytes below 2^64). Public wires are never
opened; the verifier rebuilds their leaves from the bundle's public inputs.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from typing import Sequence

from . import canonical, merkle
from .errors import EmptyCircuit, MalformedBundle, UnsatisfiedWitness
from .field import PrimeField
from .graph import FixedPointTensor
from .r1cs import (
    R1CSInstance,
    Witness,
    check_satisfaction,
    gen_witness,
    public_inputs_for,
)
from .slzkcc import CalibrationConfig, LayerSelection

SCHEME = "fs-merkle-v1"
HASH_ID = "sha256"
DEFAULT_CHALLENGES = 64
ZERO_KNOWLEDGE = False  # openings reveal witness entries


@dataclass(frozen=True, eq=False)
class ProvingKey:
    instance: R1CSInstance
    num_challenges: int = DEFAULT_CHALLENGES
    merkle_arity: int = 2
    hash_id: str = HASH_ID

    def to_json(self) -> dict:
        return {
            "scheme": SCHEME,
            "hash_id": self.hash_id,
            "merkle_arity": self.merkle_arity,
            "num_challenges": self.num_challenges,
            "instance": self.instance.to_json(),
        }

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "ProvingKey":
        return cls(
            instance=R1CSInstance.from_json(obj["instance"]),
            num_challenges=int(obj["num_challenges"]),
            merkle_arity=int(obj["merkle_arity"]),
            hash_id=obj["hash_id"],
        )


@dataclass(frozen=True, eq=False)
class VerificationKey:
    """Public verification material.

    The reference verifier evaluates challenged rows directly, so the key
    carries the constraint system alongside its digest.
    """

    instance: R1CSInstance
    num_challenges: int = DEFAULT_CHALLENGES
    hash_id: str = HASH_ID
    scheme: str = SCHEME

    @property
    def circuit_digest(self) -> str:
        return self.instance.circuit_digest

    @property
    def circuit_version(self) -> str:
        return self.instance.circuit_version

    @property
    def num_wires(self) -> int:
        return self.instance.num_wires

    @property
    def num_public(self) -> int:
        return self.instance.num_public

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "hash_id": self.hash_id,
            "num_challenges": self.num_challenges,
            "circuit_digest": self.circuit_digest,
            "circuit_version": self.circuit_version,
            "num_wires": self.num_wires,
            "num_public": self.num_public,
            "instance": self.instance.to_json(),
        }

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "VerificationKey":
        vk = cls(
            instance=R1CSInstance.from_json(obj["instance"]),
            num_challenges=int(obj["num_challenges"]),
            hash_id=obj["hash_id"],
            scheme=obj["scheme"],
        )
        if obj.get("circuit_digest", vk.circuit_digest) != vk.circuit_digest:
            raise MalformedBundle("verification key digest does not match its circuit")
        return vk

    @classmethod
    def from_bytes(cls, data: bytes) -> "VerificationKey":
        return cls.from_json(canonical.loads(data))


def setup(instance: R1CSInstance, k: int = DEFAULT_CHALLENGES) -> tuple[ProvingKey, VerificationKey]:
    """Transparent setup: both keys are pure functions of the circuit and ``k``."""
    if k < 1:
        raise ValueError(f"challenge count must be at least 1, got {k}")
    return ProvingKey(instance, k), VerificationKey(instance, k)


_BUNDLE_KEYS = {"scheme", "circuit_version", "proof", "public_inputs"}


@dataclass(frozen=True)
class ProofBundle:
    scheme: str
    circuit_version: str
    proof: bytes
    public_inputs: tuple[str, ...]
    signature: str | None = None

    def to_json(self) -> dict:
        obj = {
            "scheme": self.scheme,
            "circuit_version": self.circuit_version,
            "proof": self.proof.hex(),
            "public_inputs": list(self.public_inputs),
        }
        if self.signature is not None:
            obj["signature"] = self.signature
        return obj

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @classmethod
    def from_json(cls, obj) -> "ProofBundle":
        if not isinstance(obj, dict):
            raise MalformedBundle("bundle must be a JSON object")
        keys = set(obj)
        if not _BUNDLE_KEYS <= keys or keys - _BUNDLE_KEYS - {"signature"}:
            raise MalformedBundle(f"unexpected bundle keys {sorted(keys)}")
        pubs = obj["public_inputs"]
        if not isinstance(pubs, list) or not all(isinstance(v, str) and v.isdigit() for v in pubs):
            raise MalformedBundle("public_inputs must be decimal strings")
        sig = obj.get("signature")
        if sig is not None and not (
            isinstance(sig, str) and len(sig) == 64 and all(c in "0123456789abcdef" for c in sig)
        ):
            raise MalformedBundle("signature must be 64 lowercase hex characters")
        if not all(isinstance(obj[k], str) for k in ("scheme", "circuit_version", "proof")):
            raise MalformedBundle("scheme, circuit_version and proof must be strings")
        try:
            proof = bytes.fromhex(obj["proof"])
        except ValueError as exc:
            raise MalformedBundle("proof is not valid hex") from exc
        return cls(obj["scheme"], obj["circuit_version"], proof, tuple(pubs), sig)

    @classmethod
    def from_bytes(cls, data: bytes) -> "ProofBundle":
        try:
            obj = canonical.loads(data)
        except (UnicodeDecodeError, ValueError) as exc:
            raise MalformedBundle(f"bundle is not JSON: {exc}") from exc
        return cls.from_json(obj)

    def without_signature(self) -> "ProofBundle":
        return replace(self, signature=None)


def transcript_seed(circuit_digest: str, root: bytes, public_inputs: Sequence[int], field: PrimeField) -> bytes:
    return bytes.fromhex(circuit_digest) + root + b"".join(field.encode(v) for v in public_inputs)


def derive_challenges(seed: bytes, num_constraints: int, k: int) -> list[int]:
    """``k`` indices uniform in ``[0, num_constraints)`` by rejection sampling.

    The stream is ``SHA-256(seed || LE64(counter))`` read as little-endian u64 words.
    """
    limit = (1 << 64) - (1 << 64) % num_constraints
    out: list[int] = []
    counter = 0
    while len(out) < k:
        block = hashlib.sha256(seed + counter.to_bytes(8, "little")).digest()
        counter += 1
        for off in range(0, 32, 8):
            v = int.from_bytes(block[off : off + 8], "little")
            if v < limit:
                out.append(v % num_constraints)
                if len(out) == k:
                    break
    return out


def required_openings(instance: R1CSInstance, challenges: Sequence[int]) -> list[int]:
    wires: set[int] = set()
    for i in set(challenges):
        wires |= instance.wires_of(i)
    return sorted(w for w in wires if w > instance.num_public)


def _leaf(field: PrimeField, index: int, value: int) -> bytes:
    return merkle.leaf_hash(index, field.encode(value))


def _build_proof(pk: ProvingKey, witness: Witness) -> ProofBundle:
    inst = pk.instance
    field = inst.field
    w = witness.assignment
    levels = merkle.build_levels([_leaf(field, i, v) for i, v in enumerate(w)])
    root = levels[-1][0]
    public = witness.public_inputs(inst.num_public)
    seed = transcript_seed(inst.circuit_digest, root, public, field)
    challenges = derive_challenges(seed, inst.num_constraints, pk.num_challenges)
    opened = required_openings(inst, challenges)
    nodes = merkle.multiproof(levels, list(range(inst.num_public + 1)) + opened)
    parts = [root, struct.pack("<I", len(challenges))]
    parts += [struct.pack("<I", c) for c in challenges]
    parts.append(struct.pack("<I", len(opened)))
    for wire in opened:
        parts += [struct.pack("<I", wire), field.encode(w[wire])]
    parts.append(struct.pack("<I", len(nodes)))
    parts += nodes
    return ProofBundle(
        scheme=SCHEME,
        circuit_version=inst.circuit_version,
        proof=b"".join(parts),
        public_inputs=tuple(str(v) for v in public),
    )


def prove(pk: ProvingKey, witness: Witness) -> ProofBundle:
    inst = pk.instance
    if inst.num_constraints == 0:
        raise EmptyCircuit("cannot prove a circuit with no constraints")
    ok, bad = check_satisfaction(inst, witness)
    if not ok:
        raise UnsatisfiedWitness(f"witness violates constraint {bad}")
    return _build_proof(pk, witness)


@dataclass(frozen=True)
class ParsedProof:
    root: bytes
    challenges: list[int]
    openings: dict[int, int]
    opened_order: list[int]
    nodes: list[bytes]


def parse_proof(data: bytes, field: PrimeField) -> ParsedProof:
    width = field.value_bytes
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise MalformedBundle("proof bytes truncated")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    def u32() -> int:
        return struct.unpack("<I", take(4))[0]

    root = take(32)
    k = u32()
    if k > len(data):
        raise MalformedBundle("challenge count exceeds proof size")
    challenges = [u32() for _ in range(k)]
    n = u32()
    if n * (4 + width) > len(data):
        raise MalformedBundle("opening count exceeds proof size")
    order, openings = [], {}
    for _ in range(n):
        wire = u32()
        value = int.from_bytes(take(width), "little")
        if value >= field.modulus:
            raise MalformedBundle("opened value is not a field element")
        order.append(wire)
        openings[wire] = value
    t = u32()
    if t * 32 > len(data):
        raise MalformedBundle("node count exceeds proof size")
    nodes = [take(32) for _ in range(t)]
    if pos != len(data):
        raise MalformedBundle("trailing bytes after proof")
    return ParsedProof(root, challenges, openings, order, nodes)


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: str | None = None
    detail: str = ""

    def __bool__(self):
        return self.accepted


def _reject(reason: str, detail: str = "") -> VerifyResult:
    return VerifyResult(False, reason, detail)


def verify(vk: VerificationKey, bundle: ProofBundle) -> VerifyResult:
    """Accept, or Reject with the first failing check.

    Check order: scheme and circuit version, proof parsing, Merkle
    authentication, transcript recomputation, challenged rows.
    """
    inst = vk.instance
    field = inst.field
    if bundle.scheme != vk.scheme:
        return _reject("SchemeMismatch", f"{bundle.scheme!r} != {vk.scheme!r}")
    if bundle.circuit_version != vk.circuit_version:
        return _reject("VersionMismatch", f"{bundle.circuit_version!r} != {vk.circuit_version!r}")
    try:
        public = [int(v) for v in bundle.public_inputs]
        if len(public) != inst.num_public or any(v >= field.modulus for v in public):
            raise MalformedBundle("public inputs do not match the circuit")
        pp = parse_proof(bundle.proof, field)
    except (MalformedBundle, ValueError) as exc:
        return _reject("MalformedProof", str(exc))
    if inst.num_constraints == 0:
        return _reject("MalformedProof", "verification key holds an empty circuit")
    if len(pp.challenges) != vk.num_challenges:
        return _reject("MalformedProof", f"{len(pp.challenges)} challenges, key expects {vk.num_challenges}")
    if pp.opened_order != sorted(set(pp.opened_order)) or any(
        not inst.num_public < wire < inst.num_wires for wire in pp.opened_order
    ):
        return _reject("MalformedProof", "opened wires out of order or out of range")

    known = {0: 1, **{i + 1: v for i, v in enumerate(public)}, **pp.openings}
    leaves = {i: _leaf(field, i, v) for i, v in known.items()}
    root = merkle.multiproof_root(leaves, pp.nodes, merkle.tree_depth(inst.num_wires))
    if root is None or root != pp.root:
        return _reject("BadAuthentication", "openings do not authenticate against the root")

    seed = transcript_seed(inst.circuit_digest, pp.root, public, field)
    expected = derive_challenges(seed, inst.num_constraints, vk.num_challenges)
    if expected != pp.challenges:
        return _reject("TranscriptMismatch", "challenge indices do not match the transcript")
    if pp.opened_order != required_openings(inst, expected):
        return _reject("MalformedProof", "opened wires differ from the challenged rows' support")

    p = field.modulus
    for i in sorted(set(expected)):
        a, b, c = inst.constraints[i]
        lhs = sum(v * known[k] for k, v in a.items()) * sum(v * known[k] for k, v in b.items())
        if (lhs - sum(v * known[k] for k, v in c.items())) % p:
            return _reject("ConstraintViolated", f"constraint {i} does not hold")
    return VerifyResult(True)


def prove_segment(
    pk: ProvingKey,
    selection: LayerSelection,
    calib: CalibrationConfig,
    private_inputs: FixedPointTensor,
) -> ProofBundle:
    """Witness plus proof for one segment input, as a remote prover would run it."""
    field = pk.instance.field
    public = public_inputs_for(selection, calib, private_inputs, field)
    witness = gen_witness(pk.instance, selection, calib, private_inputs, public)
    return prove(pk, witness)
