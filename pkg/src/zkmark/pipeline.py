"""End-to-end watermark creation and verification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

from .binding import SecretKey, attach_signature, average_hash, sign
from .errors import (
    GzipFormatError,
    ImplausibleHeader,
    MalformedBundle,
    PipelineError,
    ZkMarkError,
)
from .graph import (
    ComputationGraph,
    FixedPointTensor,
    RasterImage,
    forward_fixed,
    latent_from_seed,
    render_image,
    trace_fixed,
)
from .proof import (
    DEFAULT_CHALLENGES,
    ProofBundle,
    ProvingKey,
    VerificationKey,
    prove_segment,
    setup,
    verify,
)
from .r1cs import compile_r1cs
from .remote import encode_input, remote_prove
from .slzkcc import CalibrationConfig, LayerSelection, Policy, select_layers
from . import canonical, stego

ACCEPT, REJECT = "accept", "reject"
REASONS = (
    "NoWatermark",
    "DecompressFailed",
    "MalformedProof",
    "SignatureMismatch",
    "SignatureAbsent",
    "ProofInvalid",
    "CircuitMismatch",
)


class Prover(Protocol):
    def prove(
        self,
        graph: ComputationGraph,
        selection: LayerSelection,
        calib: CalibrationConfig,
        private_inputs: FixedPointTensor,
    ) -> ProofBundle: ...


@dataclass(frozen=True)
class LocalProver:
    pk: ProvingKey

    def prove(self, graph, selection, calib, private_inputs) -> ProofBundle:
        return prove_segment(self.pk, selection, calib, private_inputs)


@dataclass(frozen=True)
class RemoteProver:
    endpoint: str
    model_id: str | None = None
    poll_interval: float = 0.02
    timeout: float = 30.0

    def prove(self, graph, selection, calib, private_inputs) -> ProofBundle:
        return remote_prove(
            self.endpoint,
            self.model_id or graph.model_id,
            encode_input(private_inputs),
            poll_interval=self.poll_interval,
            timeout=self.timeout,
        )


@dataclass(frozen=True)
class CircuitKeys:
    selection: LayerSelection
    pk: ProvingKey
    vk: VerificationKey


def build_keys(
    graph: ComputationGraph, policy: Policy, calib: CalibrationConfig, k: int = DEFAULT_CHALLENGES
) -> CircuitKeys:
    selection = select_layers(graph, policy)
    pk, vk = setup(compile_r1cs(selection, calib), k)
    return CircuitKeys(selection, pk, vk)


class Generation(NamedTuple):
    image: RasterImage
    latent: FixedPointTensor
    segment_input: FixedPointTensor


def generate(graph: ComputationGraph, selection: LayerSelection, calib: CalibrationConfig, seed: int) -> Generation:
    """Render the image for ``seed`` and capture the selected segment's input."""
    s = calib.scale_bits
    z = FixedPointTensor.from_real(latent_from_seed(seed, graph.input_dim), s)
    trace = trace_fixed(graph.layers, z.data, s)
    out = trace[-1].outputs
    image = render_image(FixedPointTensor((out.size,), out, s), graph.output_shape)
    seg = z if selection.start == 0 else trace[selection.start - 1].outputs
    if not isinstance(seg, FixedPointTensor):
        seg = FixedPointTensor((seg.size,), seg, s)
    return Generation(image, z, seg)


def render_seed(graph: ComputationGraph, calib: CalibrationConfig, seed: int) -> RasterImage:
    s = calib.scale_bits
    z = FixedPointTensor.from_real(latent_from_seed(seed, graph.input_dim), s)
    return render_image(forward_fixed(graph, z, s), graph.output_shape)


class WatermarkResult(NamedTuple):
    original: RasterImage
    watermarked: RasterImage
    bundle: ProofBundle


def create_watermarked_image(
    graph: ComputationGraph,
    policy: Policy,
    calib: CalibrationConfig,
    seed: int,
    secret: SecretKey,
    prover: Prover,
) -> WatermarkResult:
    """Generate, prove, sign, compress and embed. Errors carry their stage name."""
    stage = "select"
    try:
        selection = select_layers(graph, policy)
        stage = "generate"
        gen = generate(graph, selection, calib, seed)
        stage = "prove"
        bundle = prover.prove(graph, selection, calib, gen.segment_input)
        stage = "binding"
        signed = attach_signature(bundle, sign(average_hash(gen.image), secret))
        stage = "stego"
        watermarked = stego.lsb_embed(gen.image, stego.compress(signed.to_bytes()))
    except ZkMarkError as exc:
        raise PipelineError(stage, exc) from exc
    return WatermarkResult(gen.image, watermarked, signed)


@dataclass
class Verdict:
    outcome: str
    reason: str | None = None
    stages: list[dict] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.outcome == ACCEPT

    def to_json(self) -> dict:
        obj = {"outcome": self.outcome, "stages": self.stages}
        if self.reason is not None:
            obj["reason"] = self.reason
        return obj

    def to_bytes(self) -> bytes:
        return canonical.dumps(self.to_json())

    @property
    def exit_code(self) -> int:
        return 0 if self.accepted else 1


class _Report:
    def __init__(self):
        self.stages: list[dict] = []

    def ok(self, stage: str, detail: str = "") -> None:
        self.stages.append({"stage": stage, "status": "pass", "detail": detail})

    def skip(self, stage: str, detail: str) -> None:
        self.stages.append({"stage": stage, "status": "skipped", "detail": detail})

    def fail(self, stage: str, reason: str, detail: str) -> Verdict:
        self.stages.append({"stage": stage, "status": "fail", "detail": detail})
        return Verdict(REJECT, reason, self.stages)


def _unpack(image: RasterImage, report: _Report) -> tuple[ProofBundle | None, Verdict | None]:
    try:
        payload = stego.lsb_extract(image)
    except ImplausibleHeader as exc:
        return None, report.fail("extract", "NoWatermark", str(exc))
    report.ok("extract", f"{len(payload)} bytes")
    try:
        raw = stego.decompress(payload)
    except GzipFormatError as exc:
        return None, report.fail("decompress", "DecompressFailed", str(exc))
    report.ok("decompress", f"{len(raw)} bytes")
    try:
        bundle = ProofBundle.from_bytes(raw)
        if bundle.to_bytes() != raw:
            raise MalformedBundle("bundle JSON is not in canonical form")
    except MalformedBundle as exc:
        return None, report.fail("parse", "MalformedProof", str(exc))
    report.ok("parse", bundle.scheme)
    return bundle, None


def verify_watermarked_image(
    image: RasterImage, vk: VerificationKey, secret: SecretKey | None = None
) -> Verdict:
    """Total verification: never raises on image content, returns a Verdict."""
    report = _Report()
    bundle, failed = _unpack(image, report)
    if failed:
        return failed

    if secret is None:
        report.skip("signature", "no secret key supplied (public mode)")
    elif bundle.signature is None:
        return report.fail("signature", "SignatureAbsent", "bundle carries no signature")
    else:
        try:
            expected = sign(average_hash(image), secret)
        except ZkMarkError as exc:
            return report.fail("signature", "SignatureMismatch", str(exc))
        if expected != bundle.signature:
            return report.fail("signature", "SignatureMismatch", "image hash does not match signature")
        report.ok("signature", "owner signature matches")

    if bundle.scheme != vk.scheme or bundle.circuit_version != vk.circuit_version:
        return report.fail(
            "circuit",
            "CircuitMismatch",
            f"bundle circuit {bundle.circuit_version!r} vs key {vk.circuit_version!r}",
        )
    report.ok("circuit", vk.circuit_version)

    result = verify(vk, bundle.without_signature())
    if not result:
        reason = "MalformedProof" if result.reason == "MalformedProof" else "ProofInvalid"
        return report.fail("proof", reason, f"{result.reason}: {result.detail}")
    report.ok("proof", "accept")
    return Verdict(ACCEPT, None, report.stages)


@dataclass
class Inspection:
    bundle: ProofBundle | None
    summary: dict
    failure: Verdict | None = None

    def to_json(self) -> dict:
        obj = {"summary": self.summary, "stages": (self.failure.stages if self.failure else [])}
        if self.failure is not None:
            obj["failure"] = self.failure.reason
        if self.bundle is not None:
            obj["bundle"] = self.bundle.to_json()
        return obj


def inspect(image: RasterImage) -> Inspection:
    """Extract and parse the embedded bundle without verifying it."""
    report = _Report()
    bundle, failed = _unpack(image, report)
    if failed:
        return Inspection(None, {"watermark": False, "failed_stage": failed.stages[-1]["stage"]}, failed)
    summary = {
        "watermark": True,
        "scheme": bundle.scheme,
        "circuit_version": bundle.circuit_version,
        "proof_bytes": len(bundle.proof),
        "public_inputs": len(bundle.public_inputs),
        "signed": bundle.signature is not None,
    }
    return Inspection(bundle, summary)
