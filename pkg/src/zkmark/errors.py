"""Exception hierarchy.

Every error raised by the package derives from :class:`ZkMarkError`; each
module has its own intermediate base so callers can catch by stage.
"""

from __future__ import annotations


class ZkMarkError(Exception):
    pass


# graph
class GraphError(ZkMarkError):
    pass


class MalformedGraph(GraphError):
    pass


class ShapeMismatch(GraphError):
    pass


class UnsupportedLayerKind(GraphError):
    pass


class DimensionMismatch(GraphError):
    pass


class MagnitudeOverflow(GraphError):
    pass


class ImageFormatError(GraphError):
    """Unreadable image, or an output format that would destroy LSB data."""


# slzkcc
class SelectionError(ZkMarkError):
    pass


class PolicyMismatch(SelectionError):
    pass


class SelectionOutOfRange(SelectionError):
    pass


class NoBottleneckTag(SelectionError):
    pass


class CalibrationInfeasible(SelectionError):
    pass


class EmptyBatch(SelectionError):
    pass


# r1cs
class CircuitError(ZkMarkError):
    pass


class UnsupportedLayer(CircuitError):
    pass


class WidthOverflow(CircuitError):
    pass


class InputScaleMismatch(CircuitError):
    pass


class HintOverflow(CircuitError):
    pass


class LengthMismatch(CircuitError):
    pass


# proof
class ProofError(ZkMarkError):
    pass


class UnsatisfiedWitness(ProofError):
    pass


class EmptyCircuit(ProofError):
    pass


class MalformedBundle(ProofError):
    """Proof bundle JSON does not parse or has the wrong shape."""


class RemoteError(ProofError):
    pass


class JobTimeout(RemoteError):
    pass


class JobFailed(RemoteError):
    pass


class ProtocolError(RemoteError):
    pass


# binding
class BindingError(ZkMarkError):
    pass


class ImageTooSmall(BindingError):
    pass


class SignatureAlreadyPresent(BindingError):
    pass


class WeakSecretKey(BindingError):
    pass


# stego
class StegoError(ZkMarkError):
    pass


class CapacityExceeded(StegoError):
    def __init__(self, required_bits: int, available_bits: int):
        self.required_bits = required_bits
        self.available_bits = available_bits
        super().__init__(
            f"payload needs {required_bits} bits, carrier holds {available_bits}"
        )


class ImplausibleHeader(StegoError):
    pass


class GzipFormatError(StegoError):
    pass


# pipeline
class PipelineError(ZkMarkError):
    """A stage of watermark creation failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
