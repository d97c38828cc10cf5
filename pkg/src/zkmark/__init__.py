"""Proof-carrying watermarks for generated images.

Selected generator layers are compiled to an R1CS circuit, proved with a
transparent Merkle/Fiat-Shamir backend, bound to the image through a keyed
average-hash signature, gzip-compressed, and hidden in the two low bit
planes of the image.
"""

from .binding import SecretKey, attach_signature, average_hash, sign
from .graph import (
    ComputationGraph,
    FixedPointTensor,
    Layer,
    RasterImage,
    forward_fixed,
    forward_float,
    load_graph,
    render_image,
    save_graph,
)
from .pipeline import (
    LocalProver,
    RemoteProver,
    Verdict,
    create_watermarked_image,
    inspect,
    verify_watermarked_image,
)
from .proof import ProofBundle, prove, setup, verify
from .r1cs import check_satisfaction, compile_r1cs, gen_witness
from .slzkcc import AeBottleneck, CalibrationConfig, GanPrefix, calibrate, select_layers
from .stego import compress, decompress, lsb_embed, lsb_extract

__version__ = "0.1.0"
