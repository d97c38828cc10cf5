"""Synthetic proof-JSON text for compression experiments."""

import numpy as np


def proof_json_corpus(size: int = 2**20, seed: int = 0, commitment_share: float = 0.125) -> bytes:
    """Field elements as 0x-prefixed 64-digit hex inside a JSON array.

    Most entries are small quantized values zero-padded to field width, the
    rest are full-entropy commitments. Output is cut to exactly ``size`` bytes.
    """
    rng = np.random.default_rng(seed)
    digits = np.array(list("0123456789abcdef"))
    parts = ['{"protocol":"plonk","instances":[']
    n = len(parts[0])
    while n < size:
        if rng.random() < commitment_share:
            word = "".join(rng.choice(digits, 64))
        else:
            word = f"{int(rng.integers(0, 1 << 16)):064x}"
        item = f'"0x{word}",'
        parts.append(item)
        n += len(item)
    return ("".join(parts).rstrip(",") + "]}").encode()[:size]
