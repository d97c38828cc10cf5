"""Deterministic toy models standing in for the GAN and diffusion-decoder generators.

The decoders map each hidden unit to a smooth colour pattern over the image so
generated rasters have large-scale structure (and a non-degenerate average
hash) instead of per-pixel noise.
"""

from __future__ import annotations

import numpy as np

from .graph import RELU, ComputationGraph, Layer

WEIGHT_SCALE_BITS = 8


def _q(values: np.ndarray, scale_bits: int = WEIGHT_SCALE_BITS) -> np.ndarray:
    return np.floor(np.asarray(values) * (1 << scale_bits) + 0.5).astype(np.int64)


def _patterns(n: int, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` low-frequency RGB patterns, shape ``(H*W*3, n)``, amplitude <= 1."""
    yy, xx = np.meshgrid(np.linspace(0, 1, height), np.linspace(0, 1, width), indexing="ij")
    cols = []
    for _ in range(n):
        fx, fy = rng.integers(0, 3, size=2)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        amp = rng.uniform(0.4, 1.0, size=3)
        img = np.stack(
            [a * np.cos(2 * np.pi * (fx * xx + fy * yy) + ph) for a, ph in zip(amp, phase)],
            axis=-1,
        )
        cols.append(img.reshape(-1))
    return np.stack(cols, axis=1)


def toy_gan(
    latent_dim: int = 8,
    hidden: int = 16,
    height: int = 128,
    width: int = 128,
    seed: int = 7,
    model_id: str = "toy-gan",
) -> ComputationGraph:
    """Dense(d->h) + ReLU + Dense(h->H*W*3) + ReLU."""
    rng = np.random.default_rng(seed)
    w0 = rng.uniform(-1, 1, size=(hidden, latent_dim)) / np.sqrt(latent_dim)
    b0 = rng.uniform(0.0, 0.5, size=hidden)
    w1 = _patterns(hidden, height, width, rng) / np.sqrt(hidden)
    b1 = np.full(height * width * 3, 0.5)
    layers = (
        Layer.dense(_q(w0), _q(b0), WEIGHT_SCALE_BITS),
        Layer.act(RELU),
        Layer.dense(_q(w1), _q(b1), WEIGHT_SCALE_BITS),
        Layer.act(RELU),
    )
    return ComputationGraph(model_id, "GAN", latent_dim, layers, (height, width, 3))


def toy_autoencoder(
    latent_dim: int = 8,
    hidden: int = 12,
    bottleneck: int = 6,
    height: int = 128,
    width: int = 128,
    seed: int = 11,
    model_id: str = "toy-ae",
) -> ComputationGraph:
    """Encoder Dense + ReLU, bottleneck Dense + ReLU, decoder Dense to pixels."""
    rng = np.random.default_rng(seed)
    we = rng.uniform(-1, 1, size=(hidden, latent_dim)) / np.sqrt(latent_dim)
    be = rng.uniform(0.0, 0.3, size=hidden)
    wb = rng.uniform(-1, 1, size=(bottleneck, hidden)) / np.sqrt(hidden)
    bb = rng.uniform(0.0, 0.3, size=bottleneck)
    wd = _patterns(bottleneck, height, width, rng) / np.sqrt(bottleneck)
    bd = np.full(height * width * 3, 0.5)
    layers = (
        Layer.dense(_q(we), _q(be), WEIGHT_SCALE_BITS),
        Layer.act(RELU),
        Layer.dense(_q(wb), _q(bb), WEIGHT_SCALE_BITS, tags={"bottleneck"}),
        Layer.act(RELU),
        Layer.dense(_q(wd), _q(bd), WEIGHT_SCALE_BITS),
    )
    return ComputationGraph(model_id, "Autoencoder", latent_dim, layers, (height, width, 3))
