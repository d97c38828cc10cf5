"""Compression ratios: synthetic proof-JSON corpus versus real bundles.

    python3 scripts/compression_report.py [--seeds 20]
"""

import argparse

import numpy as np

from zkmark import stego
from zkmark.binding import SecretKey
from zkmark.corpus import proof_json_corpus
from zkmark.fixtures import toy_autoencoder, toy_gan
from zkmark.pipeline import LocalProver, build_keys, create_watermarked_image
from zkmark.slzkcc import AeBottleneck, GanPrefix, calibrate, calibration_batches, select_layers


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    for share in (0.0, 0.125, 0.25, 0.5, 1.0):
        raw = proof_json_corpus(commitment_share=share)
        z = stego.compress(raw)
        print(f"corpus commitments={share:5.3f}: {len(raw)} -> {len(z)} bytes, ratio {len(raw) / len(z):6.2f}x")
    key = SecretKey(b"compression-report-key")
    for graph, policy in ((toy_gan(), GanPrefix(1)), (toy_autoencoder(), AeBottleneck())):
        sel = select_layers(graph, policy)
        calib = calibrate(sel, calibration_batches(graph, sel))
        keys = build_keys(graph, policy, calib)
        sizes = []
        for seed in range(args.seeds):
            b = create_watermarked_image(graph, policy, calib, seed, key, LocalProver(keys.pk)).bundle.to_bytes()
            sizes.append((len(b), len(stego.compress(b))))
        raw, comp = np.mean(sizes, axis=0)
        print(f"{graph.model_id}: bundle {raw:.0f} B -> {comp:.0f} B, ratio {raw / comp:.2f}x "
              f"(fits {stego.capacity_bytes(graph.output_shape[1], graph.output_shape[0])} B carrier)")


if __name__ == "__main__":
    main()
