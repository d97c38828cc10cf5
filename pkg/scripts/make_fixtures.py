"""Write the toy models, their calibrations and keys to a directory.

    python3 scripts/make_fixtures.py out/
"""

import argparse
import pathlib

from zkmark.fixtures import toy_autoencoder, toy_gan
from zkmark.graph import save_graph
from zkmark.pipeline import build_keys
from zkmark.slzkcc import AeBottleneck, GanPrefix, calibrate, calibration_batches, select_layers


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--challenges", type=int, default=64)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, graph, policy in (("gan", toy_gan(), GanPrefix(1)), ("ae", toy_autoencoder(), AeBottleneck())):
        sel = select_layers(graph, policy)
        calib = calibrate(sel, calibration_batches(graph, sel))
        keys = build_keys(graph, policy, calib, args.challenges)
        (args.out / f"{name}.wgf.json").write_bytes(save_graph(graph))
        (args.out / f"{name}.calib.json").write_bytes(calib.to_bytes())
        (args.out / f"{name}.pk.json").write_bytes(keys.pk.to_bytes())
        (args.out / f"{name}.vk.json").write_bytes(keys.vk.to_bytes())
        inst = keys.pk.instance
        print(f"{name}: policy={policy} s={calib.scale_bits} B={calib.value_bits} "
              f"constraints={inst.num_constraints} wires={inst.num_wires} version={keys.vk.circuit_version}")


if __name__ == "__main__":
    main()
