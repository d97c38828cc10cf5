"""Command-line interface.

Subcommands: generate, calibrate, setup, prove, watermark, extract, verify,
serve. Exit codes: 0 success/accept, 1 reject or operation failure, 2 usage
error. Secret keys come from a file or an environment variable only.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

from . import canonical, pipeline, stego
from .binding import SECRET_ENV_VAR, SecretKey
from .errors import PipelineError, ZkMarkError
from .graph import ComputationGraph, load_graph
from .imageio import read_image, write_image
from .proof import DEFAULT_CHALLENGES, ProvingKey, VerificationKey, setup
from .r1cs import compile_r1cs, gen_witness, public_inputs_for
from .remote import DeployedModel, MockProverServer
from .slzkcc import (
    DEFAULT_TOLERANCE,
    CalibrationConfig,
    Policy,
    calibrate,
    calibration_batches,
    parse_policy,
    select_layers,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"{self.prog}: error: {message}\n")


@dataclass(frozen=True)
class RunConfig:
    model_path: str | None = None
    policy: Policy | None = None
    calib_path: str | None = None
    pk_path: str | None = None
    remote_url: str | None = None
    secret_file: str | None = None
    secret_env: str | None = None
    port: int = 8000
    needs_secret: bool = False
    needs_prover: bool = False

    def validate(self) -> None:
        if self.needs_prover and not (self.remote_url or self.pk_path):
            raise UsageError("a prover is required: pass --pk for local proving or --remote URL")
        if self.remote_url is not None and not self.remote_url.startswith(("http://", "https://")):
            raise UsageError(f"--remote must be an http(s) URL, got {self.remote_url!r}")
        if self.needs_secret and not self.secret_source_given():
            raise UsageError(
                f"a secret key is required: pass --secret-file or set ${self.secret_env or SECRET_ENV_VAR}"
            )

    def secret_source_given(self) -> bool:
        return bool(self.secret_file) or (self.secret_env or SECRET_ENV_VAR) in os.environ

    def secret(self) -> SecretKey | None:
        if self.secret_file:
            return SecretKey.from_file(self.secret_file)
        var = self.secret_env or SECRET_ENV_VAR
        if var in os.environ:
            return SecretKey.from_env(var)
        return None

    @classmethod
    def from_args(cls, args, needs_secret=False, needs_prover=False) -> "RunConfig":
        policy = getattr(args, "policy", None)
        try:
            policy = parse_policy(policy) if policy else None
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        cfg = cls(
            model_path=getattr(args, "model", None),
            policy=policy,
            calib_path=getattr(args, "calib", None),
            pk_path=getattr(args, "pk", None),
            remote_url=getattr(args, "remote", None),
            secret_file=getattr(args, "secret_file", None),
            secret_env=getattr(args, "secret_env", None),
            port=getattr(args, "port", 8000) or 8000,
            needs_secret=needs_secret,
            needs_prover=needs_prover,
        )
        cfg.validate()
        return cfg


def _read(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def _write(path: str, data: bytes) -> None:
    with open(path, "wb") as fh:
        fh.write(data)


def _graph(cfg: RunConfig) -> ComputationGraph:
    return load_graph(_read(cfg.model_path))


def _calib(cfg: RunConfig) -> CalibrationConfig:
    return CalibrationConfig.from_bytes(_read(cfg.calib_path))


def _prover(cfg: RunConfig) -> pipeline.Prover:
    if cfg.remote_url:
        return pipeline.RemoteProver(cfg.remote_url)
    return pipeline.LocalProver(ProvingKey.from_json(canonical.loads(_read(cfg.pk_path))))


def cmd_generate(args) -> int:
    cfg = RunConfig.from_args(args)
    graph = _graph(cfg)
    calib = _calib(cfg)
    selection = select_layers(graph, cfg.policy) if cfg.policy else None
    if selection is None:
        # any selection works for rendering; the image only depends on the scale
        image = pipeline.render_seed(graph, calib, args.seed)
    else:
        image = pipeline.generate(graph, selection, calib, args.seed).image
    write_image(args.out, image)
    return 0


def cmd_calibrate(args) -> int:
    cfg = RunConfig.from_args(args)
    graph = _graph(cfg)
    selection = select_layers(graph, cfg.policy)
    batches = calibration_batches(
        graph, selection, n_batches=args.batches, batch_size=args.batch_size, seed=args.batch_seed
    )
    calib = calibrate(selection, batches, tolerance=args.tolerance)
    _write(args.out, calib.to_bytes())
    print(calib.to_bytes().decode())
    return 0


def cmd_setup(args) -> int:
    cfg = RunConfig.from_args(args)
    graph, calib = _graph(cfg), _calib(cfg)
    keys = pipeline.build_keys(graph, cfg.policy, calib, args.challenges)
    _write(args.pk_out, keys.pk.to_bytes())
    _write(args.vk_out, keys.vk.to_bytes())
    if args.r1cs_out:
        _write(args.r1cs_out, keys.pk.instance.to_bytes())
    print(json.dumps({"circuit_version": keys.vk.circuit_version,
                      "constraints": keys.pk.instance.num_constraints,
                      "wires": keys.pk.instance.num_wires}))
    return 0


def cmd_prove(args) -> int:
    cfg = RunConfig.from_args(args, needs_prover=True)
    graph, calib = _graph(cfg), _calib(cfg)
    selection = select_layers(graph, cfg.policy)
    gen = pipeline.generate(graph, selection, calib, args.seed)
    if args.witness_out:
        if cfg.pk_path is None:
            raise UsageError("--witness-out needs --pk (remote provers keep the witness)")
        pk = ProvingKey.from_json(canonical.loads(_read(cfg.pk_path)))
        public = public_inputs_for(selection, calib, gen.segment_input, pk.instance.field)
        witness = gen_witness(pk.instance, selection, calib, gen.segment_input, public)
        _write(args.witness_out, witness.to_bytes())
    bundle = _prover(cfg).prove(graph, selection, calib, gen.segment_input)
    _write(args.out, bundle.to_bytes())
    return 0


def cmd_watermark(args) -> int:
    cfg = RunConfig.from_args(args, needs_secret=True, needs_prover=True)
    graph, calib = _graph(cfg), _calib(cfg)
    result = pipeline.create_watermarked_image(
        graph, cfg.policy, calib, args.seed, cfg.secret(), _prover(cfg)
    )
    write_image(args.out, result.watermarked)
    if args.original_out:
        write_image(args.original_out, result.original)
    if args.bundle_out:
        _write(args.bundle_out, result.bundle.to_bytes())
    payload = stego.compress(result.bundle.to_bytes())
    print(json.dumps({"bundle_bytes": len(result.bundle.to_bytes()),
                      "compressed_bytes": len(payload),
                      "psnr_db": round(stego.psnr(result.original, result.watermarked), 3)}))
    return 0


def cmd_extract(args) -> int:
    found = pipeline.inspect(read_image(args.image))
    if found.bundle is None:
        sys.stderr.write(canonical.dumps(found.to_json()).decode() + "\n")
        return 1
    _write(args.out, found.bundle.to_bytes())
    print(json.dumps(found.summary, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    cfg = RunConfig.from_args(args)
    vk = VerificationKey.from_bytes(_read(args.vk))
    verdict = pipeline.verify_watermarked_image(read_image(args.image), vk, cfg.secret())
    out = verdict.to_bytes()
    if args.report:
        _write(args.report, out)
    sys.stdout.write(out.decode() + "\n")
    if not verdict.accepted:
        sys.stderr.write(f"reject: {verdict.reason}\n")
    return verdict.exit_code


def cmd_serve(args) -> int:
    cfg = RunConfig.from_args(args)
    graph, calib = _graph(cfg), _calib(cfg)
    if args.mock_prover:
        if cfg.pk_path is None:
            raise UsageError("--mock-prover needs --pk")
        pk = ProvingKey.from_json(canonical.loads(_read(cfg.pk_path)))
        deployed = DeployedModel(pk, select_layers(graph, cfg.policy), calib)
        server = MockProverServer({graph.model_id: deployed}, host=args.host, port=cfg.port)
        print(f"mock prover for {graph.model_id} on {server.url}", flush=True)
        server.serve_forever()
        return 0
    from .service import ServedModel, WatermarkService

    keys = pipeline.build_keys(graph, cfg.policy, calib, args.challenges)
    prover = pipeline.RemoteProver(cfg.remote_url) if cfg.remote_url else None
    served = ServedModel(graph, cfg.policy, calib, keys, prover)
    svc = WatermarkService({graph.model_id: served}, cfg.secret(), host=args.host, port=cfg.port)
    print(f"serving {graph.model_id} on {svc.url}", flush=True)
    svc.serve_forever()
    return 0


def _secret_opts(p):
    p.add_argument("--secret-file", help="file holding the owner secret key")
    p.add_argument("--secret-env", help=f"environment variable holding the key (default {SECRET_ENV_VAR})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="zkmark", description="Proof-carrying image watermarks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="render an image from a seed")
    p.add_argument("--model", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--policy")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("calibrate", help="choose scale and range-check width")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--batch-seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("setup", help="compile the circuit and write proving/verification keys")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--challenges", type=int, default=DEFAULT_CHALLENGES)
    p.add_argument("--pk-out", required=True)
    p.add_argument("--vk-out", required=True)
    p.add_argument("--r1cs-out")
    p.set_defaults(func=cmd_setup)

    p = sub.add_parser("prove", help="produce an unsigned proof bundle for a seed")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--pk")
    p.add_argument("--remote", help="remote prover endpoint URL")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--witness-out")
    p.set_defaults(func=cmd_prove)

    p = sub.add_parser("watermark", help="generate, prove, sign and embed")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--pk")
    p.add_argument("--remote", help="remote prover endpoint URL")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--original-out")
    p.add_argument("--bundle-out")
    _secret_opts(p)
    p.set_defaults(func=cmd_watermark)

    p = sub.add_parser("extract", help="recover the embedded bundle without verifying")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("verify", help="verify a watermarked image")
    p.add_argument("--image", required=True)
    p.add_argument("--vk", required=True)
    p.add_argument("--report")
    _secret_opts(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="run the HTTP service, or the mock remote prover")
    p.add_argument("--model", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--pk")
    p.add_argument("--remote", help="remote prover endpoint URL")
    p.add_argument("--challenges", type=int, default=DEFAULT_CHALLENGES)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--mock-prover", action="store_true")
    _secret_opts(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"zkmark {args.command}: error: {exc}\n")
        return 2
    except FileNotFoundError as exc:
        sys.stderr.write(f"zkmark {args.command}: error: {exc}\n")
        return 2
    except PipelineError as exc:
        report = {"outcome": "error", "stage": exc.stage, "error": type(exc.cause).__name__,
                  "detail": str(exc.cause)}
        sys.stderr.write(canonical.dumps(report).decode() + "\n")
        return 1
    except ZkMarkError as exc:
        report = {"outcome": "error", "error": type(exc).__name__, "detail": str(exc)}
        sys.stderr.write(canonical.dumps(report).decode() + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
