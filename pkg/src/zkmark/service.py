"""HTTP front end for generation and verification.

Endpoints::

    GET  /healthz   -> 200 "ok"
    POST /generate  {"model_id", "seed"} -> 200 {"model_id", "seed", "image_png_b64",
                                               "original_png_b64", "bundle"}
    POST /verify    multipart form field "image" (or a raw PNG/PPM body)
                    -> 200 Verdict JSON on accept, 422 Verdict JSON on reject

All state is built before the server starts and never mutated afterwards.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
from dataclasses import dataclass
from email.parser import BytesParser
from email.policy import HTTP
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import canonical, pipeline
from .binding import SecretKey
from .errors import ImageFormatError, PipelineError
from .graph import ComputationGraph
from .imageio import decode_image, encode_png
from .pipeline import CircuitKeys, LocalProver, Prover
from .slzkcc import CalibrationConfig, Policy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServedModel:
    graph: ComputationGraph
    policy: Policy
    calib: CalibrationConfig
    keys: CircuitKeys
    prover: Prover | None = None

    def get_prover(self) -> Prover:
        return self.prover or LocalProver(self.keys.pk)


def _multipart_file(content_type: str, body: bytes, field: str = "image") -> bytes | None:
    msg = BytesParser(policy=HTTP).parsebytes(
        b"Content-Type: " + content_type.encode("latin-1") + b"\r\n\r\n" + body
    )
    if not msg.is_multipart():
        return None
    for part in msg.iter_parts():
        if part.get_param("name", header="content-disposition") == field:
            return part.get_payload(decode=True)
    return None


class WatermarkService:
    def __init__(
        self,
        models: dict[str, ServedModel],
        secret: SecretKey | None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        if not models:
            raise ValueError("service needs at least one model")
        self.models = dict(models)
        self.secret = secret
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "WatermarkService":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def vk_for(self, image) -> "pipeline.VerificationKey":
        """Key whose circuit matches the embedded bundle, else the first model's."""
        found = pipeline.inspect(image)
        if found.bundle is not None:
            for m in self.models.values():
                if m.keys.vk.circuit_version == found.bundle.circuit_version:
                    return m.keys.vk
        return next(iter(self.models.values())).keys.vk

    def verify_bytes(self, data: bytes) -> pipeline.Verdict:
        image = decode_image(data)
        return pipeline.verify_watermarked_image(image, self.vk_for(image), self.secret)

    def generate(self, model_id: str, seed: int) -> dict:
        if self.secret is None:
            raise PermissionError("service has no secret key; generation disabled")
        m = self.models[model_id]
        result = pipeline.create_watermarked_image(
            m.graph, m.policy, m.calib, seed, self.secret, m.get_prover()
        )
        return {
            "model_id": model_id,
            "seed": seed,
            "image_png_b64": base64.b64encode(encode_png(result.watermarked)).decode("ascii"),
            "original_png_b64": base64.b64encode(encode_png(result.original)).decode("ascii"),
            "bundle": result.bundle.to_json(),
        }

    def _handler_class(self):
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                log.info("%s " + fmt, self.address_string(), *args)

            def _send(self, code: int, body: bytes, ctype: str = "application/json"):
                self.send_response(code)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def _error(self, code: int, message: str):
                self._send(code, canonical.dumps({"error": message}))

            def _body(self) -> bytes:
                return self.rfile.read(int(self.headers.get("Content-Length", "0")))

            def do_GET(self):
                if self.path == "/healthz":
                    return self._send(200, b"ok", "text/plain")
                self._error(404, "not found")

            def do_POST(self):
                if self.path == "/verify":
                    return self._verify()
                if self.path == "/generate":
                    return self._generate()
                self._error(404, "not found")

            def _verify(self):
                ctype = self.headers.get("Content-Type", "")
                body = self._body()
                data = _multipart_file(ctype, body) if ctype.startswith("multipart/") else body
                if not data:
                    return self._error(400, "expected multipart field 'image' or a raw image body")
                try:
                    verdict = service.verify_bytes(data)
                except ImageFormatError as exc:
                    return self._error(400, str(exc))
                self._send(200 if verdict.accepted else 422, verdict.to_bytes())

            def _generate(self):
                try:
                    obj = json.loads(self._body())
                    model_id, seed = obj["model_id"], obj["seed"]
                    if not isinstance(seed, int) or model_id not in service.models:
                        raise ValueError("unknown model_id or non-integer seed")
                except (ValueError, KeyError, TypeError) as exc:
                    return self._error(400, str(exc))
                try:
                    out = service.generate(model_id, seed)
                except PermissionError as exc:
                    return self._error(403, str(exc))
                except PipelineError as exc:
                    return self._error(500, f"{exc.stage}: {type(exc.cause).__name__}")
                self._send(200, canonical.dumps(out))

        return Handler
