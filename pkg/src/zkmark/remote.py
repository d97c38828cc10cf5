"""Remote proving: HTTP job client and a wire-compatible mock prover.

Protocol (all bodies canonical JSON)::

    POST {endpoint}/jobs            {"model_id", "input"}  -> 201 {"job_id"}
    GET  {endpoint}/jobs/{id}                              -> {"status": pending|done|failed, "message"?}
    GET  {endpoint}/jobs/{id}/proof                        -> ProofBundle JSON

``input`` is the segment input as a fixed-point tensor object. The server
computes the witness and proof itself; only the bundle travels back.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
import uuid
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from . import canonical
from .errors import JobFailed, JobTimeout, MalformedBundle, ProtocolError, ZkMarkError
from .graph import FixedPointTensor
from .proof import ProofBundle, ProvingKey, prove_segment
from .slzkcc import CalibrationConfig, LayerSelection

log = logging.getLogger(__name__)


def _request(method: str, url: str, body: bytes | None = None, timeout: float = 10.0):
    req = urllib.request.Request(url, data=body, method=method)
    if body is not None:
        req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (urllib.error.URLError, OSError) as exc:
        raise ProtocolError(f"{method} {url} failed: {exc}") from exc


def _json(status: int, data: bytes, expected: int, what: str) -> dict:
    if status != expected:
        raise ProtocolError(f"{what}: HTTP {status}: {data[:200]!r}")
    try:
        obj = json.loads(data)
    except ValueError as exc:
        raise ProtocolError(f"{what}: response is not JSON") from exc
    if not isinstance(obj, dict):
        raise ProtocolError(f"{what}: response is not a JSON object")
    return obj


def encode_input(private_inputs: FixedPointTensor) -> dict:
    return private_inputs.to_json()


def remote_prove(
    endpoint: str,
    model_id: str,
    input_json: bytes | dict,
    poll_interval: float = 0.05,
    timeout: float = 30.0,
) -> ProofBundle:
    """Submit a proving job, poll until it settles, fetch only the bundle."""
    endpoint = endpoint.rstrip("/")
    payload = input_json if isinstance(input_json, dict) else json.loads(input_json)
    body = canonical.dumps({"model_id": model_id, "input": payload})
    started = time.monotonic()
    obj = _json(*_request("POST", f"{endpoint}/jobs", body), 201, "submit")
    job_id = obj.get("job_id")
    if not isinstance(job_id, str) or not job_id:
        raise ProtocolError("submit: missing job_id")
    while True:
        status = _json(*_request("GET", f"{endpoint}/jobs/{job_id}"), 200, "status")
        state = status.get("status")
        if state == "done":
            break
        if state == "failed":
            raise JobFailed(str(status.get("message", "remote prover reported failure")))
        if state != "pending":
            raise ProtocolError(f"status: unexpected state {state!r}")
        if time.monotonic() - started >= timeout:
            raise JobTimeout(f"job {job_id} still pending after {timeout:.2f}s")
        time.sleep(poll_interval)
    code, data = _request("GET", f"{endpoint}/jobs/{job_id}/proof")
    if code != 200:
        raise ProtocolError(f"proof: HTTP {code}")
    try:
        return ProofBundle.from_bytes(data)
    except MalformedBundle as exc:
        raise ProtocolError(f"proof: {exc}") from exc


@dataclass(frozen=True)
class DeployedModel:
    """What the mock prover holds for one pre-deployed model."""

    pk: ProvingKey
    selection: LayerSelection
    calib: CalibrationConfig


@dataclass
class _Job:
    status: str = "pending"
    message: str | None = None
    bundle: bytes | None = None


class MockProverServer:
    """Threaded in-process prover speaking the remote protocol.

    ``stall=True`` leaves every job pending forever; ``fail_message`` makes
    every job fail with that message. Both exist for client error-path tests.
    """

    def __init__(
        self,
        models: dict[str, DeployedModel],
        host: str = "127.0.0.1",
        port: int = 0,
        stall: bool = False,
        fail_message: str | None = None,
    ):
        self.models = dict(models)
        self.stall = stall
        self.fail_message = fail_message
        self._jobs: dict[str, _Job] = {}
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer((host, port), self._handler_class())
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockProverServer":
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

    def submit(self, model_id: str, payload: dict) -> str:
        job_id = uuid.uuid4().hex
        job = _Job()
        with self._lock:
            self._jobs[job_id] = job
        if not self.stall:
            threading.Thread(target=self._run, args=(job, model_id, payload), daemon=True).start()
        return job_id

    def _run(self, job: _Job, model_id: str, payload: dict) -> None:
        try:
            if self.fail_message is not None:
                raise JobFailed(self.fail_message)
            model = self.models.get(model_id)
            if model is None:
                raise JobFailed(f"model {model_id!r} is not deployed")
            x = FixedPointTensor.from_json(payload)
            bundle = prove_segment(model.pk, model.selection, model.calib, x).to_bytes()
        except (ZkMarkError, KeyError, TypeError, ValueError) as exc:
            with self._lock:
                job.status, job.message = "failed", str(exc)
            return
        with self._lock:
            job.status, job.bundle = "done", bundle

    def job(self, job_id: str) -> _Job | None:
        with self._lock:
            return self._jobs.get(job_id)

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):
                log.debug("mock-prover: " + fmt, *args)

            def _send(self, code: int, body: bytes):
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_POST(self):
                if self.path.rstrip("/") != "/jobs":
                    return self._send(404, canonical.dumps({"error": "not found"}))
                try:
                    n = int(self.headers.get("Content-Length", "0"))
                    obj = json.loads(self.rfile.read(n))
                    model_id, payload = obj["model_id"], obj["input"]
                    if not isinstance(model_id, str) or not isinstance(payload, dict):
                        raise TypeError("model_id must be a string and input an object")
                except (ValueError, KeyError, TypeError) as exc:
                    return self._send(400, canonical.dumps({"error": str(exc)}))
                job_id = server.submit(model_id, payload)
                self._send(201, canonical.dumps({"job_id": job_id}))

            def do_GET(self):
                parts = [p for p in self.path.split("/") if p]
                if len(parts) < 2 or parts[0] != "jobs":
                    return self._send(404, canonical.dumps({"error": "not found"}))
                job = server.job(parts[1])
                if job is None:
                    return self._send(404, canonical.dumps({"error": "unknown job"}))
                if len(parts) == 2:
                    with server._lock:
                        obj = {"status": job.status}
                        if job.message is not None:
                            obj["message"] = job.message
                    return self._send(200, canonical.dumps(obj))
                if len(parts) == 3 and parts[2] == "proof":
                    if job.status != "done":
                        return self._send(409, canonical.dumps({"error": f"job {job.status}"}))
                    return self._send(200, job.bundle)
                self._send(404, canonical.dumps({"error": "not found"}))

        return Handler
