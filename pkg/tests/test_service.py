import base64
import json
import logging
import urllib.error
import urllib.request
import uuid
from concurrent.futures import ThreadPoolExecutor

import pytest

from zkmark.imageio import decode_png, encode_png
from zkmark.pipeline import CircuitKeys, verify_watermarked_image
from zkmark.service import ServedModel, WatermarkService

from .conftest import OWNER_KEY
from .tamper import quarter_tamper


@pytest.fixture(scope="module")
def service(gan, ae, secret):
    models = {
        m.graph.model_id: ServedModel(m.graph, m.policy, m.calib, CircuitKeys(m.selection, m.pk, m.vk))
        for m in (gan, ae)
    }
    with WatermarkService(models, secret) as svc:
        yield svc


def post(url, body: bytes, ctype: str):
    req = urllib.request.Request(url, data=body, method="POST", headers={"Content-Type": ctype})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()


def multipart(png: bytes):
    boundary = uuid.uuid4().hex
    body = (
        f"--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"wm.png\"\r\n"
        "Content-Type: image/png\r\n\r\n"
    ).encode() + png + f"\r\n--{boundary}--\r\n".encode()
    return body, f"multipart/form-data; boundary={boundary}"


@pytest.fixture(scope="module")
def generated(service, gan):
    code, body = post(service.url + "/generate", json.dumps({"model_id": gan.graph.model_id, "seed": 42}).encode(), "application/json")
    assert code == 200
    return json.loads(body)


def test_healthz(service):
    with urllib.request.urlopen(service.url + "/healthz") as resp:
        assert resp.read() == b"ok"


def test_generate_then_verify(service, generated):
    png = base64.b64decode(generated["image_png_b64"])
    code, body = post(service.url + "/verify", *multipart(png))
    assert code == 200 and json.loads(body)["outcome"] == "accept"


def test_verify_raw_body(service, generated):
    code, body = post(service.url + "/verify", base64.b64decode(generated["image_png_b64"]), "image/png")
    assert code == 200


def test_tampered_is_422(service, generated):
    img = quarter_tamper(decode_png(base64.b64decode(generated["image_png_b64"])))
    code, body = post(service.url + "/verify", *multipart(encode_png(img)))
    obj = json.loads(body)
    assert code == 422 and (obj["outcome"], obj["reason"]) == ("reject", "SignatureMismatch")


def test_ae_bundle_routed_to_its_key(service, ae):
    code, body = post(service.url + "/generate", json.dumps({"model_id": ae.graph.model_id, "seed": 3}).encode(), "application/json")
    png = base64.b64decode(json.loads(body)["image_png_b64"])
    assert post(service.url + "/verify", png, "image/png")[0] == 200


def test_service_and_library_verdicts_are_byte_identical(service, generated, gan, secret):
    png = base64.b64decode(generated["image_png_b64"])
    _, body = post(service.url + "/verify", png, "image/png")
    assert body == verify_watermarked_image(decode_png(png), gan.vk, secret).to_bytes()
    _, body = post(service.url + "/verify", base64.b64decode(generated["original_png_b64"]), "image/png")
    assert json.loads(body)["reason"] == "NoWatermark"


def test_sixteen_concurrent_verifies(service, generated):
    honest = base64.b64decode(generated["image_png_b64"])
    tampered = encode_png(quarter_tamper(decode_png(honest)))
    plain = base64.b64decode(generated["original_png_b64"])
    jobs = [(honest, 200, None), (tampered, 422, "SignatureMismatch"), (plain, 422, "NoWatermark"), (honest, 200, None)] * 4

    def one(job):
        png, code, reason = job
        got, body = post(service.url + "/verify", *multipart(png))
        return got == code and json.loads(body).get("reason") == reason

    with ThreadPoolExecutor(16) as pool:
        assert all(pool.map(one, jobs))


@pytest.mark.parametrize(
    "path, body, ctype, code",
    [
        ("/verify", b"", "image/png", 400),
        ("/verify", b"not an image", "image/png", 400),
        ("/generate", b"{}", "application/json", 400),
        ("/generate", b'{"model_id":"nope","seed":1}', "application/json", 400),
        ("/nothing", b"", "text/plain", 404),
    ],
)
def test_bad_requests(service, path, body, ctype, code):
    assert post(service.url + path, body, ctype)[0] == code


def test_generate_disabled_without_secret(gan):
    served = ServedModel(gan.graph, gan.policy, gan.calib, CircuitKeys(gan.selection, gan.pk, gan.vk))
    with WatermarkService({gan.graph.model_id: served}, None) as svc:
        code, _ = post(svc.url + "/generate", json.dumps({"model_id": gan.graph.model_id, "seed": 1}).encode(), "application/json")
        assert code == 403


def test_no_secret_in_logs_or_responses(service, generated, caplog):
    caplog.set_level(logging.DEBUG)
    png = base64.b64decode(generated["image_png_b64"])
    _, body = post(service.url + "/verify", png, "image/png")
    assert OWNER_KEY not in body and OWNER_KEY not in json.dumps(generated).encode()
    assert OWNER_KEY.decode() not in caplog.text
