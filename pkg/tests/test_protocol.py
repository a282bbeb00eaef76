"""Wire protocol: schema validation, canonical encoding, retry policy, and
idempotency keys."""

import base64
import hashlib
import json

import numpy as np
import pytest
import requests

from screendx.errors import BackendError, SchemaViolation
from screendx.protocol import (HttpClient, InProcessClient, InferenceRequest,
                               InferenceResponse, call, decode_request,
                               decode_response, encode_request,
                               encode_response, idempotency_key,
                               request_to_dict)
from screendx.stubs import stub_suite

from screendx import png as _png

PIXEL = base64.b64encode(_png.encode(np.zeros((1, 1, 1)), bits=8)).decode()


def req(task="embed-text", **kw):
    defaults = {"model_id": "m"}
    if task in ("segment", "detect", "restore", "embed-image", "classify",
                "generate"):
        defaults["image_b64"] = PIXEL
    if task in ("embed-text", "generate"):
        defaults["text"] = "hello"
    defaults.update(kw)
    return InferenceRequest(task=task, **defaults)


# --- request/response validation ---------------------------------------------

def test_request_requires_task_fields():
    with pytest.raises(SchemaViolation):
        InferenceRequest(task="classify", model_id="m")  # no image
    with pytest.raises(SchemaViolation):
        InferenceRequest(task="embed-text", model_id="m")  # no text
    with pytest.raises(SchemaViolation):
        InferenceRequest(task="nonsense", model_id="m", text="x")
    with pytest.raises(SchemaViolation):
        InferenceRequest(task="embed-text", model_id="", text="x")


def test_request_rejects_invalid_base64():
    with pytest.raises(SchemaViolation):
        InferenceRequest(task="restore", model_id="m",
                         image_b64="!!! not base64 !!!")


def test_request_accepts_raw_bytes_image():
    r = InferenceRequest(task="restore", model_id="m", image_b64=b"\x00\x01")
    assert base64.b64decode(r.image_b64) == b"\x00\x01"


def test_canonical_encoding_sorted_and_compact():
    r = req("generate", params={"b": 1, "a": 2})
    body = encode_request(r)
    assert b" " not in body
    d = json.loads(body)
    assert list(d) == sorted(d)
    # canonical: same request always encodes to the same bytes
    assert body == encode_request(req("generate", params={"a": 2, "b": 1}))


def test_request_round_trip():
    r = req("classify", labels=("x", "y"), params={"input_size": 8})
    back = decode_request(encode_request(r))
    assert request_to_dict(back) == request_to_dict(r)


def test_response_exactly_one_payload():
    with pytest.raises(SchemaViolation):
        encode_response(InferenceResponse(model_id="m"))  # no payload
    with pytest.raises(SchemaViolation):
        encode_response(InferenceResponse(model_id="m", text="t",
                                          vector=(1.0,)))


def test_response_payload_must_match_task():
    body = encode_response(InferenceResponse(model_id="m", text="t"))
    decode_response(body, task="generate")
    with pytest.raises(SchemaViolation):
        decode_response(body, task="classify")


def test_response_probability_range():
    with pytest.raises(SchemaViolation):
        encode_response(InferenceResponse(model_id="m",
                                          probabilities={"a": 1.5}))


def test_response_round_trip():
    r = InferenceResponse(model_id="m", vector=(0.25, -0.5), latency_ms=3.0)
    back = decode_response(encode_response(r), task="embed-text")
    assert back.vector == (0.25, -0.5)
    assert back.model_id == "m"


def test_decode_rejects_bad_json():
    with pytest.raises(SchemaViolation):
        decode_request(b"{nope")
    with pytest.raises(SchemaViolation):
        decode_response(b"[1,2]", task="generate")


def test_idempotency_key_is_body_sha256():
    body = encode_request(req())
    assert idempotency_key(body) == hashlib.sha256(body).hexdigest()


# --- retry policy ----------------------------------------------------------------

class FakeResponse:
    def __init__(self, status_code, body=b"", json_body=None):
        self.status_code = status_code
        self.content = body
        self._json = json_body

    def json(self):
        if self._json is None:
            raise ValueError("no json")
        return self._json


class FakeSession:
    """Scripted transport: pops one behavior per attempt."""

    def __init__(self, script):
        self.script = list(script)
        self.requests = []

    def post(self, url, data=None, headers=None, timeout=None):
        self.requests.append((url, data, headers))
        action = self.script.pop(0)
        if isinstance(action, Exception):
            raise action
        return action


def ok_response():
    body = encode_response(InferenceResponse(model_id="m", text="t"))
    return FakeResponse(200, body)


def test_call_happy_path_headers():
    sess = FakeSession([ok_response()])
    resp = call("http://h", req("generate"), _session=sess,
                _sleep=lambda s: None)
    assert resp.text == "t"
    url, data, headers = sess.requests[0]
    assert url == "http://h/v1/infer"
    assert headers["Idempotency-Key"] == idempotency_key(data)
    assert headers["Content-Type"] == "application/json"


def test_call_retries_on_timeout_with_backoff():
    sleeps = []
    sess = FakeSession([requests.Timeout("t"),
                        requests.ConnectionError("c"), ok_response()])
    resp = call("http://h", req("generate"), retries=2, _session=sess,
                _sleep=sleeps.append)
    assert resp.text == "t"
    assert sleeps == [0.25, 0.5]  # 250 ms * 2^k
    assert len(sess.requests) == 3


def test_call_retries_on_503_504():
    sess = FakeSession([FakeResponse(503), FakeResponse(504), ok_response()])
    resp = call("http://h", req("generate"), retries=2, _session=sess,
                _sleep=lambda s: None)
    assert resp.text == "t"


def test_call_exhausted_retries_raise_last_error():
    sess = FakeSession([requests.Timeout("a"), requests.Timeout("b")])
    with pytest.raises(BackendError) as ei:
        call("http://h", req("generate"), retries=1, _session=sess,
             _sleep=lambda s: None)
    assert ei.value.code == "timeout"
    assert len(sess.requests) == 2


def test_call_does_not_retry_definite_failures():
    sess = FakeSession([FakeResponse(
        400, json_body={"error": {"code": "bad_request",
                                  "message": "nope"}})])
    with pytest.raises(BackendError) as ei:
        call("http://h", req("generate"), retries=3, _session=sess,
             _sleep=lambda s: None)
    assert ei.value.code == "bad_request"
    assert len(sess.requests) == 1  # exactly one attempt


def test_call_maps_unknown_error_codes():
    sess = FakeSession([FakeResponse(500, json_body={"error": {
        "code": "weird", "message": "?"}})])
    with pytest.raises(BackendError) as ei:
        call("http://h", req("generate"), retries=0, _session=sess)
    assert ei.value.code == "inference_failed"


def test_idempotency_key_stable_across_retries():
    sess = FakeSession([FakeResponse(503), ok_response()])
    call("http://h", req("generate"), retries=1, _session=sess,
         _sleep=lambda s: None)
    keys = [h["Idempotency-Key"] for _, _, h in sess.requests]
    assert keys[0] == keys[1]


# --- in-process client --------------------------------------------------------------

def test_in_process_client_round_trips_codec():
    client = InProcessClient(stub_suite())
    resp = client.infer(req("embed-text", model_id="stub-hash-embedder"))
    assert len(resp.vector) == 64
    assert all(isinstance(v, float) for v in resp.vector)


def test_in_process_client_model_not_found():
    client = InProcessClient({})
    with pytest.raises(BackendError) as ei:
        client.infer(req())
    assert ei.value.code == "model_not_found"


def test_in_process_client_wraps_handler_bugs():
    def broken(request_dict):
        raise RuntimeError("kaboom")

    client = InProcessClient({"m": broken})
    with pytest.raises(BackendError) as ei:
        client.infer(req(model_id="m"))
    assert ei.value.code == "inference_failed"


def test_in_process_client_propagates_backend_errors():
    def refuses(request_dict):
        raise BackendError("bad_request", "missing labels")

    client = InProcessClient({"m": refuses})
    with pytest.raises(BackendError) as ei:
        client.infer(req(model_id="m"))
    assert ei.value.code == "bad_request"


def test_http_client_unhealthy_when_unreachable():
    client = HttpClient("http://127.0.0.1:1", timeout_ms=200)
    assert client.healthy() is False
