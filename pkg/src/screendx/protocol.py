"""Wire contract for all learned-model backends.

Every neural model (segmenter, detector, restorer, embedder, classifier,
report generator) is reached through HTTP/1.1 POST /v1/infer with a JSON
body; images travel as base64 PNG. An in-process client runs the same
codec against local handlers so pipelines need no external server.
"""

import base64
import binascii
import hashlib
import importlib.resources
import json
import time
from dataclasses import dataclass, field

import jsonschema
import requests

from .errors import BackendError, SchemaViolation

TASKS = ("segment", "detect", "restore", "embed-image", "embed-text",
         "classify", "generate")

_REQUIRED = {
    "segment": ("image_b64",),
    "detect": ("image_b64",),
    "restore": ("image_b64",),
    "embed-image": ("image_b64",),
    "embed-text": ("text",),
    "classify": ("image_b64",),
    "generate": ("image_b64", "text"),
}

_PAYLOAD_FIELD = {
    "segment": "mask_b64",
    "detect": "boxes",
    "restore": "image_b64",
    "embed-image": "vector",
    "embed-text": "vector",
    "classify": "probabilities",
    "generate": "text",
}


def _load_schema(name):
    ref = importlib.resources.files("screendx") / "schemas" / "v1" / name
    return json.loads(ref.read_text())


_REQ_SCHEMA = None
_RESP_SCHEMA = None


def _schemas():
    global _REQ_SCHEMA, _RESP_SCHEMA
    if _REQ_SCHEMA is None:
        _REQ_SCHEMA = _load_schema("infer_request.schema.json")
        _RESP_SCHEMA = _load_schema("infer_response.schema.json")
    return _REQ_SCHEMA, _RESP_SCHEMA


@dataclass(frozen=True)
class InferenceRequest:
    task: str
    model_id: str
    image_b64: str = None
    text: str = None
    labels: tuple = None
    params: dict = None

    def __post_init__(self):
        if self.image_b64 is not None and isinstance(self.image_b64, bytes):
            object.__setattr__(self, "image_b64",
                               base64.b64encode(self.image_b64).decode())
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        _validate_request_dict(request_to_dict(self))


@dataclass(frozen=True)
class InferenceResponse:
    model_id: str
    latency_ms: float = 0.0
    mask_b64: str = None
    boxes: tuple = None
    image_b64: str = None
    vector: tuple = None
    probabilities: dict = None
    text: str = None

    def decode_b64(self, which):
        val = getattr(self, which)
        if val is None:
            raise SchemaViolation(which, "payload missing")
        return base64.b64decode(val)


def request_to_dict(req):
    d = {"task": req.task, "model_id": req.model_id}
    if req.image_b64 is not None:
        d["image_b64"] = req.image_b64
    if req.text is not None:
        d["text"] = req.text
    if req.labels is not None:
        d["labels"] = list(req.labels)
    if req.params is not None:
        d["params"] = dict(req.params)
    return d


def response_to_dict(resp):
    d = {"model_id": resp.model_id, "latency_ms": resp.latency_ms}
    for f in ("mask_b64", "boxes", "image_b64", "vector", "probabilities",
              "text"):
        v = getattr(resp, f)
        if v is not None:
            d[f] = list(v) if f in ("boxes", "vector") else v
    return d


def _canonical(obj):
    # floats render at up to 17 significant digits (shortest repr)
    return json.dumps(obj, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def _validate_request_dict(d):
    task = d.get("task")
    if task not in TASKS:
        raise SchemaViolation("task", f"unknown task {task!r}")
    if not isinstance(d.get("model_id"), str) or not d["model_id"]:
        raise SchemaViolation("model_id", "must be a non-empty string")
    for f in _REQUIRED[task]:
        if not isinstance(d.get(f), str):
            raise SchemaViolation(f, f"required for task {task}")
    for f in ("image_b64",):
        if f in d:
            try:
                base64.b64decode(d[f], validate=True)
            except (binascii.Error, ValueError) as e:
                raise SchemaViolation(f, f"invalid base64: {e}") from e
    if "labels" in d:
        if (not isinstance(d["labels"], list)
                or not all(isinstance(x, str) for x in d["labels"])):
            raise SchemaViolation("labels", "must be a list of strings")
    try:
        jsonschema.validate(d, _schemas()[0])
    except jsonschema.ValidationError as e:
        raise SchemaViolation("/".join(str(p) for p in e.absolute_path)
                              or "<root>", e.message) from e


def _validate_response_dict(d, task=None):
    try:
        jsonschema.validate(d, _schemas()[1])
    except jsonschema.ValidationError as e:
        raise SchemaViolation("/".join(str(p) for p in e.absolute_path)
                              or "<root>", e.message) from e
    payload_fields = [f for f in _PAYLOAD_FIELD.values()
                      if d.get(f) is not None]
    # vector serves two tasks; dedupe
    payload_fields = sorted(set(payload_fields))
    if len(payload_fields) != 1:
        raise SchemaViolation("<payload>",
                              f"expected exactly one payload field, got "
                              f"{payload_fields}")
    if task is not None and payload_fields[0] != _PAYLOAD_FIELD[task]:
        raise SchemaViolation(payload_fields[0],
                              f"payload does not match task {task}")
    if "probabilities" in d and d["probabilities"] is not None:
        for k, v in d["probabilities"].items():
            if not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
                raise SchemaViolation(f"probabilities[{k}]",
                                      f"out of range: {v}")
    if "boxes" in d and d["boxes"] is not None:
        for i, b in enumerate(d["boxes"]):
            for f in ("x", "y", "w", "h", "score"):
                if f not in b:
                    raise SchemaViolation(f"boxes[{i}].{f}", "missing")


def encode_request(req):
    d = request_to_dict(req)
    _validate_request_dict(d)
    return _canonical(d)


def decode_request(data):
    try:
        d = json.loads(data)
    except json.JSONDecodeError as e:
        raise SchemaViolation("<root>", f"invalid JSON: {e}") from e
    _validate_request_dict(d)
    return InferenceRequest(
        task=d["task"], model_id=d["model_id"],
        image_b64=d.get("image_b64"), text=d.get("text"),
        labels=tuple(d["labels"]) if "labels" in d else None,
        params=d.get("params"))


def encode_response(resp):
    d = response_to_dict(resp)
    _validate_response_dict(d)
    return _canonical(d)


def decode_response(data, task=None):
    try:
        d = json.loads(data)
    except json.JSONDecodeError as e:
        raise SchemaViolation("<root>", f"invalid JSON: {e}") from e
    _validate_response_dict(d, task=task)
    return InferenceResponse(
        model_id=d["model_id"], latency_ms=d.get("latency_ms", 0.0),
        mask_b64=d.get("mask_b64"),
        boxes=tuple(d["boxes"]) if d.get("boxes") is not None else None,
        image_b64=d.get("image_b64"),
        vector=tuple(d["vector"]) if d.get("vector") is not None else None,
        probabilities=d.get("probabilities"), text=d.get("text"))


def idempotency_key(body):
    return hashlib.sha256(body).hexdigest()


def call(endpoint, req, timeout_ms=30000, retries=2, _sleep=time.sleep,
         _session=None):
    """POST to endpoint/v1/infer with at most 1+retries attempts.

    Retries apply only to timeouts and connection failures (including 503
    and 504 responses); bad_request and other definite failures surface
    immediately. Backoff is 250 * 2^k ms.
    """
    body = encode_request(req)
    key = idempotency_key(body)
    url = endpoint.rstrip("/") + "/v1/infer"
    sess = _session or requests
    last_exc = None
    for attempt in range(1 + retries):
        if attempt:
            _sleep(0.25 * (2 ** (attempt - 1)))
        try:
            r = sess.post(url, data=body,
                          headers={"Content-Type": "application/json",
                                   "Idempotency-Key": key},
                          timeout=timeout_ms / 1000.0)
        except (requests.Timeout, requests.ConnectionError) as e:
            last_exc = BackendError("timeout", str(e))
            continue
        if r.status_code in (503, 504):
            last_exc = _error_from_body(r, default="timeout")
            continue
        if r.status_code != 200:
            raise _error_from_body(r, default="inference_failed")
        return decode_response(r.content, task=req.task)
    raise last_exc


def _error_from_body(r, default):
    try:
        err = r.json().get("error", {})
        code = err.get("code", default)
        if code not in BackendError.CODES:
            code = default
        return BackendError(code, err.get("message", f"HTTP {r.status_code}"))
    except (ValueError, AttributeError):
        return BackendError(default, f"HTTP {r.status_code}")


class HttpClient:
    """Thin inference client bound to one endpoint. Thread-safe."""

    def __init__(self, endpoint, timeout_ms=30000, retries=2):
        self.endpoint = endpoint
        self.timeout_ms = timeout_ms
        self.retries = retries

    def infer(self, req):
        return call(self.endpoint, req, timeout_ms=self.timeout_ms,
                    retries=self.retries)

    def healthy(self):
        try:
            r = requests.get(self.endpoint.rstrip("/") + "/v1/health",
                             timeout=self.timeout_ms / 1000.0)
            return r.status_code == 200 and r.json().get("status") == "ok"
        except requests.RequestException:
            return False


class InProcessClient:
    """Runs handlers locally but still round-trips the wire codec, so
    in-process and over-the-wire pipelines see identical bytes."""

    def __init__(self, handlers):
        # handlers: model_id -> callable(request_dict) -> payload dict
        self.handlers = dict(handlers)
        self.calls = {}  # model_id -> count (diagnostics / tests)

    def infer(self, req):
        body = encode_request(req)
        d = json.loads(body)
        handler = self.handlers.get(d["model_id"])
        if handler is None:
            raise BackendError("model_not_found", d["model_id"])
        self.calls[d["model_id"]] = self.calls.get(d["model_id"], 0) + 1
        try:
            payload = handler(d)
        except BackendError:
            raise
        except Exception as e:  # handler bug -> inference_failed
            raise BackendError("inference_failed", str(e)) from e
        resp = dict(payload)
        resp.setdefault("model_id", d["model_id"])
        resp.setdefault("latency_ms", 0.0)
        return decode_response(_canonical(resp), task=d["task"])

    def healthy(self):
        return True
