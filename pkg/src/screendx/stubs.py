"""Deterministic in-process model stubs.

Every stub is a pure function of its request, computed with arithmetic that
any implementation language can reproduce bit-for-bit (integer pixel sums,
sha256-derived vectors, plain string templates). The reference server in
server/ mirrors these semantics; tests/vectors pins them.
"""

import base64
import hashlib

from .errors import BackendError
from . import png

HASH_EMBED_DIM = 64
PLANTED_DIM = 8
PLANTED_PROMPTS = (
    "abdominal CT",
    "brain MRI",
    "cardiac ultrasound",
    "chest X-ray",
    "knee X-ray",
)

PROMPT_SCAFFOLD = "Findings: {} Impression: {}"


def _pixels(req):
    data = base64.b64decode(req["image_b64"])
    arr, bits = png.decode_raw(data)
    return arr.reshape(-1).tolist(), (1 << bits) - 1


def _int_mean(samples, peak):
    # exact integer sum, then two float divisions: reproducible everywhere
    return (float(sum(samples)) / len(samples)) / peak


def identity_restorer(req):
    return {"image_b64": req["image_b64"]}


def hash_embedder(req):
    if req["task"] == "embed-text":
        content = req["text"].encode("utf-8")
    else:
        content = base64.b64decode(req["image_b64"])
    digest = hashlib.sha256(content).digest()
    vec = []
    for i in range(HASH_EMBED_DIM):
        block = hashlib.sha256(digest + i.to_bytes(4, "big")).digest()
        u = int.from_bytes(block[:8], "big")
        vec.append(((u >> 11) / float(1 << 53)) * 2.0 - 1.0)
    return {"vector": vec}


def echo_classifier(req):
    """Probability k = mean intensity of the k-th quantile band of pixels."""
    labels = req.get("labels")
    if not labels:
        raise BackendError("bad_request", "classify requires labels")
    samples, peak = _pixels(req)
    samples.sort()
    n = len(samples)
    k = len(labels)
    probs = {}
    for i, label in enumerate(labels):
        lo = (i * n) // k
        hi = ((i + 1) * n) // k
        band = samples[lo:hi] if hi > lo else samples[min(lo, n - 1):][:1]
        probs[label] = _int_mean(band, peak)
    return {"probabilities": probs}


def planted_embedder(req):
    """Routing test fixture: image class k (from mean intensity, k =
    floor(10 * mean + 0.5)) embeds at cosine exactly 0.9 with prompt k and
    0 with every other prompt."""
    if req["task"] == "embed-text":
        text = req["text"]
        if text not in PLANTED_PROMPTS:
            raise BackendError("bad_request",
                               f"unknown planted prompt: {text!r}")
        k = PLANTED_PROMPTS.index(text)
        vec = [0.0] * PLANTED_DIM
        vec[k] = 1.0
        return {"vector": vec}
    samples, peak = _pixels(req)
    mean = _int_mean(samples, peak)
    k = int(10.0 * mean + 0.5)
    k = min(max(k, 0), len(PLANTED_PROMPTS) - 1)
    vec = [0.0] * PLANTED_DIM
    vec[k] = 0.9
    vec[len(PLANTED_PROMPTS) + (k % (PLANTED_DIM - len(PLANTED_PROMPTS)))] \
        = 0.19 ** 0.5
    return {"vector": vec}


def template_vlm(req):
    """Emits a fixed well-formed report embedding the prompt's statement
    block verbatim. Statements are the lines above the instruction line
    (the line containing the report scaffold)."""
    lines = req["text"].split("\n")
    statements = []
    for line in lines:
        if PROMPT_SCAFFOLD in line:
            break
        if line.strip():
            statements.append(line)
    if statements:
        findings = " ".join(statements)
        impression = (f"Automated impression derived from "
                      f"{len(statements)} finding statement(s).")
    else:
        findings = "No diagnostic priors were provided for this study."
        impression = "No automated impression available."
    return {"text": f"Findings: {findings} Impression: {impression}"}


def variance_segmenter(req):
    """Cheap backend-path segmenter: emits the builtin Otsu mask as PNG."""
    import numpy as np
    from .imaging import decode_png, to_grayscale
    from .screen import _otsu_threshold
    img = decode_png(base64.b64decode(req["image_b64"]))
    gray = to_grayscale(img).data[:, :, 0]
    mask = (gray > _otsu_threshold(gray)).astype(np.float64)
    return {"mask_b64": base64.b64encode(
        png.encode(mask[:, :, None], bits=8)).decode()}


STUB_MODELS = {
    "stub-identity-restorer": identity_restorer,
    "stub-hash-embedder": hash_embedder,
    "stub-echo-classifier": echo_classifier,
    "stub-planted-embedder": planted_embedder,
    "stub-template-vlm": template_vlm,
    "stub-screen-segmenter": variance_segmenter,
}


def stub_suite():
    """model_id -> handler(request_dict) -> response payload dict."""
    return dict(STUB_MODELS)
