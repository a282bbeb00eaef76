"""Zero-shot modality routing and diagnostic dispatch.

Routes an image to a modality by cosine similarity between its embedding
and per-modality text-prompt embeddings, then forwards it to the
registered classifier backend for that modality.
"""

import json
import threading
from dataclasses import dataclass

import numpy as np

from .errors import (ConfigInvalid, EmptyLabelSet, LabelMismatch,
                     LengthMismatch, UnknownModality, ZeroVector)
from .imaging import resize_bilinear
from .protocol import InferenceRequest
from . import imaging


@dataclass(frozen=True)
class ModalityLabel:
    id: str
    prompt: str

    def __post_init__(self):
        if not self.id or not self.prompt:
            raise ValueError("label id and prompt must be non-empty")


@dataclass(frozen=True)
class RoutingDecision:
    chosen: str
    similarities: dict

    def __post_init__(self):
        best = max(self.similarities.values())
        winners = sorted(k for k, v in self.similarities.items()
                         if v == best)
        if self.chosen != winners[0]:
            raise ValueError("chosen label must attain the maximum "
                             "similarity with lexicographic tie-break")


@dataclass(frozen=True)
class DiagnosticResult:
    model_id: str
    probabilities: dict  # ordered: disease name -> p

    def __post_init__(self):
        names = list(self.probabilities)
        if len(set(names)) != len(names):
            raise ValueError("duplicate disease names")
        for k, v in self.probabilities.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"probability for {k} out of range: {v}")


@dataclass(frozen=True)
class RegistryEntry:
    endpoint: str       # backend endpoint URL or "stub"
    model_id: str
    diseases: tuple
    input_size: int


@dataclass(frozen=True)
class ModelRegistry:
    entries: dict  # modality id -> RegistryEntry


def load_registry(path):
    """Registry file: modality id -> {endpoint, model_id, diseases,
    input_size}; validated eagerly."""
    try:
        raw = json.loads(open(path).read())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigInvalid(f"cannot read registry {path}: {e}") from e
    entries = {}
    for mod, spec in raw.items():
        missing = {"endpoint", "model_id", "diseases",
                   "input_size"} - set(spec)
        if missing:
            raise ConfigInvalid(f"registry entry {mod} missing {missing}")
        diseases = tuple(spec["diseases"])
        if not diseases or len(set(diseases)) != len(diseases):
            raise ConfigInvalid(f"registry entry {mod}: diseases must be "
                                f"non-empty and unique")
        if int(spec["input_size"]) < 1:
            raise ConfigInvalid(f"registry entry {mod}: bad input_size")
        entries[mod] = RegistryEntry(endpoint=spec["endpoint"],
                                     model_id=spec["model_id"],
                                     diseases=diseases,
                                     input_size=int(spec["input_size"]))
    return ModelRegistry(entries=entries)


def cosine_similarity(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or len(u) == 0:
        raise LengthMismatch(f"{u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu <= 1e-12 or nv <= 1e-12:
        raise ZeroVector("cosine undefined for (near-)zero vectors")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


class TextEmbeddingCache:
    """Prompt string -> embedding; safe under concurrent read/insert."""

    def __init__(self):
        self._cache = {}
        self._lock = threading.Lock()

    def get(self, prompt):
        return self._cache.get(prompt)

    def put(self, prompt, vec):
        with self._lock:
            self._cache[prompt] = tuple(vec)


def route(img, labels, embed_client, model_id="stub-hash-embedder",
          cache=None):
    """One image embedding, one (cached) text embedding per label, argmax
    cosine with ascending-lexicographic tie-break."""
    labels = list(labels)
    if not labels:
        raise EmptyLabelSet("need at least one modality label")
    if len(set(l.id for l in labels)) != len(labels):
        raise ValueError("label ids must be unique")
    img_vec = embed_client.infer(InferenceRequest(
        task="embed-image", model_id=model_id,
        image_b64=imaging.encode_png(img))).vector
    sims = {}
    for label in labels:
        vec = cache.get(label.prompt) if cache is not None else None
        if vec is None:
            vec = embed_client.infer(InferenceRequest(
                task="embed-text", model_id=model_id,
                text=label.prompt)).vector
            if cache is not None:
                cache.put(label.prompt, vec)
        sims[label.id] = cosine_similarity(img_vec, vec)
    best = max(sims.values())
    chosen = sorted(k for k, v in sims.items() if v == best)[0]
    return RoutingDecision(chosen=chosen, similarities=sims)


def diagnose(img, modality, registry, client_factory):
    """Resize to the registry entry's input size, classify, and validate
    the probabilities against the registered disease list."""
    entry = registry.entries.get(modality)
    if entry is None:
        raise UnknownModality(modality)
    client = client_factory(entry.endpoint)
    size = entry.input_size
    resized = resize_bilinear(img, size, size)
    resp = client.infer(InferenceRequest(
        task="classify", model_id=entry.model_id,
        image_b64=imaging.encode_png(resized),
        labels=entry.diseases,
        params={"input_size": size}))
    probs = resp.probabilities or {}
    # JSON objects carry no order over the wire; require the same label
    # set and re-impose the registry's disease order
    if set(probs) != set(entry.diseases):
        raise LabelMismatch(
            f"backend labels {sorted(probs)} != registry "
            f"{sorted(entry.diseases)}")
    for k, v in probs.items():
        if not 0.0 <= v <= 1.0:
            raise LabelMismatch(f"probability {k}={v} out of range")
    return DiagnosticResult(model_id=entry.model_id,
                            probabilities={d: probs[d]
                                           for d in entry.diseases})
