"""End-to-end orchestration: capture-sim through report generation.

Every stage's intermediate artifact is persisted under
workdir/<run_id>/<stage>/ and the whole run is summarized in a manifest.
Failures isolate the sample that caused them; the run carries on.
"""

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import baseline_restore
from .capture import (DegradationParams, apply_degradation,
                      embed_into_template, make_default_templates,
                      make_synthetic_medical, _f9)
from .errors import ConfigInvalid, ScreenDxError
from .imaging import (BoundingBox, ImageBuffer, crop, read_png,
                      resize_bilinear, write_png)
from .metrics import psnr, ssim
from .protocol import HttpClient, InProcessClient
from .report import (DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE, build_prompt,
                     findings_block, generate_report, render_report,
                     report_sidecar)
from .routing import (ModalityLabel, ModelRegistry, RegistryEntry,
                      TextEmbeddingCache, diagnose, route)
from .screen import detect_screen_quad, locate_image_region, rectify
from .stubs import stub_suite

STAGES = ("synth", "detect", "rectify", "locate", "restore", "route",
          "diagnose", "report", "eval")

_DEFAULT_REGISTRY = {
    "abdominal-ct": {"endpoint": "stub", "model_id": "stub-echo-classifier",
                     "diseases": ["no finding", "lung lesion", "fracture"],
                     "input_size": 224},
    "brain-mri": {"endpoint": "stub", "model_id": "stub-echo-classifier",
                  "diseases": ["no finding", "edema", "lung lesion"],
                  "input_size": 224},
    "cardiac-ultrasound": {"endpoint": "stub",
                           "model_id": "stub-echo-classifier",
                           "diseases": ["no finding", "cardiomegaly"],
                           "input_size": 224},
    "chest-xray": {"endpoint": "stub", "model_id": "stub-echo-classifier",
                   "diseases": ["no finding", "lung opacity", "pneumonia",
                                "pleural effusion"],
                   "input_size": 224},
    "knee-xray": {"endpoint": "stub", "model_id": "stub-echo-classifier",
                  "diseases": ["no finding", "fracture"],
                  "input_size": 224},
}

_DEFAULT_LABELS = [
    {"id": "abdominal-ct", "prompt": "abdominal CT"},
    {"id": "brain-mri", "prompt": "brain MRI"},
    {"id": "cardiac-ultrasound", "prompt": "cardiac ultrasound"},
    {"id": "chest-xray", "prompt": "chest X-ray"},
    {"id": "knee-xray", "prompt": "knee X-ray"},
]

_KNOWN_KEYS = {
    "": {"workdir", "seed", "n_samples", "param_scale", "capture",
         "rectify", "templates", "images", "backend", "labels", "registry",
         "report", "workers", "models"},
    "capture": {"out_w", "out_h"},
    "rectify": {"out_w", "out_h"},
    "templates": {"builtin_count"},
    "images": {"builtin_count", "size"},
    "backend": {"mode", "endpoint", "timeout_ms", "retries"},
    "report": {"corrected_spelling", "temperature", "max_tokens"},
    "models": {"embedder", "vlm", "restorer"},
}


def _check_keys(d, scope):
    known = _KNOWN_KEYS[scope]
    for k in d:
        if k not in known:
            where = scope or "top level"
            raise ConfigInvalid(f"unknown config key {k!r} at {where}")


@dataclass(frozen=True)
class PipelineConfig:
    workdir: Path
    seed: int
    n_samples: int = 3
    param_scale: float = 0.5
    capture_w: int = 1600
    capture_h: int = 1200
    rectify_w: int = 1280
    rectify_h: int = 720
    template_count: int = 6
    image_count: int = 8
    image_size: int = 512
    backend_mode: str = "stub"       # "stub" | "http"
    backend_endpoint: str = None
    backend_timeout_ms: int = 30000
    backend_retries: int = 2
    labels: tuple = ()
    registry: dict = field(default_factory=dict)
    corrected_spelling: bool = False
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    workers: int = 1
    embed_model: str = "stub-hash-embedder"
    vlm_model: str = "stub-template-vlm"
    restorer_model: str = None       # None -> builtin baseline_restore

    def __post_init__(self):
        if self.n_samples < 0:
            raise ConfigInvalid("n_samples must be >= 0")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if self.backend_mode not in ("stub", "http"):
            raise ConfigInvalid(f"backend mode {self.backend_mode!r}")
        if self.backend_mode == "http" and not self.backend_endpoint:
            raise ConfigInvalid("http backend requires an endpoint")
        if not self.labels:
            raise ConfigInvalid("at least one routing label required")

    def canonical(self):
        d = {
            "seed": self.seed, "n_samples": self.n_samples,
            "param_scale": _f9(self.param_scale),
            "capture": [self.capture_w, self.capture_h],
            "rectify": [self.rectify_w, self.rectify_h],
            "templates": self.template_count,
            "images": [self.image_count, self.image_size],
            "backend": [self.backend_mode, self.backend_endpoint or ""],
            "labels": [[l.id, l.prompt] for l in self.labels],
            "registry": {k: {"endpoint": e.endpoint, "model_id": e.model_id,
                             "diseases": list(e.diseases),
                             "input_size": e.input_size}
                         for k, e in sorted(self.registry.items())},
            "report": [self.corrected_spelling, _f9(self.temperature),
                       self.max_tokens],
            "models": [self.embed_model, self.vlm_model,
                       self.restorer_model or ""],
        }
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def load_config(path_or_dict, overrides=None):
    """Parse and validate config; unknown keys are hard errors."""
    if isinstance(path_or_dict, dict):
        raw = dict(path_or_dict)
    else:
        try:
            raw = json.loads(Path(path_or_dict).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigInvalid(f"cannot read config: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigInvalid("config root must be an object")
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})
    _check_keys(raw, "")
    for scope in ("capture", "rectify", "templates", "images", "backend",
                  "report", "models"):
        if scope in raw:
            if not isinstance(raw[scope], dict):
                raise ConfigInvalid(f"config key {scope!r} must be an object")
            _check_keys(raw[scope], scope)
    if "workdir" not in raw or "seed" not in raw:
        raise ConfigInvalid("config requires workdir and seed")
    labels_raw = raw.get("labels", _DEFAULT_LABELS)
    labels = tuple(ModalityLabel(id=l["id"], prompt=l["prompt"])
                   for l in labels_raw)
    reg_raw = raw.get("registry", _DEFAULT_REGISTRY)
    registry = {}
    for mod, spec in reg_raw.items():
        registry[mod] = RegistryEntry(
            endpoint=spec["endpoint"], model_id=spec["model_id"],
            diseases=tuple(spec["diseases"]),
            input_size=int(spec["input_size"]))
    cap = raw.get("capture", {})
    rect = raw.get("rectify", {})
    rep = raw.get("report", {})
    mdl = raw.get("models", {})
    be = raw.get("backend", {"mode": "stub"})
    return PipelineConfig(
        workdir=Path(raw["workdir"]),
        seed=int(raw["seed"]),
        n_samples=int(raw.get("n_samples", 3)),
        param_scale=float(raw.get("param_scale", 0.5)),
        capture_w=int(cap.get("out_w", 1600)),
        capture_h=int(cap.get("out_h", 1200)),
        rectify_w=int(rect.get("out_w", 1280)),
        rectify_h=int(rect.get("out_h", 720)),
        template_count=int(raw.get("templates", {})
                           .get("builtin_count", 6)),
        image_count=int(raw.get("images", {}).get("builtin_count", 8)),
        image_size=int(raw.get("images", {}).get("size", 512)),
        backend_mode=be.get("mode", "stub"),
        backend_endpoint=be.get("endpoint"),
        backend_timeout_ms=int(be.get("timeout_ms", 30000)),
        backend_retries=int(be.get("retries", 2)),
        labels=labels,
        registry=registry,
        corrected_spelling=bool(rep.get("corrected_spelling", False)),
        temperature=float(rep.get("temperature", DEFAULT_TEMPERATURE)),
        max_tokens=int(rep.get("max_tokens", DEFAULT_MAX_TOKENS)),
        workers=int(raw.get("workers", 1)),
        embed_model=mdl.get("embedder", "stub-hash-embedder"),
        vlm_model=mdl.get("vlm", "stub-template-vlm"),
        restorer_model=mdl.get("restorer"))


def make_client(config):
    if config.backend_mode == "stub":
        return InProcessClient(stub_suite())
    return HttpClient(config.backend_endpoint,
                      timeout_ms=config.backend_timeout_ms,
                      retries=config.backend_retries)


def letterbox(img, w, h):
    """Aspect-preserving resize onto a black w x h canvas (centered) —
    the registration reference for eval, mirroring slot embedding."""
    scale = min(w / img.width, h / img.height)
    nw = max(1, int(round(img.width * scale)))
    nh = max(1, int(round(img.height * scale)))
    resized = resize_bilinear(img, nw, nh)
    canvas = np.zeros((h, w, img.channels))
    ox, oy = (w - nw) // 2, (h - nh) // 2
    canvas[oy:oy + nh, ox:ox + nw] = resized.data
    return ImageBuffer(canvas)


def _run_sample(i, config, client, templates, images, cache, run_dir):
    """One sample through every stage; returns its manifest record."""
    rec = {"id": i, "status": "ok", "failed_stage": None, "error": None,
           "artifacts": {}, "route": None, "probabilities": None,
           "metrics": None}
    stage = "synth"
    try:
        rng = np.random.default_rng([config.seed, i])
        tpl = templates[int(rng.integers(len(templates)))]
        med = images[int(rng.integers(len(images)))]
        slot_index = int(rng.integers(len(tpl.slots)))
        noise_seed = int(rng.integers(0, 2 ** 63))
        params = DegradationParams.sample(rng, noise_seed,
                                          scale=config.param_scale)
        screenshot, slot = embed_into_template(tpl, med, slot_index)
        degraded, quad, h_true = apply_degradation(
            screenshot, params, config.capture_w, config.capture_h)
        dp = run_dir / "synth" / f"{i:04d}_degraded.png"
        write_png(degraded, dp, bits=8, level=1)
        gt = {"slot": {"x": slot.x, "y": slot.y, "w": slot.w, "h": slot.h},
              "quad": [_f9(v) for v in quad.flat()],
              "h_true": [_f9(v) for v in h_true.flat()],
              "template_id": tpl.template_id}
        gp = run_dir / "synth" / f"{i:04d}_truth.json"
        gp.write_text(json.dumps(gt, sort_keys=True))
        rec["artifacts"]["synth"] = [dp.name, gp.name]

        stage = "detect"
        det = detect_screen_quad(degraded)
        qp = run_dir / "detect" / f"{i:04d}_quad.json"
        qp.write_text(json.dumps(
            {"quad": [_f9(v) for v in det.quad.flat()],
             "confidence": _f9(det.confidence), "source": det.source},
            sort_keys=True))
        rec["artifacts"]["detect"] = [qp.name]

        stage = "rectify"
        rectified = rectify(degraded, det, out_w=config.rectify_w,
                            out_h=config.rectify_h)
        rp = run_dir / "rectify" / f"{i:04d}_rectified.png"
        write_png(rectified, rp, bits=8, level=1)
        rec["artifacts"]["rectify"] = [rp.name]

        stage = "locate"
        region = locate_image_region(rectified)
        bp = run_dir / "locate" / f"{i:04d}_bbox.json"
        bp.write_text(json.dumps(
            {"x": region.bbox.x, "y": region.bbox.y,
             "w": region.bbox.w, "h": region.bbox.h,
             "score": _f9(region.score), "source": region.source},
            sort_keys=True))
        rec["artifacts"]["locate"] = [bp.name]

        stage = "restore"
        cropped = crop(rectified, region.bbox)
        if config.restorer_model:
            from .align import restore_with_backend
            restored = restore_with_backend(cropped, client,
                                            model_id=config.restorer_model)
        else:
            restored = baseline_restore(cropped)
        sp = run_dir / "restore" / f"{i:04d}_restored.png"
        write_png(restored, sp, bits=8, level=1)
        rec["artifacts"]["restore"] = [sp.name]

        stage = "route"
        decision = route(restored, config.labels, client,
                         model_id=config.embed_model, cache=cache)
        rtp = run_dir / "route" / f"{i:04d}_route.json"
        rtp.write_text(json.dumps(
            {"chosen": decision.chosen,
             "similarities": {k: _f9(v)
                              for k, v in decision.similarities.items()}},
            sort_keys=True))
        rec["route"] = decision.chosen
        rec["artifacts"]["route"] = [rtp.name]

        stage = "diagnose"
        registry = ModelRegistry(entries=config.registry)
        result = diagnose(restored, decision.chosen, registry,
                          lambda ep: client if ep == "stub"
                          else HttpClient(ep))
        pp = run_dir / "diagnose" / f"{i:04d}_probs.json"
        pp.write_text(json.dumps(
            {k: _f9(v) for k, v in result.probabilities.items()},
            sort_keys=True))
        rec["probabilities"] = {k: _f9(v)
                                for k, v in result.probabilities.items()}
        rec["artifacts"]["diagnose"] = [pp.name]

        stage = "report"
        block = findings_block(result, config.corrected_spelling)
        bundle = build_prompt(
            image_ref=sp.read_bytes(), block=block,
            temperature=config.temperature, max_tokens=config.max_tokens)
        report = generate_report(bundle, client, model_id=config.vlm_model)
        tp = run_dir / "report" / f"{i:04d}_report.txt"
        tp.write_text(render_report(report))
        scp = run_dir / "report" / f"{i:04d}_sidecar.json"
        scp.write_text(report_sidecar(f"{i:04d}", config.vlm_model, bundle))
        rec["artifacts"]["report"] = [tp.name, scp.name]

        stage = "eval"
        reference = letterbox(med, restored.width, restored.height)
        m = {"psnr_restored": restored_psnr(reference, restored),
             "psnr_cropped": restored_psnr(reference, cropped),
             "ssim_restored": _f9(ssim(reference, restored))}
        mp = run_dir / "eval" / f"{i:04d}_metrics.json"
        mp.write_text(json.dumps(m, sort_keys=True))
        rec["metrics"] = m
        rec["artifacts"]["eval"] = [mp.name]
    except ScreenDxError as e:
        rec["status"] = "failed"
        rec["failed_stage"] = stage
        rec["error"] = f"{type(e).__name__}: {e}"
    return rec


def restored_psnr(a, b):
    v = psnr(a, b)
    return "Infinity" if v == float("inf") else _f9(v)


def run_pipeline(config, run_id=None):
    """Execute every stage for every sample; returns the manifest dict."""
    if run_id is None:
        run_id = time.strftime("run-%Y%m%d-%H%M%S")
    run_dir = config.workdir / run_id
    for s in STAGES:
        (run_dir / s).mkdir(parents=True, exist_ok=True)

    client = make_client(config)
    cache = TextEmbeddingCache()
    templates = make_default_templates(count=config.template_count)
    images = [make_synthetic_medical(seed=config.seed + k,
                                     w=config.image_size,
                                     h=config.image_size)
              for k in range(config.image_count)]

    t0 = time.time()
    idx = list(range(config.n_samples))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as ex:
            records = list(ex.map(
                lambda i: _run_sample(i, config, client, templates, images,
                                      cache, run_dir), idx))
    else:
        records = [_run_sample(i, config, client, templates, images, cache,
                               run_dir) for i in idx]

    per_stage = []
    for s in STAGES:
        done = sum(1 for r in records if s in r["artifacts"])
        failed_here = sum(1 for r in records if r["failed_stage"] == s)
        per_stage.append({
            "stage": s, "inputs": config.n_samples, "outputs": done,
            "status": "ok" if failed_here == 0 else "partial",
            "duration_ms": None,  # populated on the run record instead
        })
    manifest = {
        "run_id": run_id,
        "config_hash": config.config_hash(),
        "duration_ms": int((time.time() - t0) * 1000),
        "stages": per_stage,
        "samples": records,
    }
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def normalize_manifest(manifest):
    """Strip run-identity and timing so two runs can be compared."""
    m = json.loads(json.dumps(manifest))
    m.pop("run_id", None)
    m.pop("duration_ms", None)
    for s in m.get("stages", []):
        s.pop("duration_ms", None)
    return m
