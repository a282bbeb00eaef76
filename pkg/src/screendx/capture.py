"""Camera-free capture simulator.

Composites medical images into synthetic GUI templates, then applies a
seeded photographic degradation chain (perspective, illumination, gamma,
moire, sensor noise) with exact ground truth for every stage.
"""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import EmptyInput, SlotIndexOutOfRange
from .imaging import (BoundingBox, Homography, ImageBuffer, Point2,
                      Quadrilateral, estimate_homography, resize_bilinear,
                      warp_perspective, write_png)

PARAM_RANGES = {
    "yaw_deg": (-30.0, 30.0),
    "pitch_deg": (-15.0, 15.0),
    "ambient": (0.4, 1.0),
    "gradient_strength": (0.0, 0.5),
    "gradient_angle": (0.0, 2.0 * np.pi),
    "gamma": (0.7, 1.6),
    "moire_amp": (0.0, 0.15),
    "moire_freq": (0.0, 0.5),  # open interval; sampled away from endpoints
    "moire_angle": (0.0, 2.0 * np.pi),
    "noise_sigma": (0.0, 0.05),
}


@dataclass(frozen=True)
class GuiTemplate:
    background: ImageBuffer
    slots: tuple
    template_id: str

    def __post_init__(self):
        slots = tuple(self.slots)
        if not slots:
            raise ValueError("template needs at least one slot")
        for s in slots:
            if not s.within(self.background):
                raise ValueError(f"slot {s} outside template bounds")
        for i in range(len(slots)):
            for j in range(i + 1, len(slots)):
                if slots[i].iou(slots[j]) > 0:
                    raise ValueError("slots overlap")
        object.__setattr__(self, "slots", slots)


@dataclass(frozen=True)
class DegradationParams:
    yaw_deg: float
    pitch_deg: float
    ambient: float
    gradient_strength: float
    gradient_angle: float
    gamma: float
    moire_amp: float
    moire_freq: float
    moire_angle: float
    noise_sigma: float
    seed: int

    def __post_init__(self):
        for name, (lo, hi) in PARAM_RANGES.items():
            v = getattr(self, name)
            if not (lo <= v <= hi):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        if self.moire_amp > 0 and not (0.0 < self.moire_freq < 0.5):
            raise ValueError("moire_freq must lie in (0, 0.5)")

    @classmethod
    def frontal(cls, seed=0):
        """No degradation at all: frontal view, unit photometrics."""
        return cls(yaw_deg=0.0, pitch_deg=0.0, ambient=1.0,
                   gradient_strength=0.0, gradient_angle=0.0, gamma=1.0,
                   moire_amp=0.0, moire_freq=0.25, moire_angle=0.0,
                   noise_sigma=0.0, seed=seed)

    @classmethod
    def sample(cls, rng, seed, scale=1.0):
        """Draw uniformly over the stated ranges.

        scale < 1 shrinks every photometric strength toward its benign end
        (ambient toward 1, gamma toward 1) and the angles toward 0; used by
        the acceptance sweeps' "half-range" condition.
        """
        u = {k: rng.uniform(lo, hi) for k, (lo, hi) in PARAM_RANGES.items()}
        if scale != 1.0:
            u["yaw_deg"] *= scale
            u["pitch_deg"] *= scale
            u["ambient"] = 1.0 + (u["ambient"] - 1.0) * scale
            u["gradient_strength"] *= scale
            u["gamma"] = 1.0 + (u["gamma"] - 1.0) * scale
            u["moire_amp"] *= scale
            u["noise_sigma"] *= scale
        u["moire_freq"] = min(max(u["moire_freq"], 1e-6), 0.5 - 1e-6)
        return cls(seed=int(seed), **u)


@dataclass(frozen=True)
class SynthSample:
    screenshot: ImageBuffer
    degraded: ImageBuffer
    original_medical: ImageBuffer
    slot: BoundingBox
    screen_quad: Quadrilateral
    h_true: Homography
    params: DegradationParams

    def check_consistency(self, tol=1e-9):
        """h_true must map the screenshot corner rectangle onto screen_quad."""
        w, h = self.screenshot.width, self.screenshot.height
        rect = _rect_corners(w, h)
        quad = self.screen_quad.as_array()
        for i, p in enumerate(rect):
            v = self.h_true.m @ np.array([p.x, p.y, 1.0])
            err = np.hypot(v[0] / v[2] - quad[i, 0], v[1] / v[2] - quad[i, 1])
            if err > tol:
                raise AssertionError(f"h_true/quad mismatch at corner {i}: "
                                     f"{err}")


def _rect_corners(w, h):
    return [Point2(0.0, 0.0), Point2(w - 1.0, 0.0),
            Point2(w - 1.0, h - 1.0), Point2(0.0, h - 1.0)]


def embed_into_template(tpl, med, slot_index, rng_seed=0):
    """Letterbox `med` into the chosen slot; everything else untouched.

    rng_seed is reserved for placement jitter and currently unused.
    """
    if not 0 <= slot_index < len(tpl.slots):
        raise SlotIndexOutOfRange(f"slot {slot_index} of {len(tpl.slots)}")
    slot = tpl.slots[slot_index]
    scale = min(slot.w / med.width, slot.h / med.height)
    nw = max(1, int(round(med.width * scale)))
    nh = max(1, int(round(med.height * scale)))
    resized = resize_bilinear(med, nw, nh)
    canvas = tpl.background.data.copy()
    ox = slot.x + (slot.w - nw) // 2
    oy = slot.y + (slot.h - nh) // 2
    patch = np.zeros((slot.h, slot.w, tpl.background.channels))
    rd = resized.data
    if rd.shape[2] != patch.shape[2]:
        rd = np.repeat(rd[:, :, :1], patch.shape[2], axis=2) \
            if rd.shape[2] == 1 else rd.mean(axis=2, keepdims=True)
    patch[oy - slot.y:oy - slot.y + nh, ox - slot.x:ox - slot.x + nw] = rd
    canvas[slot.y:slot.y + slot.h, slot.x:slot.x + slot.w] = patch
    return ImageBuffer(canvas), slot


def synth_quad(params, img_w, img_h, out_w, out_h):
    """Project the screenshot rectangle through a pinhole camera.

    Fixed 90-degree horizontal field of view; viewing distance derived from
    the seed so the screen spans 60-85% of the output width, backed off
    deterministically if a corner would leave the frame.
    """
    rng = np.random.Generator(np.random.Philox(key=params.seed ^ 0x5EED))
    span = rng.uniform(0.60, 0.85)

    aspect = img_h / img_w
    yaw = np.deg2rad(params.yaw_deg)
    pitch = np.deg2rad(params.pitch_deg)
    cy_, sy_ = np.cos(yaw), np.sin(yaw)
    cp_, sp_ = np.cos(pitch), np.sin(pitch)
    ry = np.array([[cy_, 0.0, sy_], [0.0, 1.0, 0.0], [-sy_, 0.0, cy_]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp_, -sp_], [0.0, sp_, cp_]])
    rot = rx @ ry

    # screen plane: x in [-1,1], y (down) in [-aspect, aspect], z = 0
    corners = np.array([[-1.0, -aspect, 0.0], [1.0, -aspect, 0.0],
                        [1.0, aspect, 0.0], [-1.0, aspect, 0.0]])
    f = out_w / 2.0  # 90-degree hfov
    cx, cyc = out_w / 2.0, out_h / 2.0
    d = 1.0 / span
    margin = 0.01 * min(out_w, out_h)
    for _ in range(64):
        world = corners @ rot.T + np.array([0.0, 0.0, d])
        proj = np.stack([cx + f * world[:, 0] / world[:, 2],
                         cyc + f * world[:, 1] / world[:, 2]], axis=1)
        if (proj[:, 0].min() >= margin and proj[:, 0].max() <= out_w - margin
                and proj[:, 1].min() >= margin
                and proj[:, 1].max() <= out_h - margin):
            break
        d *= 1.08
    pts = [Point2(float(x), float(y)) for x, y in proj]
    quad = Quadrilateral(tuple(pts))
    h = estimate_homography(_rect_corners(img_w, img_h), pts)
    return quad, h


def apply_degradation(screenshot, params, out_w, out_h):
    """Deterministic degradation chain; returns (degraded, quad, h_true).

    Stages with zero strength are skipped outright so the zero-strength
    chain is bit-exactly the bare perspective warp. The illumination and
    moire fields are planar, so they are built by broadcasting 1-D pixel
    coordinate vectors rather than full meshgrids.
    """
    quad, h_true = synth_quad(params, screenshot.width, screenshot.height,
                              out_w, out_h)
    # the screen quad never reaches the frame edge (synth_quad backs the
    # camera off to keep a margin) and the scene's horizon lies outside the
    # frame for every admissible tilt, so everything outside the quad's
    # bounding box is pure fill: warping only that window is bit-identical
    # to the full-frame warp
    xs = [p.x for p in quad.corners]
    ys = [p.y for p in quad.corners]
    x0 = max(0, int(np.floor(min(xs))))
    x1 = min(out_w, int(np.ceil(max(xs))) + 1)
    y0 = max(0, int(np.floor(min(ys))))
    y1 = min(out_h, int(np.ceil(max(ys))) + 1)
    img = warp_perspective(screenshot, h_true, out_w, out_h,
                           roi=(x0, y0, x1, y1)).data

    diag = float(np.hypot(out_w, out_h))

    active = (params.ambient != 1.0 or params.gradient_strength != 0.0
              or params.gamma != 1.0 or params.moire_amp != 0.0
              or params.noise_sigma != 0.0)
    if not active:
        return ImageBuffer(np.clip(img, 0.0, 1.0)), quad, h_true
    # photometric stages run in float32: outputs are quantized to 8/16-bit
    # PNGs anyway, and single precision halves the memory traffic of the
    # power/sin/noise stages (the zero-strength path above stays float64
    # so the bare-warp bit-exactness contract is untouched)
    img = img.astype(np.float32)
    # the multiplicative stages map the exact-zero fill outside the screen
    # quad to exact zero (0*f, 0**g with g>0, 0*(1+a sin) for |a|<1), so
    # applying them only inside the quad's bounding box is bit-identical
    # to the full-frame computation and skips most of the frame; libm's
    # pow also takes a slow path on zero bases, so the fill pixels are
    # disproportionately expensive to process
    box = img[y0:y1, x0:x1]
    u32 = np.arange(x0, x1, dtype=np.float64)[None, :, None].astype(
        np.float32)
    v32 = np.arange(y0, y1, dtype=np.float64)[:, None, None].astype(
        np.float32)
    if params.ambient != 1.0 or params.gradient_strength != 0.0:
        field = np.float32(params.ambient) + np.float32(
            params.gradient_strength) * (
            (np.float32(np.cos(params.gradient_angle)) * u32
             + np.float32(np.sin(params.gradient_angle)) * v32)
            / np.float32(diag) - np.float32(0.5))
        np.maximum(field, np.float32(0.1), out=field)
        box *= field
    if params.gamma != 1.0:
        np.power(box, np.float32(params.gamma), out=box)
    if params.moire_amp != 0.0:
        w_ = np.float32(2.0 * np.pi * params.moire_freq)
        phase = (w_ * np.float32(np.cos(params.moire_angle)) * u32
                 + w_ * np.float32(np.sin(params.moire_angle)) * v32)
        box *= np.float32(1.0) + np.float32(params.moire_amp) * np.sin(phase)
    if params.noise_sigma != 0.0:
        rng = np.random.Generator(np.random.Philox(key=params.seed))
        img += np.float32(params.noise_sigma) * rng.standard_normal(
            img.shape, dtype=np.float32)
    np.clip(img, 0.0, 1.0, out=img)
    return ImageBuffer(img.astype(np.float64)), quad, h_true


def make_sample(tpl, med, slot_index, params, out_w, out_h, rng_seed=0):
    screenshot, slot = embed_into_template(tpl, med, slot_index, rng_seed)
    degraded, quad, h_true = apply_degradation(screenshot, params,
                                               out_w, out_h)
    return SynthSample(screenshot=screenshot, degraded=degraded,
                       original_medical=med, slot=slot, screen_quad=quad,
                       h_true=h_true, params=params)


def _f9(x):
    # serialize floats at 9 significant digits, round-tripping through the
    # shortest repr of the rounded value
    return float(f"{float(x):.9g}")


def sample_record(i, sample, screenshot_path, degraded_path, original_path):
    p = asdict(sample.params)
    return {
        "id": i,
        "screenshot_path": str(screenshot_path),
        "degraded_path": str(degraded_path),
        "original_path": str(original_path),
        "slot": {"x": sample.slot.x, "y": sample.slot.y,
                 "w": sample.slot.w, "h": sample.slot.h},
        "quad": [_f9(v) for v in sample.screen_quad.flat()],
        "h_true": [_f9(v) for v in sample.h_true.flat()],
        "params": {k: (int(v) if k == "seed" else _f9(v))
                   for k, v in p.items()},
    }


def synth_dataset(templates, images, n, master_seed, out_dir,
                  out_w=1280, out_h=720, param_scale=1.0, bits=8,
                  png_level=1):
    """Generate n ground-truthed samples; returns the manifest path.

    Per-sample randomness derives from (master_seed, index), so generation
    is order-independent and reproducible.
    """
    templates = list(templates)
    images = list(images)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n > 0 and (not templates or not images):
        raise EmptyInput("need at least one template and one image")
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.jsonl"
    lines = []
    # screenshots and originals repeat across samples (one per
    # template/image/slot combination), so each distinct one is embedded
    # and written exactly once; only the degraded capture is per-sample
    embed_cache = {}
    written_orig = set()
    for i in range(n):
        rng = np.random.default_rng([int(master_seed), i])
        ti = int(rng.integers(len(templates)))
        mi = int(rng.integers(len(images)))
        tpl = templates[ti]
        med = images[mi]
        slot_index = int(rng.integers(len(tpl.slots)))
        seed = int(rng.integers(0, 2**63))
        params = DegradationParams.sample(rng, seed, scale=param_scale)
        key = (ti, mi, slot_index)
        sp = out_dir / f"shot_t{ti}_m{mi}_s{slot_index}.png"
        if key not in embed_cache:
            screenshot, slot = embed_into_template(tpl, med, slot_index)
            embed_cache[key] = (screenshot, slot)
            write_png(screenshot, sp, bits=bits, level=png_level)
        screenshot, slot = embed_cache[key]
        op = out_dir / f"orig_m{mi}.png"
        if mi not in written_orig:
            write_png(med, op, bits=bits, level=png_level)
            written_orig.add(mi)
        degraded, quad, h_true = apply_degradation(screenshot, params,
                                                   out_w, out_h)
        sample = SynthSample(screenshot=screenshot, degraded=degraded,
                             original_medical=med, slot=slot,
                             screen_quad=quad, h_true=h_true, params=params)
        dp = out_dir / f"{i:05d}_degraded.png"
        # sensor noise makes the degraded capture incompressible; store it
        # uncompressed rather than paying the deflate matcher for nothing
        write_png(degraded, dp, bits=bits, level=0)
        rec = sample_record(i, sample, sp.name, dp.name, op.name)
        lines.append(json.dumps(rec, sort_keys=True))
    manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""))
    return manifest_path


# ---------------------------------------------------------------------------
# Builtin corpora: procedurally drawn GUI templates and synthetic
# radiograph-like images, replacing proprietary screenshots and clinical data.

def make_synthetic_medical(seed, w=512, h=512):
    """Smooth blob-field image with fine texture, spanning most of [0,1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = np.zeros((h, w))
    for _ in range(rng.integers(4, 9)):
        cx = rng.uniform(0.15, 0.85) * w
        cy = rng.uniform(0.15, 0.85) * h
        sx = rng.uniform(0.08, 0.3) * w
        sy = rng.uniform(0.08, 0.3) * h
        amp = rng.uniform(0.25, 0.9)
        img += amp * np.exp(-(((xx - cx) / sx) ** 2
                              + ((yy - cy) / sy) ** 2))
    # vignette-ish falloff plus fine texture so keypoints have something
    # to latch onto
    r = np.hypot((xx - w / 2) / (w / 2), (yy - h / 2) / (h / 2))
    img *= np.clip(1.1 - 0.5 * r, 0.0, 1.0)
    img += 0.04 * rng.standard_normal((h, w))
    lo, hi = np.percentile(img, [0.5, 99.5])
    img = (img - lo) / max(hi - lo, 1e-9)
    return ImageBuffer(np.clip(img, 0.0, 1.0)[:, :, None])


def make_default_templates(count=6, w=1280, h=720, seed=1234):
    """Procedural viewer-style GUI templates with one annotated image slot.

    Bright chrome along every screen edge keeps the monitor outline solid
    under photometric degradation.
    """
    templates = []
    for t in range(count):
        rng = np.random.default_rng([seed, t])
        base = rng.uniform(0.5, 0.62)
        bg = np.full((h, w, 1), base)
        # wide bright chrome on every edge keeps the thresholded screen
        # component large and its hull equal to the monitor outline
        bar = rng.uniform(0.78, 0.95)
        tb = int(rng.integers(40, 56))
        bg[:tb] = bar
        bg[-tb:] = bar * 0.95
        rail = int(rng.integers(24, 36))
        bg[:, :rail] = bar * 0.9
        bg[:, -rail:] = bar * 0.9
        # side panel with a few flat widget rows
        panel_w = int(rng.integers(200, 300))
        panel_on_left = bool(rng.integers(2))
        px0 = rail if panel_on_left else w - rail - panel_w
        bg[tb:h - tb, px0:px0 + panel_w] = base + 0.12
        for k in range(int(rng.integers(4, 9))):
            ry = tb + 20 + k * int((h - 2 * tb - 40) / 9)
            bg[ry:ry + 14, px0 + 12:px0 + panel_w - 12] = \
                rng.uniform(0.62, 0.72)
        # the medical-image slot fills most of the remaining area
        sx0 = (px0 + panel_w + 16) if panel_on_left else rail + 16
        sx1 = (w - rail - 16) if panel_on_left else px0 - 16
        sy0, sy1 = tb + 16, h - tb - 16
        sw = sx1 - sx0
        sh = sy1 - sy0
        shrink = rng.uniform(0.72, 0.95)
        nw, nh = int(sw * shrink), int(sh * shrink)
        sx0 += int(rng.integers(0, sw - nw + 1))
        sy0 += int(rng.integers(0, sh - nh + 1))
        slot = BoundingBox(sx0, sy0, nw, nh)
        templates.append(GuiTemplate(ImageBuffer(bg), (slot,),
                                     template_id=f"tpl-{t:02d}"))
    return templates
