"""Screen detection, rectification, and in-GUI region location on fully
ground-truthed synthetic captures."""

import numpy as np
import pytest

from screendx.capture import (DegradationParams, apply_degradation,
                              embed_into_template)
from screendx.errors import NoRegionFound, NoScreenFound
from screendx.imaging import ImageBuffer
from screendx.protocol import InProcessClient
from screendx.screen import (_otsu_threshold, detect_screen_quad,
                             locate_image_region, rectify)
from screendx.stubs import stub_suite


def corner_error(quad, truth_quad):
    got = np.array(quad.flat()).reshape(4, 2)
    want = np.array(truth_quad.flat()).reshape(4, 2)
    return float(np.linalg.norm(got - want, axis=1).mean())


def make_capture(templates, medical_images, seed, scale=0.5,
                 out_w=1280, out_h=720):
    rng = np.random.default_rng(seed)
    tpl = templates[seed % len(templates)]
    med = medical_images[seed % len(medical_images)]
    params = DegradationParams.sample(rng, seed, scale=scale)
    screenshot, slot = embed_into_template(tpl, med, 0)
    degraded, quad, h_true = apply_degradation(screenshot, params,
                                               out_w, out_h)
    return degraded, quad, slot, screenshot


# --- Otsu threshold oracle ---------------------------------------------------

def otsu_oracle(gray):
    """Brute-force maximization of between-class variance over the same
    256-bin histogram."""
    hist, edges = np.histogram(gray, bins=256, range=(0.0, 1.0))
    centers = (edges[:-1] + edges[1:]) / 2.0
    best_k, best_v = 0, -1.0
    for k in range(255):
        w0 = hist[:k + 1].sum()
        w1 = hist[k + 1:].sum()
        if w0 == 0 or w1 == 0:
            continue
        mu0 = (hist[:k + 1] * centers[:k + 1]).sum() / w0
        mu1 = (hist[k + 1:] * centers[k + 1:]).sum() / w1
        v = w0 * w1 * (mu0 - mu1) ** 2
        if v > best_v:
            best_v, best_k = v, k
    return edges[best_k + 1]


@pytest.mark.parametrize("seed", range(5))
def test_otsu_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    # bimodal mixture
    gray = np.concatenate([rng.normal(0.25, 0.05, 4000),
                           rng.normal(0.75, 0.08, 6000)])
    gray = np.clip(gray, 0.0, 1.0)
    assert _otsu_threshold(gray) == pytest.approx(otsu_oracle(gray),
                                                  abs=1e-12)


# --- screen detection ---------------------------------------------------------

@pytest.mark.parametrize("seed", range(8))
def test_detect_screen_quad_subpixel(templates, medical_images, seed):
    degraded, quad, _, _ = make_capture(templates, medical_images, seed)
    det = detect_screen_quad(degraded)
    assert det.source == "builtin"
    assert corner_error(det.quad, quad) < 2.0


def test_detect_rejects_blank_frame():
    with pytest.raises(NoScreenFound):
        detect_screen_quad(ImageBuffer(np.zeros((128, 128, 1))))


def test_detect_rejects_tiny_photo():
    with pytest.raises(ValueError):
        detect_screen_quad(ImageBuffer(np.zeros((32, 32, 1))))


def test_detect_via_backend_segmenter(templates, medical_images):
    degraded, quad, _, _ = make_capture(templates, medical_images, 1)
    client = InProcessClient(stub_suite())
    det = detect_screen_quad(degraded, backend=client,
                             model_id="stub-screen-segmenter")
    assert det.source == "backend"
    assert corner_error(det.quad, quad) < 4.0


# --- rectification -------------------------------------------------------------

def test_rectify_recovers_screenshot(templates, medical_images):
    degraded, quad, _, screenshot = make_capture(templates, medical_images,
                                                 3)
    det = detect_screen_quad(degraded)
    rect = rectify(degraded, det, out_w=screenshot.width,
                   out_h=screenshot.height)
    assert (rect.width, rect.height) == (screenshot.width,
                                         screenshot.height)
    # interior (away from resampled borders) matches the screenshot closely
    a = rect.data[40:-40, 40:-40]
    b = screenshot.data[40:-40, 40:-40]
    mse = float(np.mean((a - b) ** 2))
    assert 10 * np.log10(1.0 / mse) > 20.0  # PSNR of the recovered interior


# --- region location -------------------------------------------------------------

def region_iou(bbox, slot, rect_w, rect_h, shot_w, shot_h):
    """IoU between the located bbox and the slot mapped into the rectified
    frame (pure axis-aligned rescale)."""
    sx, sy = rect_w / shot_w, rect_h / shot_h
    tx0, ty0 = slot.x * sx, slot.y * sy
    tx1, ty1 = (slot.x + slot.w) * sx, (slot.y + slot.h) * sy
    bx0, by0 = bbox.x, bbox.y
    bx1, by1 = bbox.x + bbox.w, bbox.y + bbox.h
    iw = max(0.0, min(tx1, bx1) - max(tx0, bx0))
    ih = max(0.0, min(ty1, by1) - max(ty0, by0))
    inter = iw * ih
    union = ((tx1 - tx0) * (ty1 - ty0)
             + (bx1 - bx0) * (by1 - by0) - inter)
    return inter / union


@pytest.mark.parametrize("seed", range(6))
def test_locate_image_region_iou(templates, medical_images, seed):
    degraded, quad, slot, screenshot = make_capture(templates,
                                                    medical_images, seed)
    det = detect_screen_quad(degraded)
    rect = rectify(degraded, det, out_w=1280, out_h=720)
    region = locate_image_region(rect)
    iou = region_iou(region.bbox, slot, 1280, 720,
                     screenshot.width, screenshot.height)
    assert iou > 0.9
    assert region.source == "builtin"


def test_locate_rejects_contrast_free_frame():
    with pytest.raises(NoRegionFound):
        locate_image_region(ImageBuffer(np.full((200, 300, 1), 0.5)))


def test_locate_via_backend_boxes():
    class FakeDetector:
        def infer(self, req):
            from screendx.protocol import InferenceResponse
            return InferenceResponse(
                model_id="d", boxes=({"x": 10, "y": 20, "w": 30, "h": 40,
                                      "score": 0.7},
                                     {"x": 0, "y": 0, "w": 5, "h": 5,
                                      "score": 0.2}))

    region = locate_image_region(
        ImageBuffer(np.zeros((100, 100, 1))), backend=FakeDetector())
    assert (region.bbox.x, region.bbox.y, region.bbox.w,
            region.bbox.h) == (10, 20, 30, 40)
    assert region.source == "backend"
    assert region.score == pytest.approx(0.7)
