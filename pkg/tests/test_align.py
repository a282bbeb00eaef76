"""Keypoint registration and the classical illumination restorer."""

import numpy as np
import pytest

from screendx.align import (align_pair, baseline_restore, detect_keypoints,
                            match_descriptors, ransac_homography,
                            restore_with_backend)
from screendx.capture import make_synthetic_medical
from screendx.errors import (DimensionMismatch, InsufficientMatches,
                             NoConsensus)
from screendx.imaging import (Homography, ImageBuffer, Point2,
                              estimate_homography, warp_perspective)
from screendx.metrics import psnr
from screendx.protocol import InProcessClient
from screendx.stubs import stub_suite


@pytest.fixture(scope="module")
def textured():
    return make_synthetic_medical(seed=5, w=256, h=256)


def test_detect_keypoints_properties(textured):
    kps = detect_keypoints(textured, max_kp=200)
    assert 20 < len(kps) <= 200
    # sorted by response, unit descriptors, positions in bounds
    responses = [k.response for k in kps]
    assert responses == sorted(responses, reverse=True)
    for k in kps[:20]:
        assert abs(np.linalg.norm(k.descriptor) - 1.0) < 1e-6
        assert 0 <= k.pos.x < textured.width
        assert 0 <= k.pos.y < textured.height


def test_match_descriptors_self_match(textured):
    kps = detect_keypoints(textured, max_kp=100)
    matches = match_descriptors(kps, kps)
    # identical sets match at (numerically) zero distance; duplicate
    # descriptors may cross-pair, so compare descriptors rather than indices
    assert len(matches) == len(kps)
    for m in matches:
        assert m.distance < 1e-6
        assert np.allclose(kps[m.index_a].descriptor,
                           kps[m.index_b].descriptor, atol=1e-9)


def test_match_descriptors_validates_ratio(textured):
    kps = detect_keypoints(textured, max_kp=10)
    with pytest.raises(ValueError):
        match_descriptors(kps, kps, ratio=1.5)
    assert match_descriptors([], kps) == []


def test_ransac_requires_enough_matches():
    with pytest.raises(InsufficientMatches):
        ransac_homography([], [], [])


def test_ransac_recovers_planted_homography():
    """Known homography + 30% gross outliers: RANSAC must recover it."""
    rng = np.random.default_rng(0)
    h_true = estimate_homography(
        [Point2(0, 0), Point2(100, 0), Point2(100, 100), Point2(0, 100)],
        [Point2(3, 2), Point2(108, 5), Point2(104, 97), Point2(-2, 103)])
    pts_a, pts_b, matches = [], [], []
    from screendx.align import Match
    for i in range(60):
        p = Point2(float(rng.uniform(0, 100)), float(rng.uniform(0, 100)))
        v = h_true.m @ np.array([p.x, p.y, 1.0])
        q = Point2(float(v[0] / v[2]), float(v[1] / v[2]))
        if i % 3 == 0:  # outlier
            q = Point2(q.x + float(rng.uniform(20, 50)),
                       q.y - float(rng.uniform(20, 50)))
        pts_a.append(p)
        pts_b.append(q)
        matches.append(Match(index_a=i, index_b=i, distance=0.1))
    res = ransac_homography(matches, pts_a, pts_b, thresh_px=1.0, seed=1)
    assert res.inlier_count == 40
    assert res.inlier_rms < 0.5
    assert np.allclose(res.h.m, h_true.m, atol=1e-3)


def test_ransac_no_consensus_on_noise():
    rng = np.random.default_rng(2)
    from screendx.align import Match
    pts_a = [Point2(*rng.uniform(0, 100, 2)) for _ in range(30)]
    pts_b = [Point2(*rng.uniform(0, 100, 2)) for _ in range(30)]
    matches = [Match(index_a=i, index_b=i, distance=0.1)
               for i in range(30)]
    with pytest.raises(NoConsensus):
        ransac_homography(matches, pts_a, pts_b, thresh_px=0.5, iters=50,
                          min_inliers=15)


def test_align_pair_recovers_known_warp(textured):
    h = Homography(np.array([[1.01, 0.02, 5.0], [-0.015, 0.99, -4.0],
                             [1e-5, -1e-5, 1.0]]))
    warped = warp_perspective(textured, h, textured.width, textured.height)
    registered, res = align_pair(warped, textured)
    assert res.inlier_count >= 8
    assert res.inlier_rms < 1.5
    # interior of the registered image matches the original
    a = registered.data[30:-30, 30:-30]
    b = textured.data[30:-30, 30:-30]
    mse = float(np.mean((a - b) ** 2))
    assert 10 * np.log10(1.0 / mse) > 25.0


def test_baseline_restore_inverts_planar_illumination(textured):
    """baseline_restore's output is invariant (to high PSNR) under the
    capture sim's multiplicative planar illumination class."""
    d = textured.data
    yy, xx = np.mgrid[0:textured.height, 0:textured.width]
    field = 0.6 + 0.35 * (xx + yy) / (textured.width + textured.height)
    shaded = ImageBuffer(np.clip(d * field[:, :, None], 0.0, 1.0))
    ref = baseline_restore(textured)
    rest = baseline_restore(shaded)
    assert psnr(ref, rest) > 25.0


def test_baseline_restore_idempotent_range(textured):
    out = baseline_restore(textured)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0
    assert (out.width, out.height) == (textured.width, textured.height)


def test_restore_with_backend_identity(textured):
    client = InProcessClient(stub_suite())
    out = restore_with_backend(textured, client,
                               model_id="stub-identity-restorer")
    # identity restore loses only 16-bit quantization
    q = np.round(textured.data * 65535) / 65535
    assert np.array_equal(out.data, q)


def test_restore_with_backend_dimension_check(textured):
    from screendx import imaging

    class Shrinker:
        def infer(self, req):
            from screendx.protocol import InferenceResponse
            import base64
            small = imaging.encode_png(
                ImageBuffer(np.zeros((8, 8, 1))), bits=8)
            return InferenceResponse(
                model_id="s", image_b64=base64.b64encode(small).decode())

    with pytest.raises(DimensionMismatch):
        restore_with_backend(textured, Shrinker())
