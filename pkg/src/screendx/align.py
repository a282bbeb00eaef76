"""Keypoint registration and classical restoration.

Registers captured images to their originals with multi-scale Harris
keypoints carrying orientation-normalized gradient descriptors, robust
homography fitting, and a homomorphic illumination restorer. A backend
restorer can replace the builtin one through the inference protocol.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import (BackendError, DimensionMismatch, InsufficientMatches,
                     NoConsensus)
from .imaging import (Homography, ImageBuffer, Point2, apply_homography,
                      estimate_homography, to_grayscale, warp_perspective)
from .protocol import InferenceRequest
from . import imaging

DESCRIPTOR_DIM = 128


@dataclass(frozen=True)
class Keypoint:
    pos: Point2
    scale: int          # pyramid level
    orientation: float  # radians
    response: float
    descriptor: np.ndarray  # 128 floats, unit L2 norm

    def __post_init__(self):
        d = np.asarray(self.descriptor, dtype=np.float64)
        if d.shape != (DESCRIPTOR_DIM,):
            raise ValueError("descriptor must have 128 entries")
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("descriptor must be unit length")
        d.flags.writeable = False
        object.__setattr__(self, "descriptor", d)


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    distance: float


@dataclass(frozen=True)
class AlignmentResult:
    h: Homography       # captured -> original frame
    inlier_count: int
    inlier_rms: float


def _harris(gray, sigma=1.5, k=0.04):
    gy, gx = np.gradient(gray)
    sxx = ndimage.gaussian_filter(gx * gx, sigma)
    syy = ndimage.gaussian_filter(gy * gy, sigma)
    sxy = ndimage.gaussian_filter(gx * gy, sigma)
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    return det - k * tr * tr


def _nms(resp, radius=4, rel_thresh=0.01):
    peak = resp.max()
    if peak <= 0:
        return []
    maxed = ndimage.maximum_filter(resp, size=2 * radius + 1,
                                   mode="constant")
    ys, xs = np.nonzero((resp == maxed) & (resp > rel_thresh * peak))
    return list(zip(xs.tolist(), ys.tolist(),
                    resp[ys, xs].tolist()))


def _patch_grads(gray, x, y, ori, radius=8):
    """Gradients sampled on a 16x16 grid rotated into the keypoint frame."""
    c, s = np.cos(ori), np.sin(ori)
    offs = np.arange(-radius, radius) + 0.5
    U, V = np.meshgrid(offs, offs)
    xs = x + c * U - s * V
    ys = y + s * U + c * V
    h, w = gray.shape
    xs = np.clip(xs, 1.0, w - 2.0)
    ys = np.clip(ys, 1.0, h - 2.0)
    vals = ndimage.map_coordinates(gray, [ys, xs], order=1, mode="nearest")
    gyy, gxx = np.gradient(vals)
    # rotate gradients into the local frame
    gu = c * gxx + s * gyy
    gv = -s * gxx + c * gyy
    mag = np.hypot(gu, gv)
    ang = np.arctan2(gv, gu) % (2 * np.pi)
    return mag, ang


def _dominant_orientation(gray, x, y, radius=8):
    h, w = gray.shape
    x0, x1 = int(max(x - radius, 1)), int(min(x + radius + 1, w - 1))
    y0, y1 = int(max(y - radius, 1)), int(min(y + radius + 1, h - 1))
    patch = gray[y0:y1, x0:x1]
    gy, gx = np.gradient(patch)
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % (2 * np.pi)
    hist, edges = np.histogram(ang, bins=36, range=(0, 2 * np.pi),
                               weights=mag)
    b = int(np.argmax(hist))
    return (edges[b] + edges[b + 1]) / 2.0


def _descriptor(mag, ang, ori):
    rel = (ang - ori) % (2 * np.pi)
    desc = np.zeros((4, 4, 8))
    cell = mag.shape[0] // 4
    bins = np.minimum((rel / (2 * np.pi) * 8).astype(int), 7)
    for cy in range(4):
        for cx in range(4):
            m = mag[cy * cell:(cy + 1) * cell, cx * cell:(cx + 1) * cell]
            b = bins[cy * cell:(cy + 1) * cell, cx * cell:(cx + 1) * cell]
            desc[cy, cx] = np.bincount(b.reshape(-1), m.reshape(-1),
                                       minlength=8)
    d = desc.reshape(-1)
    n = np.linalg.norm(d)
    if n < 1e-12:
        return None
    d = np.minimum(d / n, 0.2)  # clip and renormalize (illumination robust)
    n = np.linalg.norm(d)
    if n < 1e-12:
        return None
    return d / n


def detect_keypoints(img, max_kp=500, levels=4):
    """Multi-scale Harris corners with SIFT-style descriptors."""
    if img.width < 32 or img.height < 32:
        raise ValueError("image must be at least 32x32")
    gray = to_grayscale(img).data[:, :, 0]
    kps = []
    level_img = gray
    for lvl in range(levels):
        if min(level_img.shape) < 32:
            break
        resp = _harris(level_img)
        for x, y, r in _nms(resp):
            if (x < 9 or y < 9 or x > level_img.shape[1] - 10
                    or y > level_img.shape[0] - 10):
                continue
            ori = _dominant_orientation(level_img, x, y)
            mag, ang = _patch_grads(level_img, float(x), float(y), ori)
            d = _descriptor(mag, ang, 0.0)
            if d is None:
                continue
            scale = 2 ** lvl
            kps.append(Keypoint(pos=Point2(x * scale, y * scale),
                                scale=lvl, orientation=ori,
                                response=float(r), descriptor=d))
        sm = ndimage.gaussian_filter(level_img, 1.0)
        level_img = sm[::2, ::2]
    kps.sort(key=lambda k: -k.response)
    return kps[:max_kp]


def match_descriptors(a, b, ratio=0.75):
    """Lowe ratio test plus symmetric cross-check."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    if not a or not b:
        return []
    da = np.stack([k.descriptor for k in a])
    db = np.stack([k.descriptor for k in b])
    d2 = (np.sum(da * da, 1)[:, None] + np.sum(db * db, 1)[None, :]
          - 2.0 * da @ db.T)
    d2 = np.maximum(d2, 0.0)

    def best_two(dmat):
        order = np.argsort(dmat, axis=1)
        nn = order[:, 0]
        second = dmat[np.arange(len(dmat)), order[:, 1]] \
            if dmat.shape[1] > 1 else np.full(len(dmat), np.inf)
        first = dmat[np.arange(len(dmat)), nn]
        return nn, first, second

    nn_ab, d1_ab, d2_ab = best_two(d2)
    nn_ba, _, _ = best_two(d2.T)
    matches = []
    for i in range(len(a)):
        j = nn_ab[i]
        if nn_ba[j] != i:
            continue
        # exact matches pass regardless of the ratio test
        if d1_ab[i] == 0.0 or np.sqrt(d1_ab[i]) < ratio * np.sqrt(d2_ab[i]):
            matches.append(Match(index_a=i, index_b=int(j),
                                 distance=float(np.sqrt(d1_ab[i]))))
    return matches


def _dlt_least_squares(pa, pb):
    """Normalized DLT over all correspondences (SVD)."""
    def normalize(p):
        c = p.mean(axis=0)
        s = np.sqrt(2.0) / max(np.mean(np.linalg.norm(p - c, axis=1)), 1e-12)
        T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1]])
        return (p - c) * s, T

    qa, Ta = normalize(pa)
    qb, Tb = normalize(pb)
    A = []
    for (x, y), (u, v) in zip(qa, qb):
        A.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        A.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(A))
    Hn = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(Tb) @ Hn @ Ta)


def _reproj_errors(h, pa, pb):
    ones = np.ones((len(pa), 1))
    q = np.hstack([pa, ones]) @ h.m.T
    wz = q[:, 2]
    bad = np.abs(wz) < 1e-12
    wz = np.where(bad, 1.0, wz)
    proj = q[:, :2] / wz[:, None]
    err = np.linalg.norm(proj - pb, axis=1)
    err[bad] = np.inf
    return err


def ransac_homography(matches, pts_a, pts_b, thresh_px=3.0, iters=2000,
                      seed=0, min_inliers=8):
    """Seeded RANSAC over 4-match samples; final refit on all inliers."""
    if len(matches) < 4:
        raise InsufficientMatches(f"{len(matches)} matches < 4")
    pa = np.array([[pts_a[m.index_a].x, pts_a[m.index_a].y]
                   for m in matches])
    pb = np.array([[pts_b[m.index_b].x, pts_b[m.index_b].y]
                   for m in matches])
    rng = np.random.default_rng(seed)
    n = len(matches)
    best_mask = None
    best_count = 0
    for _ in range(iters):
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = estimate_homography(
                [Point2(*pa[i]) for i in idx],
                [Point2(*pb[i]) for i in idx])
        except Exception:
            continue
        err = _reproj_errors(h, pa, pb)
        mask = err < thresh_px
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
            if count == n:
                break
    if best_mask is None or best_count < min_inliers:
        raise NoConsensus(f"best inlier set {best_count} < {min_inliers}")
    h = _dlt_least_squares(pa[best_mask], pb[best_mask])
    err = _reproj_errors(h, pa, pb)
    mask = err < thresh_px
    if int(mask.sum()) < 4:
        # refit drifted; keep the sample-consensus inliers
        mask = best_mask
        err = _reproj_errors(h, pa, pb)
    rms = float(np.sqrt(np.mean(err[mask] ** 2))) if mask.any() else np.inf
    return AlignmentResult(h=h, inlier_count=int(mask.sum()),
                           inlier_rms=rms)


def align_pair(captured, original, max_kp=800, seed=7, ratio=0.8,
               thresh_px=3.0, iters=2000):
    """detect -> match -> RANSAC -> warp captured into original's frame."""
    if min(captured.width, captured.height) < 64 \
            or min(original.width, original.height) < 64:
        raise ValueError("images must be at least 64x64")
    ka = detect_keypoints(captured, max_kp)
    kb = detect_keypoints(original, max_kp)
    matches = match_descriptors(ka, kb, ratio=ratio)
    if len(matches) < 4:
        raise NoConsensus(f"only {len(matches)} tentative matches")
    res = ransac_homography(matches, [k.pos for k in ka],
                            [k.pos for k in kb],
                            thresh_px=thresh_px, iters=iters, seed=seed)
    registered = warp_perspective(captured, res.h,
                                  original.width, original.height)
    return registered, res


def baseline_restore(img):
    """Homomorphic illumination flattening plus percentile contrast stretch.

    Inverts multiplicative illumination fields exactly up to the blur scale:
    divide by a heavy Gaussian blur of the image, rescale to the original
    mean, then stretch the 1st/99th percentiles to [0, 1].
    """
    d = img.data.astype(np.float64)
    sigma = min(img.width, img.height) / 8.0
    out = np.empty_like(d)
    for ch in range(d.shape[2]):
        plane = d[:, :, ch]
        blur = ndimage.gaussian_filter(plane, sigma, mode="reflect")
        flat = plane / np.maximum(blur, 1e-6)
        m = flat.mean()
        if m > 1e-12:
            flat = flat * (plane.mean() / m)
        out[:, :, ch] = flat
    p1, p99 = np.percentile(out, [1.0, 99.0])
    if p99 - p1 > 1e-9:
        out = (out - p1) / (p99 - p1)
    return ImageBuffer(np.clip(out, 0.0, 1.0))


def restore_with_backend(img, client, model_id="stub-identity-restorer",
                         bits=16):
    """Round-trip the image through a restore backend."""
    resp = client.infer(InferenceRequest(
        task="restore", model_id=model_id,
        image_b64=imaging.encode_png(img, bits=bits)))
    restored = imaging.decode_png(resp.decode_b64("image_b64"))
    if restored.width != img.width or restored.height != img.height:
        raise DimensionMismatch(
            f"backend returned {restored.width}x{restored.height}, "
            f"expected {img.width}x{img.height}")
    return restored
