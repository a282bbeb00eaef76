"""Screen detection and rectification.

Stage 1 finds the monitor quadrilateral in a photo, stage 2 rectifies it to
a front-facing screenshot and locates the medical-image region within the
GUI. Builtin classical detectors run with zero model weights; a backend
inference client can replace either stage.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import ndimage

from .errors import NoRegionFound, NoScreenFound
from .imaging import (BoundingBox, ImageBuffer, Point2, Quadrilateral, crop,
                      estimate_homography, order_quad_corners, to_grayscale,
                      warp_perspective)
from .protocol import InferenceRequest
from . import imaging

__all__ = ["ScreenDetection", "RegionDetection", "detect_screen_quad",
           "rectify", "locate_image_region", "crop"]


@dataclass(frozen=True)
class ScreenDetection:
    quad: Quadrilateral
    confidence: float
    source: str  # "builtin" | "backend"

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence out of range")


@dataclass(frozen=True)
class RegionDetection:
    bbox: BoundingBox
    score: float
    source: str


def _histogram_256(gray):
    """256-bin histogram on [0, 1]; intensities are guaranteed in range.

    Matches np.histogram(gray, bins=256, range=(0.0, 1.0)) bin-for-bin
    (value v lands in the largest bin i with i/256 <= v, capped at 255;
    the edges i/256 are exact doubles) at a fraction of its cost.
    """
    # g * 256 only rescales the exponent (power-of-two factor), so the
    # product is exact and floor(g * 256) is already the correct bin; the
    # rounding corrections np.histogram applies can never fire here.
    g = np.asarray(gray, dtype=np.float64).reshape(-1)
    idx = (g * 256.0).astype(np.int64)
    np.minimum(idx, 255, out=idx)
    hist = np.bincount(idx, minlength=256)
    edges = np.arange(257) / 256.0
    return hist, edges


def _otsu_threshold(gray):
    hist, edges = _histogram_256(gray)
    total = hist.sum()
    csum = np.cumsum(hist)
    centers = (edges[:-1] + edges[1:]) / 2.0
    cmean = np.cumsum(hist * centers)
    w0 = csum[:-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.where(valid, cmean[:-1] / np.maximum(w0, 1), 0)
    mu1 = np.where(valid, (cmean[-1] - cmean[:-1]) / np.maximum(w1, 1), 0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -1)
    k = int(np.argmax(between))
    return edges[k + 1]


def _convex_hull(points):
    """Andrew monotone chain; returns hull vertices counter-clockwise in
    (x, y-up) convention, i.e. clockwise on screen."""
    pts = sorted(set(map(tuple, points)))
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return ((a[0] - o[0]) * (b[1] - o[1])
                - (a[1] - o[1]) * (b[0] - o[0]))

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _simplify_hull(hull, max_v=24):
    """Drop vertices contributing the least area until len <= max_v."""
    hull = list(hull)
    while len(hull) > max_v:
        n = len(hull)
        best_i, best_a = 0, None
        for i in range(n):
            a = np.array(hull[(i - 1) % n])
            b = np.array(hull[i])
            c = np.array(hull[(i + 1) % n])
            ab, ac = b - a, c - a
            area = abs(ab[0] * ac[1] - ab[1] * ac[0]) / 2.0
            if best_a is None or area < best_a:
                best_a, best_i = area, i
        hull.pop(best_i)
    return hull


_EDGE_SUBSET_CACHE = {}


def _edge_subsets(n):
    if n not in _EDGE_SUBSET_CACHE:
        _EDGE_SUBSET_CACHE[n] = np.array(list(combinations(range(n), 4)))
    return _EDGE_SUBSET_CACHE[n]


def _min_perimeter_quad(hull):
    """Minimum-perimeter enclosing quadrilateral over hull edge support
    lines (exhaustive over cyclic 4-subsets of edges)."""
    hull = _simplify_hull(hull, 24)
    pts = np.asarray(hull, dtype=np.float64)
    n = len(pts)
    if n < 3:
        raise NoScreenFound("degenerate screen component")
    if n == 3:
        # fall back: split the longest edge at its midpoint
        d = np.linalg.norm(np.roll(pts, -1, 0) - pts, axis=1)
        i = int(np.argmax(d))
        mid = (pts[i] + pts[(i + 1) % n]) / 2.0
        pts = np.insert(pts, i + 1, mid, axis=0)
        n = 4
    nxt = np.roll(pts, -1, axis=0)
    dirs = nxt - pts
    # inward normal: interior centroid must satisfy a*x + b*y <= c
    a = dirs[:, 1]
    b = -dirs[:, 0]
    c = a * pts[:, 0] + b * pts[:, 1]
    cen = pts.mean(axis=0)
    flip = (a * cen[0] + b * cen[1]) > c
    a[flip], b[flip], c[flip] = -a[flip], -b[flip], -c[flip]

    idx = _edge_subsets(n)  # cyclic order preserved
    pairs = np.stack([idx, np.roll(idx, -1, axis=1)], axis=2)  # (m,4,2)
    a1, b1, c1 = a[pairs[..., 0]], b[pairs[..., 0]], c[pairs[..., 0]]
    a2, b2, c2 = a[pairs[..., 1]], b[pairs[..., 1]], c[pairs[..., 1]]
    det = a1 * b2 - a2 * b1
    ok = np.abs(det) > 1e-12
    det_safe = np.where(ok, det, 1.0)
    qx = (c1 * b2 - c2 * b1) / det_safe
    qy = (a1 * c2 - a2 * c1) / det_safe
    valid = ok.all(axis=1)
    # every hull vertex inside all 4 chosen half-planes; the predicate
    # depends only on the edge, so evaluate it once per edge
    edge_ok = ((a[:, None] * pts[None, :, 0]
                + b[:, None] * pts[None, :, 1])
               <= c[:, None] + 1e-6).all(axis=1)
    valid &= edge_ok[idx].all(axis=1)
    # corners must stay near the hull (reject near-parallel blowups)
    span = max(np.ptp(pts[:, 0]), np.ptp(pts[:, 1]))
    valid &= (np.abs(qx - cen[0]).max(axis=1) < 4 * span)
    valid &= (np.abs(qy - cen[1]).max(axis=1) < 4 * span)
    # corners must form a convex, consistently oriented quadrilateral
    ex = np.roll(qx, -1, 1) - qx
    ey = np.roll(qy, -1, 1) - qy
    cr = ex * np.roll(ey, -1, 1) - ey * np.roll(ex, -1, 1)
    valid &= (cr > 0).all(axis=1) | (cr < 0).all(axis=1)
    if not valid.any():
        raise NoScreenFound("no enclosing quadrilateral found")
    per = np.hypot(np.roll(qx, -1, 1) - qx, np.roll(qy, -1, 1) - qy)
    per = np.where(valid, per.sum(axis=1), np.inf)
    best = int(np.argmin(per))
    corners = [Point2(float(qx[best, j]), float(qy[best, j]))
               for j in range(4)]
    return order_quad_corners(corners)


def _quad_from_mask(mask):
    if not mask.any():
        raise NoScreenFound("empty mask")
    rows = np.flatnonzero(mask.any(axis=1))
    first = mask[rows].argmax(axis=1)
    last = mask.shape[1] - 1 - mask[rows, ::-1].argmax(axis=1)
    bpts = []
    for y, f, l in zip(rows.tolist(), first.tolist(), last.tolist()):
        bpts.append((float(f), float(y)))
        bpts.append((float(l), float(y)))
    hull = _convex_hull(bpts)
    quad = _min_perimeter_quad(hull)
    hull_area = abs(sum(
        hull[i][0] * hull[(i + 1) % len(hull)][1]
        - hull[(i + 1) % len(hull)][0] * hull[i][1]
        for i in range(len(hull)))) / 2.0
    return quad, hull_area


def detect_screen_quad(photo, backend=None, model_id="screen-segmenter",
                       min_area_frac=0.05):
    """Find the monitor outline as a canonical quadrilateral."""
    if photo.width < 64 or photo.height < 64:
        raise ValueError("photo must be at least 64x64")
    if backend is not None:
        resp = backend.infer(InferenceRequest(
            task="segment", model_id=model_id,
            image_b64=imaging.encode_png(photo)))
        mask_img = imaging.decode_png(resp.decode_b64("mask_b64"))
        mask = mask_img.data[:, :, 0] > 0.5
        if mask.sum() < min_area_frac * mask.size:
            raise NoScreenFound("backend mask too small")
        quad, _hull_area = _quad_from_mask(mask)
        conf = min(1.0, float(mask.sum()) / mask.size)
        return ScreenDetection(quad=quad, confidence=conf, source="backend")

    gray = to_grayscale(photo).data[:, :, 0]
    t = _otsu_threshold(gray)
    mask = gray > t
    labels, nlab = ndimage.label(mask)
    if nlab == 0:
        raise NoScreenFound("no bright component")
    sizes = np.bincount(labels.reshape(-1))
    sizes[0] = 0
    comp = int(np.argmax(sizes))
    if sizes[comp] < min_area_frac * mask.size:
        raise NoScreenFound(
            f"largest component covers {sizes[comp] / mask.size:.3f} "
            f"of frame (< {min_area_frac})")
    quad, hull_area = _quad_from_mask(labels == comp)
    conf = float(min(1.0, sizes[comp] / max(hull_area, 1.0)))
    return ScreenDetection(quad=quad, confidence=conf, source="builtin")


def rectify(photo, det, out_w=1280, out_h=720):
    """Warp the detected screen quad to a front-facing out_w x out_h image."""
    dst = [Point2(0.0, 0.0), Point2(out_w - 1.0, 0.0),
           Point2(out_w - 1.0, out_h - 1.0), Point2(0.0, out_h - 1.0)]
    h = estimate_homography(list(det.quad.corners), dst)
    return warp_perspective(photo, h, out_w, out_h)


def locate_image_region(rectified, backend=None, model_id="region-detector",
                        score_floor=0.05):
    """Find the medical-image region within the rectified GUI.

    Builtin path: integral-image scan over 12 scales x 3 aspect ratios at
    stride width/32; score = interior variance weighted by how well the box
    borders align with detected GUI edges.
    """
    if rectified.width < 64 or rectified.height < 64:
        raise ValueError("rectified image must be at least 64x64")
    if backend is not None:
        resp = backend.infer(InferenceRequest(
            task="detect", model_id=model_id,
            image_b64=imaging.encode_png(rectified)))
        boxes = resp.boxes or []
        if not boxes:
            raise NoRegionFound("backend returned no boxes")
        best = max(boxes, key=lambda b: b["score"])
        bbox = BoundingBox(int(best["x"]), int(best["y"]),
                           int(best["w"]), int(best["h"]))
        return RegionDetection(bbox=bbox, score=float(best["score"]),
                               source="backend")

    gray = to_grayscale(rectified).data[:, :, 0]
    H, W = gray.shape
    # slot-likeness mask: the image slot (black letterbox plus radiograph
    # content) sits well below the bright GUI chrome/panels once the frame
    # is contrast-stretched, and that holds under illumination/gamma drift
    lo, hi = np.percentile(gray, [1.0, 99.0])
    if hi - lo < 0.05:
        raise NoRegionFound("frame has no usable contrast")
    # flatten uneven illumination first: fit a planar ramp to the bright
    # (chrome/panel) pixels and divide it out, so a shading gradient cannot
    # drag one side of the GUI below the dark threshold
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    bright = gray >= np.median(gray)
    A = np.stack([np.ones(bright.sum()), xx[bright], yy[bright]], axis=1)
    coef, *_ = np.linalg.lstsq(A, gray[bright], rcond=None)
    ramp = coef[0] + coef[1] * xx + coef[2] * yy
    flat = gray / np.maximum(ramp, 1e-3)
    lo, hi = np.percentile(flat, [1.0, 99.0])
    gn = np.clip((flat - lo) / max(hi - lo, 1e-9), 0.0, 1.0)
    thr = float(np.clip(_otsu_threshold(gn), 0.10, 0.32))
    mask = gn < thr
    mask = ndimage.binary_opening(mask, np.ones((3, 3), bool))
    mask = mask.astype(np.float64)
    total = mask.sum()

    mi = np.zeros((H + 1, W + 1))
    mi[1:, 1:] = mask.cumsum(0).cumsum(1)

    col_e = np.abs(np.diff(gray, axis=1)).mean(axis=0)
    row_e = np.abs(np.diff(gray, axis=0)).mean(axis=1)
    col_e = col_e / max(col_e.max(), 1e-9)
    row_e = row_e / max(row_e.max(), 1e-9)

    def edge_at(profile, pos):
        if pos < 0 or pos >= len(profile):
            return 1.0  # flush with the frame boundary counts as aligned
        lo = max(0, pos - 2)
        return profile[lo:pos + 3].max()

    stride = max(1, W // 32)
    best_score, best_box = -1.0, None
    if total > 0:
        for bw in np.geomspace(0.25 * W, 1.0 * W, 12):
            bw = int(round(bw))
            for aspect in (4 / 3, 1.0, 3 / 4):
                bh = min(int(round(bw / aspect)), H)
                if bh < 16 or bw < 16 or bw > W:
                    continue
                for y0 in range(0, H - bh + 1, stride) or (0,):
                    for x0 in range(0, W - bw + 1, stride) or (0,):
                        inside = (mi[y0 + bh, x0 + bw] - mi[y0, x0 + bw]
                                  - mi[y0 + bh, x0] + mi[y0, x0])
                        precision = inside / (bw * bh)
                        recall = inside / total
                        if precision + recall <= 0:
                            continue
                        f1 = 2 * precision * recall / (precision + recall)
                        align = (edge_at(col_e, x0 - 1)
                                 + edge_at(col_e, x0 + bw - 1)
                                 + edge_at(row_e, y0 - 1)
                                 + edge_at(row_e, y0 + bh - 1)) / 4.0
                        score = f1 * (0.75 + 0.25 * align)
                        if score > best_score:
                            best_score, best_box = score, (x0, y0, bw, bh)
    if best_box is None or best_score < score_floor:
        raise NoRegionFound(f"best score {best_score:.4f} below floor "
                            f"{score_floor}")
    # snap to the union of mask components lying mostly inside the winning
    # box; stray dark GUI corners land outside and are dropped, while a
    # slot split in two by bright content is re-joined
    x0, y0, bw, bh = best_box
    labeled, n_comp = ndimage.label(mask > 0)
    if n_comp > 0:
        window = labeled[y0:y0 + bh, x0:x0 + bw]
        in_counts = np.bincount(window.ravel(), minlength=n_comp + 1)
        all_counts = np.bincount(labeled.ravel(), minlength=n_comp + 1)
        keep = np.zeros(n_comp + 1, bool)
        keep[1:] = ((in_counts[1:] >= 0.5 * all_counts[1:])
                    | (in_counts[1:] >= 0.10 * bw * bh))
        if keep.any():
            ys, xs = np.nonzero(keep[labeled])
            x0 = int(xs.min())
            y0 = int(ys.min())
            bw = int(xs.max() - xs.min()) + 1
            bh = int(ys.max() - ys.min()) + 1
    bbox = BoundingBox(x0, y0, bw, bh)
    return RegionDetection(bbox=bbox, score=float(min(1.0, best_score)),
                           source="builtin")
