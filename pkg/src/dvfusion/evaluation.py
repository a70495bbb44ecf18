"""Detection evaluation: rotated-box IoU, 40-point average precision,
range-binned AP, and the correspondence-density comparison between raw
point projections and multi-scale voxel-center projections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .boxes import Box3D, bev_corners
from .calib import CameraCalib, project_points
from .errors import DegenerateBoxError, UnknownClassError

if TYPE_CHECKING:
    from .fusion import FusedLevel


@dataclass(frozen=True)
class Detection:
    box: Box3D
    score: float
    cls: str


@dataclass(frozen=True)
class EvalConfig:
    """Per-class IoU thresholds, recall grid, and range bins (half-open)."""

    iou_thresholds: dict = field(
        default_factory=lambda: {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}
    )
    recall_positions: int = 40
    range_bins: tuple[tuple[float, float], ...] = (
        (0.0, 20.0),
        (20.0, 40.0),
        (40.0, math.inf),
    )


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, 1)) - np.dot(y, np.roll(x, 1))))


def _clip_polygon(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon by a CCW convex polygon."""
    output = list(subject)
    for i in range(len(clip)):
        a, b = clip[i], clip[(i + 1) % len(clip)]
        edge = b - a
        if not output:
            break
        points, output = output, []
        prev = points[-1]
        prev_in = edge[0] * (prev[1] - a[1]) - edge[1] * (prev[0] - a[0]) >= 0
        for cur in points:
            cur_in = edge[0] * (cur[1] - a[1]) - edge[1] * (cur[0] - a[0]) >= 0
            if cur_in != prev_in:
                d = cur - prev
                den = edge[0] * d[1] - edge[1] * d[0]
                if den != 0.0:
                    t = (edge[0] * (a[1] - prev[1]) - edge[1] * (a[0] - prev[0])) / den
                    output.append(prev + t * d)
            if cur_in:
                output.append(cur)
            prev, prev_in = cur, cur_in
    return np.array(output) if output else np.zeros((0, 2))


def _footprint(box: Box3D) -> tuple[np.ndarray, float]:
    corners = bev_corners(box)
    area = _polygon_area(corners)
    if area <= 0.0:
        raise DegenerateBoxError(f"box footprint has zero area: {box}")
    return corners, area


def bev_intersection_area(a: Box3D, b: Box3D) -> float:
    """Exact intersection area of the two rotated top-down rectangles."""
    ca, _ = _footprint(a)
    cb, _ = _footprint(b)
    clipped = _clip_polygon(ca, cb)
    if len(clipped) < 3:
        return 0.0
    return _polygon_area(clipped)


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Intersection over union of the rotated top-down footprints."""
    _, area_a = _footprint(a)
    _, area_b = _footprint(b)
    inter = bev_intersection_area(a, b)
    return inter / (area_a + area_b - inter)


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU: footprint intersection times vertical overlap."""
    _, area_a = _footprint(a)
    _, area_b = _footprint(b)
    inter_area = bev_intersection_area(a, b)
    za0, za1 = a.center[2] - a.dims[2] / 2, a.center[2] + a.dims[2] / 2
    zb0, zb1 = b.center[2] - b.dims[2] / 2, b.center[2] + b.dims[2] / 2
    overlap = max(0.0, min(za1, zb1) - max(za0, zb0))
    inter = inter_area * overlap
    vol_a = area_a * a.dims[2]
    vol_b = area_b * b.dims[2]
    return inter / (vol_a + vol_b - inter)


def _match_greedy(
    dets: Sequence[Detection],
    gts: Sequence[Box3D],
    threshold: float,
    iou_fn: Callable[[Box3D, Box3D], float],
) -> list[bool]:
    """True-positive flags per detection in descending-score order.

    Ties in score keep input order; each ground truth matches at most once,
    to the highest-IoU detection that reaches it first.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    matched = [False] * len(gts)
    tp = []
    for i in order:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            iou = iou_fn(dets[i].box, gt)
            if iou >= threshold and iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0:
            matched[best_j] = True
            tp.append(True)
        else:
            tp.append(False)
    return tp


def ap_r40_multi(
    frames: Sequence[tuple[Sequence[Detection], Sequence[Box3D]]],
    cls: str,
    config: EvalConfig,
    iou_fn: Callable[[Box3D, Box3D], float] = bev_iou,
) -> float:
    """Average precision over one or more frames for a single class.

    Detections are matched greedily within their own frame, pooled, and
    sorted by descending score; precision at each recall position r is the
    interpolated maximum precision over operating points with recall >= r
    (0 when unreachable). With no ground truth the AP is defined as 0.
    """
    if cls not in config.iou_thresholds:
        raise UnknownClassError(cls)
    threshold = config.iou_thresholds[cls]
    num_gt = sum(len(gts) for _, gts in frames)
    if num_gt == 0:
        return 0.0
    pooled: list[tuple[float, bool]] = []
    for dets, gts in frames:
        order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
        flags = _match_greedy(dets, gts, threshold, iou_fn)
        pooled.extend((dets[i].score, flag) for i, flag in zip(order, flags))
    pooled.sort(key=lambda pair: -pair[0])
    tp = np.cumsum([flag for _, flag in pooled]) if pooled else np.zeros(0, dtype=np.int64)
    ranks = np.arange(1, len(pooled) + 1)
    precisions = tp / ranks if len(ranks) else np.zeros(0)
    n = config.recall_positions
    total = 0.0
    for k in range(1, n + 1):
        # recall >= k/n compared in exact integer arithmetic
        at_least = precisions[n * tp >= k * num_gt]
        total += float(at_least.max()) if len(at_least) else 0.0
    return total / n


def ap_r40(
    dets: Sequence[Detection],
    gts: Sequence[Box3D],
    cls: str,
    config: EvalConfig,
    iou_fn: Callable[[Box3D, Box3D], float] = bev_iou,
) -> float:
    """Single-frame average precision at evenly spaced recall positions."""
    return ap_r40_multi([(dets, gts)], cls, config, iou_fn)


@dataclass(frozen=True)
class BinResult:
    lo: float
    hi: float
    ap: float
    num_gt: int
    num_det: int
    empty: bool  # no ground truth fell in this bin


def _bev_distance(center: Sequence[float]) -> float:
    return math.hypot(center[0], center[1])


def range_binned_ap_multi(
    frames: Sequence[tuple[Sequence[Detection], Sequence[Box3D]]],
    cls: str,
    config: EvalConfig,
    iou_fn: Callable[[Box3D, Box3D], float] = bev_iou,
) -> list[BinResult]:
    """AP per range bin over one or more frames; boxes are assigned by their
    own center's top-down distance from the sensor origin, bins half-open
    [lo, hi). Bins with no ground truth report AP 0 with an explicit flag."""
    results = []
    for lo, hi in config.range_bins:
        bin_frames = [
            (
                [d for d in dets if lo <= _bev_distance(d.box.center) < hi],
                [g for g in gts if lo <= _bev_distance(g.center) < hi],
            )
            for dets, gts in frames
        ]
        num_gt = sum(len(gts) for _, gts in bin_frames)
        num_det = sum(len(dets) for dets, _ in bin_frames)
        ap = ap_r40_multi(bin_frames, cls, config, iou_fn)
        results.append(BinResult(lo, hi, ap, num_gt, num_det, empty=num_gt == 0))
    return results


def range_binned_ap(
    dets: Sequence[Detection],
    gts: Sequence[Box3D],
    cls: str,
    config: EvalConfig,
    iou_fn: Callable[[Box3D, Box3D], float] = bev_iou,
) -> list[BinResult]:
    """Single-frame range-binned AP; see range_binned_ap_multi."""
    return range_binned_ap_multi([(dets, gts)], cls, config, iou_fn)


@dataclass(frozen=True)
class DensityBin:
    lo: float
    hi: float
    point_correspondences: int
    voxel_correspondences: int
    ratio: float | None


@dataclass(frozen=True)
class DensityReport:
    point_correspondences: int
    voxel_correspondences: int
    ratio: float | None
    per_bin: tuple[DensityBin, ...]
    per_level: tuple[int, ...]


def _in_image(u: np.ndarray, v: np.ndarray, depth: np.ndarray, calib: CameraCalib):
    return (
        (depth > 0)
        & (u >= 0.0)
        & (u <= calib.image_width - 1.0)
        & (v >= 0.0)
        & (v <= calib.image_height - 1.0)
    )


def density_comparison(
    points: np.ndarray,
    fused: Sequence["FusedLevel"],
    calib: CameraCalib,
    config: EvalConfig | None = None,
    inverse_transform=None,
) -> DensityReport:
    """Compare raw point-pixel correspondences against the multi-scale
    voxel-center correspondences available to the fusion step.

    A raw correspondence is a cloud point with positive depth projecting
    inside the image; a voxel correspondence is an in-image projected voxel
    center, summed over hierarchy levels. The ratio is None when the cloud
    contributes no correspondences.
    """
    from .augment import invert_points

    config = config or EvalConfig()
    pts = np.asarray(points, dtype=float).reshape(-1, 4)[:, :3]
    if inverse_transform is not None:
        pts = invert_points(inverse_transform, pts)
    pp = project_points(calib, pts) if len(pts) else None
    if pp is not None:
        pt_in = _in_image(pp.u, pp.v, pp.depth, calib)
        pt_dist = np.hypot(pts[:, 0], pts[:, 1])
    else:
        pt_in = np.zeros(0, dtype=bool)
        pt_dist = np.zeros(0)

    level_counts = []
    vox_in_all, vox_dist_all = [], []
    for level in fused:
        locs = level.pixel_locs
        in_img = _in_image(locs.u, locs.v, locs.depth, calib)
        level_counts.append(int(in_img.sum()))
        vox_in_all.append(in_img)
        vox_dist_all.append(np.hypot(level.centers[:, 0], level.centers[:, 1]))
    vox_in = np.concatenate(vox_in_all) if vox_in_all else np.zeros(0, dtype=bool)
    vox_dist = np.concatenate(vox_dist_all) if vox_dist_all else np.zeros(0)

    a = int(pt_in.sum())
    b = int(sum(level_counts))
    bins = []
    for lo, hi in config.range_bins:
        pa = int((pt_in & (pt_dist >= lo) & (pt_dist < hi)).sum())
        pb = int((vox_in & (vox_dist >= lo) & (vox_dist < hi)).sum())
        bins.append(DensityBin(lo, hi, pa, pb, pb / pa if pa else None))
    return DensityReport(
        point_correspondences=a,
        voxel_correspondences=b,
        ratio=b / a if a else None,
        per_bin=tuple(bins),
        per_level=tuple(level_counts),
    )
