"""Training-side data manipulation: reversible global transforms, ground
truth sampling with collision checks, mask dropout, and point dropping.

Global transforms compose as flip(rotate(scale(p))) in that fixed order so
the inverse (scale back, rotate back, flip again) is exact; the pipeline
records the applied transform and reverses voxel centers before projecting
through the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .boxes import Box3D, contains_points
from .calib import CameraCalib
from .errors import (
    AlreadyTransformedError,
    IndexOutOfRangeError,
    InvalidConfigError,
)
from .evaluation import bev_iou
from .rng import RandomStream
from .voxelgrid import GridConfig

# Ground height used for placing sampled objects and synthetic scenes;
# sits just above the KITTI grid's lower z bound.
DEFAULT_GROUND_Z = -0.9


@dataclass(frozen=True)
class GlobalTransform:
    """Global scale, yaw about +Z, and optional mirror across the X axis."""

    scale: float = 1.0
    yaw: float = 0.0
    flip_x: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidConfigError(f"scale must be positive, got {self.scale}")
        if not np.isfinite(self.yaw):
            raise InvalidConfigError("yaw must be finite")

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.yaw == 0.0 and not self.flip_x


def _forward_matrix(t: GlobalTransform) -> np.ndarray:
    c, s = np.cos(t.yaw), np.sin(t.yaw)
    m = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) * t.scale
    if t.flip_x:
        m[1] = -m[1]
    return m


def _inverse_matrix(t: GlobalTransform) -> np.ndarray:
    c, s = np.cos(t.yaw), np.sin(t.yaw)
    m = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]]) / t.scale
    if t.flip_x:
        m[:, 1] = -m[:, 1]
    return m


def _map_points(pts: np.ndarray, m: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    out = pts.copy()
    out[:, :3] = pts[:, :3] @ m.T
    return out


def transform_points(t: GlobalTransform, pts: np.ndarray) -> np.ndarray:
    """Apply scale, then rotation, then flip to the xyz columns."""
    return _map_points(pts, _forward_matrix(t))


def invert_points(t: GlobalTransform, pts: np.ndarray) -> np.ndarray:
    """Exact inverse of transform_points: flip, rotate back, scale back."""
    return _map_points(pts, _inverse_matrix(t))


def transform_box(t: GlobalTransform, box: Box3D) -> Box3D:
    center = transform_points(t, np.asarray(box.center, dtype=float).reshape(1, 3))[0]
    yaw = box.yaw + t.yaw
    if t.flip_x:
        yaw = -yaw
    dims = tuple(d * t.scale for d in box.dims)
    return Box3D(center=tuple(center), dims=dims, yaw=yaw)


@dataclass(frozen=True, eq=False)
class Scene:
    """One training/inference scene: cloud, ground truth, and mask state."""

    points: np.ndarray  # (N, 4) x, y, z, intensity
    gt_boxes: tuple[Box3D, ...]
    mask_visible: tuple[bool, ...]
    calib: CameraCalib
    applied_transform: GlobalTransform | None = None

    def __post_init__(self):
        if len(self.mask_visible) != len(self.gt_boxes):
            raise InvalidConfigError(
                f"{len(self.gt_boxes)} boxes but {len(self.mask_visible)} flags"
            )


def apply_transform(scene: Scene, t: GlobalTransform) -> Scene:
    """Augment a scene once; a second application is an error."""
    if scene.applied_transform is not None:
        raise AlreadyTransformedError("scene already carries a global transform")
    return replace(
        scene,
        points=transform_points(t, scene.points),
        gt_boxes=tuple(transform_box(t, b) for b in scene.gt_boxes),
        applied_transform=t,
    )


@dataclass(frozen=True, eq=False)
class SampleEntry:
    """A stored object: points relative to its box center, box at the origin."""

    points: np.ndarray  # (M, 4)
    box: Box3D  # center (0, 0, 0)
    label: str

    def __post_init__(self):
        if tuple(self.box.center) != (0.0, 0.0, 0.0):
            raise InvalidConfigError("sample entry box must be centered at the origin")
        # tolerance covers float32 storage rounding of on-surface points
        if len(self.points) and not contains_points(self.box, self.points, 1e-5).all():
            raise InvalidConfigError("sample entry points must lie within its box")


@dataclass(frozen=True)
class SampleDB:
    entries: tuple[SampleEntry, ...]


def gt_sample(
    scene: Scene,
    db: SampleDB,
    k: int,
    rng: RandomStream,
    config: GridConfig,
    ground_z: float = DEFAULT_GROUND_Z,
    max_attempts: int | None = None,
) -> tuple[Scene, list[int]]:
    """Paste up to k stored objects into the scene at random ground positions.

    A candidate is accepted only when its rotated top-down footprint has
    zero IoU with every box already in the scene (originals and earlier
    acceptances). Placement stops after k acceptances or 10*k attempts;
    placing fewer than k is a valid outcome. Returns the new scene and the
    indices of the inserted boxes (initially mask-visible).
    """
    if k < 0:
        raise InvalidConfigError(f"sample count must be >= 0, got {k}")
    if k == 0 or not db.entries:
        return scene, []
    if max_attempts is None:
        max_attempts = 10 * k

    existing = list(scene.gt_boxes)
    added_points, added_boxes = [], []
    attempts = 0
    while len(added_boxes) < k and attempts < max_attempts:
        attempts += 1
        entry = db.entries[rng.integer(len(db.entries))]
        x = rng.uniform(config.range_min[0], config.range_max[0])
        y = rng.uniform(config.range_min[1], config.range_max[1])
        center = (x, y, ground_z + entry.box.dims[2] / 2)
        candidate = Box3D(center=center, dims=entry.box.dims, yaw=entry.box.yaw)
        if any(bev_iou(candidate, other) > 0.0 for other in existing):
            continue
        pts = entry.points.copy()
        pts[:, :3] += np.asarray(center)
        added_points.append(pts)
        added_boxes.append(candidate)
        existing.append(candidate)

    if not added_boxes:
        return scene, []
    first = len(scene.gt_boxes)
    new_scene = replace(
        scene,
        points=np.vstack([scene.points] + added_points),
        gt_boxes=scene.gt_boxes + tuple(added_boxes),
        mask_visible=scene.mask_visible + (True,) * len(added_boxes),
    )
    return new_scene, list(range(first, first + len(added_boxes)))


def dropout_masks(
    scene: Scene, inserted_indices: list[int], p_drop: float, rng: RandomStream
) -> Scene:
    """Hide each inserted box from the foreground mask with probability p_drop.

    Only the listed (inserted) boxes may be flipped; original boxes are never
    touched. One uniform draw is consumed per listed index, in order.
    """
    if not 0.0 <= p_drop <= 1.0:
        raise InvalidConfigError(f"p_drop must be in [0, 1], got {p_drop}")
    visible = list(scene.mask_visible)
    for idx in inserted_indices:
        if not 0 <= idx < len(visible):
            raise IndexOutOfRangeError(f"box index {idx} out of range")
        if rng.uniform(0.0, 1.0) < p_drop:
            visible[idx] = False
    return replace(scene, mask_visible=tuple(visible))


def drop_points(
    points: np.ndarray, fraction: float, rng: RandomStream
) -> np.ndarray:
    """Remove each point independently with the given probability; survivor
    order is preserved."""
    if not 0.0 <= fraction <= 1.0:
        raise InvalidConfigError(f"drop fraction must be in [0, 1], got {fraction}")
    points = np.asarray(points)
    keep = rng.uniforms(len(points)) >= fraction
    return points[keep].copy()
