"""Oriented 3D boxes, axis-aligned 2D boxes, and their corner geometry.

Box3D lives in the lidar frame: center at the volumetric midpoint, dims
(length, width, height) with length along the heading direction, yaw about
the vertical (+Z) axis. Box2D is an axis-aligned pixel rectangle with an
optional detection confidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError


@dataclass(frozen=True)
class Box3D:
    center: tuple[float, float, float]
    dims: tuple[float, float, float]  # (length, width, height)
    yaw: float


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image-plane rectangle, u1 <= u2 and v1 <= v2 in pixels.

    confidence is None until a detector score or a simulated confidence is
    assigned; when set it must lie in [0, 1].
    """

    u1: float
    v1: float
    u2: float
    v2: float
    confidence: float | None = None

    def __post_init__(self):
        vals = (self.u1, self.v1, self.u2, self.v2)
        if not all(np.isfinite(vals)):
            raise InvalidConfigError(f"non-finite box bounds: {vals}")
        if self.u1 > self.u2 or self.v1 > self.v2:
            raise InvalidConfigError(f"box bounds out of order: {vals}")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise InvalidConfigError(f"confidence {self.confidence} outside [0, 1]")


def bev_corners(box: Box3D) -> np.ndarray:
    """(4, 2) top-down footprint corners in counter-clockwise order."""
    l, w, _ = box.dims
    local = np.array(
        [[l / 2, w / 2], [-l / 2, w / 2], [-l / 2, -w / 2], [l / 2, -w / 2]]
    )
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.asarray(box.center[:2])


def corners_3d(box: Box3D) -> np.ndarray:
    """(8, 3) corners: bottom face first, then top face, both CCW in BEV."""
    bev = bev_corners(box)
    z0 = box.center[2] - box.dims[2] / 2
    z1 = box.center[2] + box.dims[2] / 2
    bottom = np.column_stack([bev, np.full(4, z0)])
    top = np.column_stack([bev, np.full(4, z1)])
    return np.vstack([bottom, top])


def contains_points(box: Box3D, pts: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Boolean mask of points (N, 3+) inside the oriented box (inclusive)."""
    pts = np.asarray(pts, dtype=float)
    rel = pts[:, :3] - np.asarray(box.center)
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    # rotate into the box frame (inverse yaw)
    x = c * rel[:, 0] + s * rel[:, 1]
    y = -s * rel[:, 0] + c * rel[:, 1]
    l, w, h = box.dims
    return (
        (np.abs(x) <= l / 2 + atol)
        & (np.abs(y) <= w / 2 + atol)
        & (np.abs(rel[:, 2]) <= h / 2 + atol)
    )
