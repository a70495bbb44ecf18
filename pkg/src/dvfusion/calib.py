"""Camera model: KITTI-style calibration parsing and lidar-to-pixel projection.

The projection chain is proj (3x4 intrinsics+baseline) @ rect (4x4
rectification) @ lidar_to_cam (4x4 rigid transform); points behind the camera
are flagged rather than rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .boxes import Box2D, Box3D, corners_3d
from .errors import (
    InvalidConfigError,
    MalformedFloatError,
    MissingKeyError,
    NonPositiveDimsError,
    SingularCalibError,
    WrongCountError,
)

# KITTI left color camera image size; calib files do not record it.
DEFAULT_IMAGE_WIDTH = 1242
DEFAULT_IMAGE_HEIGHT = 375


@dataclass(frozen=True)
class CameraCalib:
    """Projection chain from lidar frame to pixel coordinates.

    proj: (3, 4) pixel projection matrix.
    rect: (4, 4) homogeneous rectification, bottom row (0, 0, 0, 1).
    lidar_to_cam: (4, 4) rigid transform in meters, orthonormal rotation block.
    """

    proj: np.ndarray
    rect: np.ndarray
    lidar_to_cam: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self):
        proj = np.asarray(self.proj, dtype=float).reshape(3, 4)
        rect = np.asarray(self.rect, dtype=float).reshape(4, 4)
        l2c = np.asarray(self.lidar_to_cam, dtype=float).reshape(4, 4)
        bottom = np.array([0.0, 0.0, 0.0, 1.0])
        for name, m in (("rect", rect), ("lidar_to_cam", l2c)):
            if not np.allclose(m[3], bottom, atol=1e-9):
                raise InvalidConfigError(f"{name} bottom row must be (0, 0, 0, 1)")
        rot = l2c[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-6):
            raise InvalidConfigError("lidar_to_cam rotation block is not orthonormal")
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidConfigError("image dimensions must be positive")
        for m in (proj, rect, l2c):
            m.flags.writeable = False
        object.__setattr__(self, "proj", proj)
        object.__setattr__(self, "rect", rect)
        object.__setattr__(self, "lidar_to_cam", l2c)

    @property
    def chain(self) -> np.ndarray:
        """(3, 4) combined lidar-to-pixel matrix."""
        return self.proj @ self.rect @ self.lidar_to_cam


@dataclass(frozen=True)
class PixelPoint:
    u: float
    v: float
    depth: float
    in_front: bool


class ProjectedPoints:
    """Projection results for a batch of points, index-aligned with the input.

    Stored as arrays for vectorized consumers; indexing yields PixelPoint.
    """

    def __init__(self, u: np.ndarray, v: np.ndarray, depth: np.ndarray):
        self.u = u
        self.v = v
        self.depth = depth

    @property
    def in_front(self) -> np.ndarray:
        return self.depth > 0

    def __len__(self) -> int:
        return len(self.u)

    def __getitem__(self, i: int) -> PixelPoint:
        return PixelPoint(
            float(self.u[i]), float(self.v[i]), float(self.depth[i]),
            bool(self.depth[i] > 0),
        )


def _parse_floats(key: str, value: str, expected: int, line_no: int) -> np.ndarray:
    tokens = value.split()
    if len(tokens) != expected:
        raise WrongCountError(key, expected, len(tokens))
    out = np.empty(expected)
    for i, tok in enumerate(tokens):
        try:
            out[i] = float(tok)
        except ValueError:
            raise MalformedFloatError(line_no, i, tok) from None
    return out


def parse_calib(
    text: str,
    image_width: int = DEFAULT_IMAGE_WIDTH,
    image_height: int = DEFAULT_IMAGE_HEIGHT,
) -> CameraCalib:
    """Parse a KITTI calibration file.

    Requires `P2:` (12 floats), `R0_rect:` (9 floats) and `Tr_velo_to_cam:`
    (12 floats); other keys are ignored. The image size is not stored in
    KITTI calib files, so it is supplied by the caller (KITTI defaults).
    """
    found: dict[str, np.ndarray] = {}
    counts = {"P2": 12, "R0_rect": 9, "Tr_velo_to_cam": 12}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or ":" not in line:
            continue
        key, value = line.split(":", 1)
        key = key.strip()
        if key in counts:
            found[key] = _parse_floats(key, value, counts[key], line_no)
    for key in counts:
        if key not in found:
            raise MissingKeyError(key)

    rect = np.eye(4)
    rect[:3, :3] = found["R0_rect"].reshape(3, 3)
    lidar_to_cam = np.eye(4)
    lidar_to_cam[:3, :4] = found["Tr_velo_to_cam"].reshape(3, 4)
    return CameraCalib(
        proj=found["P2"].reshape(3, 4),
        rect=rect,
        lidar_to_cam=lidar_to_cam,
        image_width=image_width,
        image_height=image_height,
    )


def project_points(calib: CameraCalib, pts: np.ndarray) -> ProjectedPoints:
    """Project lidar-frame points (N, 3) to continuous pixel coordinates.

    depth is the camera-frame z of each point; points with depth <= 0 are
    flagged in_front=False (depth == 0 additionally gets u = v = 0). Output
    order matches input order.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    h = pts @ calib.chain[:, :3].T + calib.chain[:, 3]
    depth = h[:, 2]
    safe = np.where(depth != 0.0, depth, 1.0)
    u = np.where(depth != 0.0, h[:, 0] / safe, 0.0)
    v = np.where(depth != 0.0, h[:, 1] / safe, 0.0)
    return ProjectedPoints(u, v, depth)


def backproject(
    calib: CameraCalib, u: np.ndarray, v: np.ndarray, depth: np.ndarray
) -> np.ndarray:
    """Invert the projection chain: pixel coordinates + depth -> lidar points."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    depth = np.atleast_1d(np.asarray(depth, dtype=float))
    m = calib.chain
    h = np.column_stack([u * depth, v * depth, depth])
    try:
        return np.linalg.solve(m[:, :3], (h - m[:, 3]).T).T
    except np.linalg.LinAlgError:
        raise SingularCalibError("projection chain is singular") from None


def project_box3d_to_aabb2d(calib: CameraCalib, box: Box3D) -> Box2D | None:
    """Axis-aligned pixel rectangle covering a 3D box, or None if not visible.

    The 8 corners are projected; corners behind the camera are excluded, the
    min/max of the rest is clipped to the image, and a clipped rectangle with
    zero area counts as not visible. Confidence is left unset.
    """
    if min(box.dims) <= 0:
        raise NonPositiveDimsError(f"box dims must be positive: {box.dims}")
    pp = project_points(calib, corners_3d(box))
    front = pp.in_front
    if not front.any():
        return None
    u1 = max(float(pp.u[front].min()), 0.0)
    u2 = min(float(pp.u[front].max()), float(calib.image_width))
    v1 = max(float(pp.v[front].min()), 0.0)
    v2 = min(float(pp.v[front].max()), float(calib.image_height))
    if u2 <= u1 or v2 <= v1:
        return None
    return Box2D(u1=u1, v1=v1, u2=u2, v2=v2)
