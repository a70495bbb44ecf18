"""Foreground heatmaps: construction from boxes, aggregation, and sampling.

A heatmap is a dense H x W field of per-pixel foreground confidence in
[0, 1]. Training mode rasterizes projected ground-truth boxes with simulated
confidences; inference mode rasterizes external 2D detections. Continuous
pixel locations are read back with bilinear interpolation.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .boxes import Box2D, Box3D
from .calib import CameraCalib, project_box3d_to_aabb2d
from .errors import (
    DimMismatchError,
    EmptyImageError,
    InvalidConfigError,
    MalformedFloatError,
    ParseError,
    WrongFieldCountError,
)
from .rng import RandomStream

RAW_MAGIC = b"DVFH"
RAW_HEADER = struct.Struct("<4sIII")  # magic, width, height, reserved


@dataclass(frozen=True)
class ConfidenceRange:
    """Bounds [a, b] for simulated detection confidences, 0 <= a <= b <= 1."""

    a: float = 0.8
    b: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.a <= self.b <= 1.0:
            raise InvalidConfigError(f"confidence range [{self.a}, {self.b}] invalid")


class ForegroundHeatmap:
    """Immutable H x W scalar field with all values in [0, 1]."""

    def __init__(self, values: np.ndarray):
        values = np.ascontiguousarray(values, dtype=np.float32)
        if values.ndim != 2:
            raise InvalidConfigError("heatmap values must be a 2D array")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise InvalidConfigError("heatmap values outside [0, 1]")
        values.flags.writeable = False
        self.values = values

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def zeros(cls, width: int, height: int) -> "ForegroundHeatmap":
        if width <= 0 or height <= 0:
            raise EmptyImageError(f"image dims {width} x {height}")
        return cls(np.zeros((height, width), dtype=np.float32))


def mask_from_box(box: Box2D, width: int, height: int) -> ForegroundHeatmap:
    """Rasterize one box: pixel (i, j) takes the box confidence when its
    integer coordinates satisfy v1 <= i <= v2 and u1 <= j <= u2 after the box
    is clipped to the image; all other pixels are 0."""
    if width <= 0 or height <= 0:
        raise EmptyImageError(f"image dims {width} x {height}")
    if box.confidence is None:
        raise InvalidConfigError("box confidence must be set before rasterizing")
    values = np.zeros((height, width), dtype=np.float32)
    j_lo = max(0, int(np.ceil(box.u1)))
    j_hi = min(width - 1, int(np.floor(box.u2)))
    i_lo = max(0, int(np.ceil(box.v1)))
    i_hi = min(height - 1, int(np.floor(box.v2)))
    if j_lo <= j_hi and i_lo <= i_hi:
        values[i_lo : i_hi + 1, j_lo : j_hi + 1] = box.confidence
    return ForegroundHeatmap(values)


def aggregate_masks(
    masks: list[ForegroundHeatmap], width: int, height: int
) -> ForegroundHeatmap:
    """Pixel-wise max over masks; the empty list yields the all-zero map."""
    if width <= 0 or height <= 0:
        raise EmptyImageError(f"image dims {width} x {height}")
    out = np.zeros((height, width), dtype=np.float32)
    for m in masks:
        if m.values.shape != out.shape:
            raise DimMismatchError(
                f"mask dims {m.width} x {m.height} != image dims {width} x {height}"
            )
        np.maximum(out, m.values, out=out)
    return ForegroundHeatmap(out)


def training_mask(
    calib: CameraCalib,
    gt_boxes: list[Box3D],
    visible_flags: list[bool],
    conf_range: ConfidenceRange,
    rng: RandomStream,
) -> ForegroundHeatmap:
    """Foreground mask from ground-truth 3D boxes.

    Each visible box is projected to an axis-aligned pixel rectangle and
    rasterized with a confidence drawn from U[a, b]. Boxes flagged invisible
    (simulated missed detections) contribute nothing and consume no draws, so
    dropping a box is equivalent to omitting it.
    """
    if len(visible_flags) != len(gt_boxes):
        raise InvalidConfigError(
            f"{len(gt_boxes)} boxes but {len(visible_flags)} visibility flags"
        )
    masks = []
    for box, visible in zip(gt_boxes, visible_flags):
        if not visible:
            continue
        aabb = project_box3d_to_aabb2d(calib, box)
        if aabb is None:
            continue
        c = rng.uniform(conf_range.a, conf_range.b)
        masks.append(
            mask_from_box(
                Box2D(aabb.u1, aabb.v1, aabb.u2, aabb.v2, confidence=c),
                calib.image_width,
                calib.image_height,
            )
        )
    return aggregate_masks(masks, calib.image_width, calib.image_height)


def inference_mask(dets: list[Box2D], width: int, height: int) -> ForegroundHeatmap:
    """Predicted foreground heatmap from external 2D detections.

    Out-of-image coordinates are clipped during rasterization, never an error.
    """
    return aggregate_masks(
        [mask_from_box(d, width, height) for d in dets], width, height
    )


def sample_many(hm: ForegroundHeatmap, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at continuous pixel coordinates.

    Pixel (i, j) has its center at (u, v) = (j, i). Coordinates outside
    [0, W-1] x [0, H-1] read as background (0). The result is clamped to the
    min/max of the four surrounding pixels, so constant regions are sampled
    exactly.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    h, w = hm.values.shape
    inside = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    uu = np.clip(u, 0.0, w - 1.0)
    vv = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uu).astype(np.int64)
    y0 = np.floor(vv).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = uu - x0
    fy = vv - y0
    vals = hm.values
    c00 = vals[y0, x0].astype(float)
    c01 = vals[y0, x1].astype(float)
    c10 = vals[y1, x0].astype(float)
    c11 = vals[y1, x1].astype(float)
    top = c00 + fx * (c01 - c00)
    bottom = c10 + fx * (c11 - c10)
    out = top + fy * (bottom - top)
    corners = np.stack([c00, c01, c10, c11])
    out = np.clip(out, corners.min(axis=0), corners.max(axis=0))
    return np.where(inside, out, 0.0)


def sample(hm: ForegroundHeatmap, u: float, v: float) -> float:
    """Scalar bilinear sample; see sample_many."""
    return float(sample_many(hm, np.array([u]), np.array([v]))[0])


def to_pgm_bytes(hm: ForegroundHeatmap) -> bytes:
    """8-bit binary PGM (P5); pixel value = round(255 * confidence)."""
    header = f"P5\n{hm.width} {hm.height}\n255\n".encode("ascii")
    body = np.rint(hm.values * 255.0).astype(np.uint8).tobytes()
    return header + body


def to_raw_bytes(hm: ForegroundHeatmap) -> bytes:
    """Raw little-endian float32 rows after a 16-byte DVFH header."""
    header = RAW_HEADER.pack(RAW_MAGIC, hm.width, hm.height, 0)
    return header + hm.values.astype("<f4").tobytes()


def from_raw_bytes(data: bytes) -> ForegroundHeatmap:
    """Decode the DVFH raw-float format; bit-exact inverse of to_raw_bytes."""
    if len(data) < RAW_HEADER.size:
        raise ParseError(f"raw heatmap shorter than the {RAW_HEADER.size}-byte header")
    magic, width, height, _ = RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise ParseError(f"bad magic {magic!r}, expected {RAW_MAGIC!r}")
    expected = RAW_HEADER.size + 4 * width * height
    if len(data) != expected:
        raise ParseError(f"raw heatmap length {len(data)}, expected {expected}")
    values = np.frombuffer(data, dtype="<f4", offset=RAW_HEADER.size)
    return ForegroundHeatmap(values.reshape(height, width).copy())


def parse_detections(text: str) -> list[Box2D]:
    """Parse 2D detections, one `u1 v1 u2 v2 confidence` line each.

    Blank lines and lines starting with '#' are ignored.
    """
    dets = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != 5:
            raise WrongFieldCountError(line_no, "5", len(tokens))
        values = []
        for i, tok in enumerate(tokens):
            try:
                values.append(float(tok))
            except ValueError:
                raise MalformedFloatError(line_no, i, tok) from None
        u1, v1, u2, v2, conf = values
        dets.append(Box2D(u1=u1, v1=v1, u2=u2, v2=v2, confidence=conf))
    return dets
