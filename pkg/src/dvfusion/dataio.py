"""KITTI-format ingestion, synthetic scene generation, and artifact output.

Covers the velodyne binary codec, label parsing, camera/lidar box frame
conversion, a deterministic synthetic scene generator used as the primary
test fixture, the sample database on disk, and path-based writers for every
output format (PGM, raw heatmap, CSV, JSON).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .augment import DEFAULT_GROUND_Z, SampleDB, SampleEntry, Scene
from .boxes import Box3D
from .calib import CameraCalib, backproject, project_box3d_to_aabb2d
from .errors import (
    MalformedFloatError,
    SingularCalibError,
    TruncatedFileError,
    WrongFieldCountError,
)
from .fusion import CorrespondenceStats
from .heatmap import ForegroundHeatmap, from_raw_bytes, to_pgm_bytes, to_raw_bytes
from .rng import RandomStream
from .voxelgrid import GridConfig

POINT_RECORD_SIZE = 16  # four little-endian float32 per return


@dataclass(frozen=True)
class LabelRecord:
    """One KITTI label line (camera-frame box, bottom-center location)."""

    cls: str
    truncation: float
    occlusion: int
    alpha: float
    bbox2d: tuple[float, float, float, float]
    dims: tuple[float, float, float]  # (h, w, l)
    location: tuple[float, float, float]
    yaw: float
    score: float | None = None


def read_velodyne(data: bytes) -> np.ndarray:
    """Decode (x, y, z, intensity) float32 quadruples, preserving file order."""
    if len(data) % POINT_RECORD_SIZE != 0:
        raise TruncatedFileError(len(data), POINT_RECORD_SIZE)
    return np.frombuffer(data, dtype="<f4").reshape(-1, 4).copy()


def velodyne_bytes(points: np.ndarray) -> bytes:
    """Encode a point cloud; bit-exact inverse of read_velodyne on float32."""
    return np.ascontiguousarray(points, dtype="<f4").tobytes()


def read_labels(text: str) -> list[LabelRecord]:
    """Parse KITTI label lines: 15 fields, 16th score field tolerated.

    DontCare lines are kept with their class tag; malformed lines raise
    rather than being skipped.
    """
    records = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) not in (15, 16):
            raise WrongFieldCountError(line_no, "15 or 16", len(tokens))
        values = []
        for i, tok in enumerate(tokens[1:], start=1):
            try:
                values.append(float(tok))
            except ValueError:
                raise MalformedFloatError(line_no, i, tok) from None
        records.append(
            LabelRecord(
                cls=tokens[0],
                truncation=values[0],
                occlusion=int(values[1]),
                alpha=values[2],
                bbox2d=tuple(values[3:7]),
                dims=tuple(values[7:10]),
                location=tuple(values[10:13]),
                yaw=values[13],
                score=values[14] if len(values) > 14 else None,
            )
        )
    return records


def _format_label(rec: LabelRecord) -> str:
    fields = [
        rec.cls,
        f"{rec.truncation:.2f}",
        str(rec.occlusion),
        f"{rec.alpha:.6f}",
        *(f"{v:.4f}" for v in rec.bbox2d),
        *(f"{v:.6f}" for v in rec.dims),
        *(f"{v:.6f}" for v in rec.location),
        f"{rec.yaw:.6f}",
    ]
    if rec.score is not None:
        fields.append(f"{rec.score:.6f}")
    return " ".join(fields)


def labels_text(records: list[LabelRecord]) -> str:
    return "".join(_format_label(r) + "\n" for r in records)


def _wrap_angle(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def _cam_from_lidar(calib: CameraCalib) -> np.ndarray:
    return calib.rect @ calib.lidar_to_cam


def camera_box_to_lidar(rec: LabelRecord, calib: CameraCalib) -> Box3D:
    """Lift a label's bottom-center camera location to a lidar-frame box.

    The camera y axis points down, so the volumetric center sits h/2 above
    (toward -y from) the bottom-center location; yaw converts between the
    camera-frame rotation about Y and the lidar rotation about Z.
    """
    h, w, l = rec.dims
    center_cam = np.array(
        [rec.location[0], rec.location[1] - h / 2, rec.location[2], 1.0]
    )
    try:
        inv = np.linalg.inv(_cam_from_lidar(calib))
    except np.linalg.LinAlgError:
        raise SingularCalibError("rect @ lidar_to_cam is singular") from None
    center = inv @ center_cam
    yaw = _wrap_angle(-rec.yaw - math.pi / 2)
    return Box3D(center=tuple(center[:3]), dims=(l, w, h), yaw=yaw)


def lidar_box_to_camera(
    box: Box3D,
    calib: CameraCalib,
    cls: str = "Car",
    score: float | None = None,
) -> LabelRecord:
    """Inverse of camera_box_to_lidar; fills bbox2d with the projected AABB."""
    l, w, h = box.dims
    center_cam = _cam_from_lidar(calib) @ np.array([*box.center, 1.0])
    location = (center_cam[0], center_cam[1] + h / 2, center_cam[2])
    ry = _wrap_angle(-box.yaw - math.pi / 2)
    alpha = _wrap_angle(ry - math.atan2(location[0], location[2]))
    aabb = project_box3d_to_aabb2d(calib, box)
    bbox2d = (aabb.u1, aabb.v1, aabb.u2, aabb.v2) if aabb else (0.0, 0.0, 0.0, 0.0)
    return LabelRecord(
        cls=cls,
        truncation=0.0,
        occlusion=0,
        alpha=alpha,
        bbox2d=bbox2d,
        dims=(h, w, l),
        location=location,
        yaw=ry,
        score=score,
    )


def default_calib(image_width: int = 1242, image_height: int = 375) -> CameraCalib:
    """KITTI-like calibration template: forward-looking camera, standard
    lidar-to-camera axis permutation, plausible focal length and offsets."""
    proj = np.array(
        [
            [720.0, 0.0, 610.0, 0.0],
            [0.0, 720.0, 175.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
        ]
    )
    lidar_to_cam = np.array(
        [
            [0.0, -1.0, 0.0, 0.0],
            [0.0, 0.0, -1.0, -0.08],
            [1.0, 0.0, 0.0, -0.27],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    return CameraCalib(
        proj=proj,
        rect=np.eye(4),
        lidar_to_cam=lidar_to_cam,
        image_width=image_width,
        image_height=image_height,
    )


def calib_text(calib: CameraCalib) -> str:
    def row(name, values):
        return name + ": " + " ".join(f"{v:.12e}" for v in values) + "\n"

    return (
        row("P2", calib.proj.reshape(-1))
        + row("R0_rect", calib.rect[:3, :3].reshape(-1))
        + row("Tr_velo_to_cam", calib.lidar_to_cam[:3, :4].reshape(-1))
    )


# Car-sized template used for synthetic objects and the builtin sample DB.
_CAR_DIMS = (3.9, 1.6, 1.56)


def _surface_points(
    dims: tuple[float, float, float], n: int, rng: RandomStream
) -> np.ndarray:
    """n points on the side and top faces of a box centered at the origin,
    jittered slightly inward so every point lies within the box."""
    l, w, h = dims
    # faces: +x, -x, +y, -y, top; weights by area
    areas = np.array([w * h, w * h, l * h, l * h, l * w])
    cum = np.cumsum(areas / areas.sum())
    pts = np.empty((n, 4))
    for i in range(n):
        face = int(np.searchsorted(cum, rng.uniform(0.0, 1.0)))
        face = min(face, 4)
        a = rng.uniform(-0.5, 0.5)
        b = rng.uniform(-0.5, 0.5)
        inset = rng.uniform(0.0, 0.02)
        if face == 0:
            p = (l / 2 - inset, a * w, b * h)
        elif face == 1:
            p = (-l / 2 + inset, a * w, b * h)
        elif face == 2:
            p = (a * l, w / 2 - inset, b * h)
        elif face == 3:
            p = (a * l, -w / 2 + inset, b * h)
        else:
            p = (a * l, b * w, h / 2 - inset)
        pts[i, :3] = p
        pts[i, 3] = rng.uniform(0.3, 0.7)
    return pts


def _rotate_z(pts: np.ndarray, yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    out = pts.copy()
    out[:, 0] = c * pts[:, 0] - s * pts[:, 1]
    out[:, 1] = s * pts[:, 0] + c * pts[:, 1]
    return out


def synthetic_scene(
    seed: int,
    n_objects: int,
    config: GridConfig,
    calib: CameraCalib | None = None,
    object_ranges: list[float] | None = None,
) -> Scene:
    """Deterministic desk-scale scene: a jittered ground lattice plus
    car-sized surface point clusters placed inside the camera frustum.

    Per-object point counts fall off with the square of range, so distant
    objects are sparser. object_ranges pins each object's distance; otherwise
    ranges are drawn uniformly from [8, 55] m.
    """
    calib = calib or default_calib()
    rng = RandomStream(seed)
    ground_rng = rng.split("ground")
    obj_rng = rng.split("objects")
    lo = np.asarray(config.range_min, dtype=float)
    hi = np.asarray(config.range_max, dtype=float)

    xs = np.arange(lo[0] + 0.4, hi[0], 0.8)
    ys = np.arange(lo[1] + 0.4, hi[1], 0.8)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    n_ground = gx.size
    jit = ground_rng.uniforms(4 * n_ground).reshape(n_ground, 4)
    ground = np.empty((n_ground, 4))
    ground[:, 0] = gx.ravel() + 0.3 * (jit[:, 0] - 0.5)
    ground[:, 1] = gy.ravel() + 0.3 * (jit[:, 1] - 0.5)
    ground[:, 2] = DEFAULT_GROUND_Z + 0.04 * (jit[:, 2] - 0.5)
    ground[:, 3] = 0.2 + 0.1 * jit[:, 3]

    clusters = [ground]
    boxes = []
    for i in range(n_objects):
        depth = (
            float(object_ranges[i])
            if object_ranges is not None
            else obj_rng.uniform(8.0, 55.0)
        )
        u_pix = obj_rng.uniform(0.15 * calib.image_width, 0.85 * calib.image_width)
        anchor = backproject(calib, u_pix, 0.5 * calib.image_height, depth)[0]
        scale = 0.9 + 0.2 * obj_rng.uniform(0.0, 1.0)
        dims = tuple(d * scale for d in _CAR_DIMS)
        yaw = obj_rng.uniform(-math.pi, math.pi)
        center = (anchor[0], anchor[1], DEFAULT_GROUND_Z + dims[2] / 2)
        n_pts = max(20, int(round(900.0 / (depth / 10.0) ** 2)))
        pts = _surface_points(dims, n_pts, obj_rng)
        pts = _rotate_z(pts, yaw)
        pts[:, :3] += np.asarray(center)
        clusters.append(pts)
        boxes.append(Box3D(center=center, dims=dims, yaw=yaw))

    return Scene(
        points=np.vstack(clusters),
        gt_boxes=tuple(boxes),
        mask_visible=(True,) * len(boxes),
        calib=calib,
    )


def builtin_sample_db(seed: int = 101, n_entries: int = 4) -> SampleDB:
    """Small deterministic database of car-sized objects for sampling."""
    rng = RandomStream(seed)
    entries = []
    for i in range(n_entries):
        scale = 0.9 + 0.2 * rng.uniform(0.0, 1.0)
        dims = tuple(d * scale for d in _CAR_DIMS)
        yaw = rng.uniform(-math.pi, math.pi)
        pts = _rotate_z(_surface_points(dims, 120, rng), yaw)
        box = Box3D(center=(0.0, 0.0, 0.0), dims=dims, yaw=yaw)
        entries.append(SampleEntry(points=pts, box=box, label="Car"))
    return SampleDB(entries=tuple(entries))


# ---------------------------------------------------------------------------
# path-based readers/writers


def write_velodyne(path: str | Path, points: np.ndarray) -> None:
    Path(path).write_bytes(velodyne_bytes(points))


def read_velodyne_file(path: str | Path) -> np.ndarray:
    return read_velodyne(Path(path).read_bytes())


def write_labels(path: str | Path, records: list[LabelRecord]) -> None:
    Path(path).write_text(labels_text(records))


def read_labels_file(path: str | Path) -> list[LabelRecord]:
    return read_labels(Path(path).read_text())


def write_calib(path: str | Path, calib: CameraCalib) -> None:
    Path(path).write_text(calib_text(calib))


def write_heatmap_pgm(path: str | Path, hm: ForegroundHeatmap) -> None:
    Path(path).write_bytes(to_pgm_bytes(hm))


def write_heatmap_raw(path: str | Path, hm: ForegroundHeatmap) -> None:
    Path(path).write_bytes(to_raw_bytes(hm))


def read_heatmap_raw(path: str | Path) -> ForegroundHeatmap:
    return from_raw_bytes(Path(path).read_bytes())


def write_overlay_csv(path: str | Path, stats: CorrespondenceStats) -> None:
    lines = ["level,u,v,rho"]
    for level, u, v, rho in stats.records:
        lines.append(f"{int(level)},{u!r},{v!r},{rho!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_stats_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def save_sample_db(dirpath: str | Path, db: SampleDB) -> None:
    """Write one .bin point file plus a .json box/label sidecar per entry."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    for i, entry in enumerate(db.entries):
        stem = f"{i:04d}"
        write_velodyne(dirpath / f"{stem}.bin", entry.points)
        sidecar = {
            "label": entry.label,
            "box": {
                "center": list(entry.box.center),
                "dims": list(entry.box.dims),
                "yaw": entry.box.yaw,
            },
        }
        (dirpath / f"{stem}.json").write_text(
            json.dumps(sidecar, indent=2, sort_keys=True) + "\n"
        )


def load_sample_db(dirpath: str | Path) -> SampleDB:
    dirpath = Path(dirpath)
    entries = []
    for sidecar_path in sorted(dirpath.glob("*.json")):
        sidecar = json.loads(sidecar_path.read_text())
        points = read_velodyne_file(sidecar_path.with_suffix(".bin"))
        box = Box3D(
            center=tuple(sidecar["box"]["center"]),
            dims=tuple(sidecar["box"]["dims"]),
            yaw=float(sidecar["box"]["yaw"]),
        )
        entries.append(
            SampleEntry(points=points.astype(float), box=box, label=sidecar["label"])
        )
    return SampleDB(entries=tuple(entries))
