"""Command-line surface: `fuse`, `eval`, `sweep`, and `synth` subcommands.

Seeds are mandatory so no invocation is accidentally nondeterministic;
identical (args, seed) reruns produce byte-identical outputs. Configuration
precedence is CLI flag > JSON config file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from . import dataio
from .augment import (
    GlobalTransform,
    Scene,
    apply_transform,
    dropout_masks,
    drop_points,
    gt_sample,
)
from .boxes import Box3D
from .calib import parse_calib
from .errors import (
    DvfError,
    InvalidConfigError,
    InvalidRangeError,
    ParseError,
)
from .evaluation import (
    Detection,
    EvalConfig,
    ap_r40_multi,
    bev_iou,
    density_comparison,
    iou_3d,
    range_binned_ap_multi,
)
from .fusion import CorrespondenceStats, correspondence_report, fuse_hierarchy
from .heatmap import (
    ConfidenceRange,
    ForegroundHeatmap,
    inference_mask,
    parse_detections,
    training_mask,
)
from .rng import RandomStream
from .voxelgrid import GridConfig, build_hierarchy

_DEFAULTS = {
    "range_min": (0.0, -40.0, -1.0),
    "range_max": (70.0, 40.0, 3.0),
    "grid_res": (0.05, 0.05, 0.1),
    "levels": 4,
    "dilation": 1,
    "conf_min": 0.8,
    "conf_max": 1.0,
    "k_samples": 5,
    "p_drop": 0.5,
    "point_drop": 0.0,
    "fg_threshold": 0.9,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # single-line diagnostics; the default prints usage plus the error
    def error(self, message):
        raise _UsageError(message)


@dataclass(frozen=True)
class RunConfig:
    """Resolved pipeline parameters for one run."""

    grid: GridConfig
    seed: int
    conf_min: float = 0.8
    conf_max: float = 1.0
    k_samples: int = 5
    p_drop: float = 0.5
    point_drop: float = 0.0
    fg_threshold: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.conf_min <= self.conf_max <= 1.0:
            raise InvalidConfigError(
                f"confidence range [{self.conf_min}, {self.conf_max}] invalid"
            )
        for name in ("p_drop", "point_drop", "fg_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidConfigError(f"{name} must be in [0, 1], got {value}")
        if self.k_samples < 0:
            raise InvalidConfigError(f"k_samples must be >= 0, got {self.k_samples}")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "range_min": list(self.grid.range_min),
            "range_max": list(self.grid.range_max),
            "grid_res": list(self.grid.resolution),
            "levels": self.grid.num_levels,
            "dilation": self.grid.dilation_radius,
            "conf_min": self.conf_min,
            "conf_max": self.conf_max,
            "k_samples": self.k_samples,
            "p_drop": self.p_drop,
            "point_drop": self.point_drop,
            "fg_threshold": self.fg_threshold,
        }


def _parse_triple(text: str, flag: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise _UsageError(f"{flag} expects three comma-separated numbers, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"{flag} expects numbers, got {text!r}") from None


def _resolve_config(args) -> RunConfig:
    settings = dict(_DEFAULTS)
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(f"config file {path}: {exc}") from None
        unknown = set(loaded) - set(settings)
        if unknown:
            raise InvalidConfigError(
                f"config file {path}: unknown keys {sorted(unknown)}"
            )
        settings.update(loaded)
    for key in ("levels", "dilation", "conf_min", "conf_max", "k_samples",
                "p_drop", "point_drop", "fg_threshold"):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    for key, flag in (("range_min", "--range-min"), ("range_max", "--range-max"),
                      ("grid_res", "--grid-res")):
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = _parse_triple(value, flag)
    grid = GridConfig(
        range_min=tuple(settings["range_min"]),
        range_max=tuple(settings["range_max"]),
        resolution=tuple(settings["grid_res"]),
        num_levels=int(settings["levels"]),
        dilation_radius=int(settings["dilation"]),
    )
    return RunConfig(
        grid=grid,
        seed=args.seed,
        conf_min=float(settings["conf_min"]),
        conf_max=float(settings["conf_max"]),
        k_samples=int(settings["k_samples"]),
        p_drop=float(settings["p_drop"]),
        point_drop=float(settings["point_drop"]),
        fg_threshold=float(settings["fg_threshold"]),
    )


def _load_scene(args, grid: GridConfig) -> Scene:
    if getattr(args, "synthetic", None):
        parts = args.synthetic.split(",")
        if len(parts) != 2:
            raise _UsageError(f"--synthetic expects SEED,COUNT, got {args.synthetic!r}")
        try:
            seed, count = int(parts[0], 0), int(parts[1])
        except ValueError:
            raise _UsageError(f"--synthetic expects integers, got {args.synthetic!r}")
        return dataio.synthetic_scene(seed, count, grid)
    if not getattr(args, "velodyne", None) or not getattr(args, "calib", None):
        raise _UsageError("either --synthetic SEED,COUNT or --velodyne and --calib are required")
    points = dataio.read_velodyne_file(args.velodyne).astype(float)
    calib = parse_calib(Path(args.calib).read_text())
    boxes: tuple[Box3D, ...] = ()
    if getattr(args, "labels", None):
        records = dataio.read_labels_file(args.labels)
        boxes = tuple(
            dataio.camera_box_to_lidar(r, calib)
            for r in records
            if r.cls != "DontCare"
        )
    return Scene(
        points=points,
        gt_boxes=boxes,
        mask_visible=(True,) * len(boxes),
        calib=calib,
    )


@dataclass
class PipelineResult:
    heatmap: ForegroundHeatmap
    stats: CorrespondenceStats
    density: object
    config: RunConfig
    mode: str


def _run_pipeline(scene: Scene, rc: RunConfig, mode: str, dets_path: str | None,
                  sample_db_dir: str | None) -> PipelineResult:
    calib = scene.calib
    rng = RandomStream(rc.seed)
    inverse: GlobalTransform | None = None

    if mode == "train":
        db = (
            dataio.load_sample_db(sample_db_dir)
            if sample_db_dir
            else dataio.builtin_sample_db()
        )
        scene, inserted = gt_sample(scene, db, rc.k_samples, rng.split("gtsample"), rc.grid)
        scene = dropout_masks(scene, inserted, rc.p_drop, rng.split("dropout"))
        # the mask projects through the camera in the original frame, so it
        # is built from the pre-transform boxes; the recorded transform is
        # reversed again when voxel centers are projected
        mask = training_mask(
            calib,
            list(scene.gt_boxes),
            list(scene.mask_visible),
            ConfidenceRange(rc.conf_min, rc.conf_max),
            rng.split("confidence"),
        )
        aug = rng.split("transform")
        transform = GlobalTransform(
            scale=aug.uniform(0.95, 1.05),
            yaw=aug.uniform(-math.pi / 4, math.pi / 4),
            flip_x=aug.uniform(0.0, 1.0) < 0.5,
        )
        scene = apply_transform(scene, transform)
        inverse = transform
    else:
        if dets_path and dets_path != "none":
            dets = parse_detections(Path(dets_path).read_text())
            mask = inference_mask(dets, calib.image_width, calib.image_height)
        else:
            mask = ForegroundHeatmap.zeros(calib.image_width, calib.image_height)

    points = drop_points(scene.points, rc.point_drop, rng.split("pointdrop"))
    hierarchy = build_hierarchy(points, rc.grid)
    fused = fuse_hierarchy(hierarchy, calib, mask, inverse_transform=inverse)
    stats = correspondence_report(
        fused, rc.fg_threshold, calib.image_width, calib.image_height
    )
    density = density_comparison(points, fused, calib, EvalConfig(), inverse)
    return PipelineResult(heatmap=mask, stats=stats, density=density, config=rc, mode=mode)


def _density_dict(density) -> dict:
    return {
        "point_correspondences": density.point_correspondences,
        "voxel_correspondences": density.voxel_correspondences,
        "ratio": density.ratio,
        "per_level": list(density.per_level),
        "per_bin": [
            {
                "lo": b.lo,
                "hi": "inf" if math.isinf(b.hi) else b.hi,
                "point_correspondences": b.point_correspondences,
                "voxel_correspondences": b.voxel_correspondences,
                "ratio": b.ratio,
            }
            for b in density.per_bin
        ],
    }


def _write_outputs(out_dir: Path, result: PipelineResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dataio.write_heatmap_pgm(out_dir / "heatmap.pgm", result.heatmap)
    dataio.write_heatmap_raw(out_dir / "heatmap.dvfh", result.heatmap)
    dataio.write_overlay_csv(out_dir / "overlay.csv", result.stats)
    payload = {
        "mode": result.mode,
        "config": result.config.to_dict(),
        "correspondence": result.stats.to_dict(),
        "density": _density_dict(result.density),
    }
    dataio.write_stats_json(out_dir / "stats.json", payload)


def cmd_fuse(args) -> int:
    rc = _resolve_config(args)
    scene = _load_scene(args, rc.grid)
    result = _run_pipeline(scene, rc, args.mode, args.dets, args.sample_db)
    _write_outputs(Path(args.out), result)
    return 0


def cmd_synth(args) -> int:
    grid = _resolve_config(args).grid
    scene = dataio.synthetic_scene(args.seed, args.objects, grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_velodyne(out / "velodyne.bin", scene.points)
    dataio.write_calib(out / "calib.txt", scene.calib)
    records = [dataio.lidar_box_to_camera(b, scene.calib) for b in scene.gt_boxes]
    dataio.write_labels(out / "label.txt", records)
    return 0


def _read_frame_labels(path: Path, calib, with_scores: bool):
    dets, gts = [], []
    for rec in dataio.read_labels_file(path):
        if rec.cls == "DontCare":
            continue
        box = dataio.camera_box_to_lidar(rec, calib)
        if with_scores:
            dets.append(Detection(box=box, score=rec.score if rec.score is not None else 1.0, cls=rec.cls))
        else:
            gts.append((rec.cls, box))
    return dets if with_scores else gts


def cmd_eval(args) -> int:
    gt_dir, pred_dir, calib_dir = Path(args.gt), Path(args.pred), Path(args.calib)
    frames = sorted(p.stem for p in gt_dir.glob("*.txt"))
    if not frames:
        raise ParseError(f"no ground-truth label files in {gt_dir}")
    config = EvalConfig()
    per_class_frames: dict[str, list] = {}
    for stem in frames:
        calib_path = calib_dir / f"{stem}.txt"
        if not calib_path.exists():
            calib_path = calib_dir / "calib.txt"
        calib = parse_calib(calib_path.read_text())
        gts = _read_frame_labels(gt_dir / f"{stem}.txt", calib, with_scores=False)
        pred_path = pred_dir / f"{stem}.txt"
        dets = (
            _read_frame_labels(pred_path, calib, with_scores=True)
            if pred_path.exists()
            else []
        )
        classes = {cls for cls, _ in gts} | {d.cls for d in dets}
        for cls in classes:
            if cls not in config.iou_thresholds:
                continue
            per_class_frames.setdefault(cls, []).append(
                (
                    [d for d in dets if d.cls == cls],
                    [b for c, b in gts if c == cls],
                )
            )
    report = {}
    for cls, cls_frames in sorted(per_class_frames.items()):
        bins = range_binned_ap_multi(cls_frames, cls, config, iou_3d)
        report[cls] = {
            "ap_3d": ap_r40_multi(cls_frames, cls, config, iou_3d),
            "ap_bev": ap_r40_multi(cls_frames, cls, config, bev_iou),
            "per_bin": [
                {
                    "lo": b.lo,
                    "hi": "inf" if math.isinf(b.hi) else b.hi,
                    "ap_3d": b.ap,
                    "num_gt": b.num_gt,
                    "num_det": b.num_det,
                    "empty": b.empty,
                }
                for b in bins
            ],
            "counts": {
                "num_gt": sum(len(g) for _, g in cls_frames),
                "num_det": sum(len(d) for d, _ in cls_frames),
            },
        }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


_SWEEP_FIELDS = {"min_confidence": "conf_min", "p_drop": "p_drop", "point_drop": "point_drop"}


def cmd_sweep(args) -> int:
    values = []
    for tok in args.values.split(","):
        try:
            values.append(float(tok))
        except ValueError:
            raise _UsageError(f"--values expects numbers, got {tok!r}") from None
    for v in values:
        if not 0.0 <= v <= 1.0:
            raise InvalidConfigError(f"sweep value {v} outside [0, 1]")
    rc = _resolve_config(args)
    field_name = _SWEEP_FIELDS[args.sweep]
    scene = _load_scene(args, rc.grid)
    rows = []
    for v in values:
        overrides = {field_name: v}
        if field_name == "conf_min" and v > rc.conf_max:
            overrides["conf_max"] = 1.0
        cfg = replace(rc, **overrides)
        result = _run_pipeline(scene, cfg, args.mode, args.dets, args.sample_db)
        stats, density = result.stats, result.density
        rows.append(
            f"{v!r},{stats.total_in_image},{stats.total_foreground},"
            f"{stats.total_background},{density.point_correspondences},"
            f"{density.voxel_correspondences},"
            f"{density.ratio!r}"
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header = (
        "value,in_image,foreground,background,"
        "point_correspondences,voxel_correspondences,ratio"
    )
    (out / "sweep.csv").write_text("\n".join([header] + rows) + "\n")
    return 0


def _seed_type(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise _UsageError(f"seed must be a decimal or 0x-hex integer, got {text!r}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; CLI flags take precedence")
    p.add_argument("--grid-res", dest="grid_res", help="voxel edge lengths, e.g. 0.05,0.05,0.1")
    p.add_argument("--range-min", dest="range_min", help="grid lower bounds, e.g. 0,-40,-1")
    p.add_argument("--range-max", dest="range_max", help="grid upper bounds, e.g. 70,40,3")
    p.add_argument("--levels", type=int, help="hierarchy depth")
    p.add_argument("--dilation", type=int, help="occupancy dilation radius in voxels")
    p.add_argument("--conf-min", dest="conf_min", type=float, help="minimum simulated confidence")
    p.add_argument("--conf-max", dest="conf_max", type=float, help="maximum simulated confidence")
    p.add_argument("--k-samples", dest="k_samples", type=int, help="ground-truth samples to insert")
    p.add_argument("--p-drop", dest="p_drop", type=float, help="mask dropout probability")
    p.add_argument("--point-drop", dest="point_drop", type=float, help="point removal fraction")
    p.add_argument("--fg-threshold", dest="fg_threshold", type=float,
                   help="foreground confidence threshold for reports")


def _add_scene_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--synthetic", help="SEED,COUNT synthetic scene instead of files")
    p.add_argument("--velodyne", help="point cloud .bin file")
    p.add_argument("--calib", help="calibration .txt file")
    p.add_argument("--labels", help="ground-truth label .txt file (train mode)")
    p.add_argument("--dets", help="2D detections file for infer mode, or 'none'")
    p.add_argument("--sample-db", dest="sample_db", help="sample database directory")
    p.add_argument("--mode", choices=["train", "infer"], default="infer")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dvf", description="Dense voxel fusion pipeline tools")
    sub = parser.add_subparsers(dest="command", required=True)

    fuse = sub.add_parser("fuse", help="run the fusion data path on one scene")
    _add_scene_flags(fuse)
    _add_config_flags(fuse)
    fuse.add_argument("--seed", type=_seed_type, required=True)
    fuse.add_argument("--out", required=True, help="output directory")
    fuse.set_defaults(func=cmd_fuse)

    synth = sub.add_parser("synth", help="emit a synthetic scene as KITTI-format files")
    _add_config_flags(synth)
    synth.add_argument("--seed", type=_seed_type, required=True)
    synth.add_argument("--objects", type=int, default=3)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="average precision over label directories")
    ev.add_argument("--pred", required=True, help="prediction label directory")
    ev.add_argument("--gt", required=True, help="ground-truth label directory")
    ev.add_argument("--calib", required=True, help="calibration directory")
    ev.add_argument("--out", help="report JSON path (default: stdout)")
    ev.set_defaults(func=cmd_eval)

    sweep = sub.add_parser("sweep", help="rerun fuse across one parameter's values")
    _add_scene_flags(sweep)
    _add_config_flags(sweep)
    sweep.add_argument("--sweep", choices=sorted(_SWEEP_FIELDS), required=True)
    sweep.add_argument("--values", required=True, help="comma-separated values in [0, 1]")
    sweep.add_argument("--seed", type=_seed_type, required=True)
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (InvalidConfigError, InvalidRangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DvfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
