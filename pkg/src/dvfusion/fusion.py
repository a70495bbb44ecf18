"""Confidence-weighted voxel feature fusion.

Every occupied voxel's center is projected into the image to sample the
foreground heatmap; the voxel feature is scaled by the sampled confidence and
added back onto itself (a parameter-free weighting with a skip connection),
so a zero heatmap passes features through untouched. All hierarchy levels are
fused independently against the same heatmap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import GlobalTransform, invert_points
from .calib import CameraCalib, ProjectedPoints, project_points
from .heatmap import ForegroundHeatmap, sample_many
from .voxelgrid import GridConfig, SparseVoxelLevel, VoxelHierarchy, voxel_centers


@dataclass(frozen=True, eq=False)
class FusedLevel:
    """Fusion output for one hierarchy level, row-aligned with its voxels.

    centers holds the 3D points actually projected (after reversing any
    global augmentation), for range binning and overlays.
    """

    level: int
    features: np.ndarray  # (N, C), confidence-weighted
    rhos: np.ndarray  # (N,) sampled confidences in [0, 1]
    pixel_locs: ProjectedPoints
    centers: np.ndarray  # (N, 3)


def fuse_level(
    level: SparseVoxelLevel,
    config: GridConfig,
    calib: CameraCalib,
    hm: ForegroundHeatmap,
    inverse_transform: GlobalTransform | None = None,
) -> FusedLevel:
    """Weight one level's features by sampled foreground confidence.

    Voxel centers are reversed through the recorded augmentation (if any)
    before projecting. Centers behind the camera or outside the image sample
    0, leaving the pure skip path; otherwise out = rho * feature + feature.
    """
    centers = voxel_centers(level, config)
    if inverse_transform is not None:
        centers = invert_points(inverse_transform, centers)
    pp = project_points(calib, centers) if len(centers) else ProjectedPoints(
        np.zeros(0), np.zeros(0), np.zeros(0)
    )
    if len(centers):
        rhos = sample_many(hm, pp.u, pp.v)
        rhos = np.where(pp.in_front, rhos, 0.0)
    else:
        rhos = np.zeros(0)
    fused = rhos[:, None] * level.features + level.features
    return FusedLevel(
        level=level.level,
        features=fused,
        rhos=rhos,
        pixel_locs=pp,
        centers=centers,
    )


def fuse_hierarchy(
    hierarchy: VoxelHierarchy,
    calib: CameraCalib,
    hm: ForegroundHeatmap,
    inverse_transform: GlobalTransform | None = None,
) -> list[FusedLevel]:
    """Fuse every hierarchy level independently against the same heatmap."""
    return [
        fuse_level(level, hierarchy.config, calib, hm, inverse_transform)
        for level in hierarchy.levels
    ]


@dataclass(frozen=True)
class LevelStats:
    level: int
    in_image: int
    foreground: int
    background: int


@dataclass(frozen=True, eq=False)
class CorrespondenceStats:
    """Per-level counts of image correspondences split at a confidence
    threshold, plus flat (level, u, v, rho) records for overlay export."""

    threshold: float
    levels: tuple[LevelStats, ...]
    records: np.ndarray  # (M, 4) columns: level, u, v, rho

    @property
    def total_in_image(self) -> int:
        return sum(s.in_image for s in self.levels)

    @property
    def total_foreground(self) -> int:
        return sum(s.foreground for s in self.levels)

    @property
    def total_background(self) -> int:
        return sum(s.background for s in self.levels)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "levels": [
                {
                    "level": s.level,
                    "in_image": s.in_image,
                    "foreground": s.foreground,
                    "background": s.background,
                }
                for s in self.levels
            ],
            "total_in_image": self.total_in_image,
            "total_foreground": self.total_foreground,
            "total_background": self.total_background,
        }


def correspondence_report(
    fused: list[FusedLevel],
    foreground_threshold: float,
    image_width: int,
    image_height: int,
) -> CorrespondenceStats:
    """Count in-image correspondences per level and split them into
    foreground (rho > threshold) and background (rho <= threshold)."""
    if not 0.0 <= foreground_threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {foreground_threshold}")
    stats = []
    rows = []
    for lvl in fused:
        locs = lvl.pixel_locs
        in_img = (
            locs.in_front
            & (locs.u >= 0.0)
            & (locs.u <= image_width - 1.0)
            & (locs.v >= 0.0)
            & (locs.v <= image_height - 1.0)
        )
        fg = in_img & (lvl.rhos > foreground_threshold)
        n_in, n_fg = int(in_img.sum()), int(fg.sum())
        stats.append(LevelStats(lvl.level, n_in, n_fg, n_in - n_fg))
        if n_in:
            rows.append(
                np.column_stack(
                    [
                        np.full(n_in, lvl.level, dtype=float),
                        locs.u[in_img],
                        locs.v[in_img],
                        lvl.rhos[in_img],
                    ]
                )
            )
    records = np.vstack(rows) if rows else np.zeros((0, 4))
    return CorrespondenceStats(
        threshold=foreground_threshold, levels=tuple(stats), records=records
    )
