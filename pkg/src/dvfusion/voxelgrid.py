"""Sparse voxelization and the multi-scale occupancy hierarchy.

Level 0 voxelizes the cloud at the configured resolution with handcrafted
per-voxel statistics as features. Each coarser level halves the grid (child
index -> floor(index / 2)) and spreads occupancy to Chebyshev neighbours,
modelling the footprint growth of a strided 3x3x3 convolution block.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridTooSmallError, InvalidConfigError

FEATURE_DIM = 5  # [normalized count, mean intensity, centroid offset x/y/z]


@dataclass(frozen=True)
class GridConfig:
    """Voxel grid extents, level-0 resolution and hierarchy parameters."""

    range_min: tuple[float, float, float]
    range_max: tuple[float, float, float]
    resolution: tuple[float, float, float]
    num_levels: int = 4
    dilation_radius: int = 1

    def __post_init__(self):
        lo = np.asarray(self.range_min, dtype=float)
        hi = np.asarray(self.range_max, dtype=float)
        res = np.asarray(self.resolution, dtype=float)
        if lo.shape != (3,) or hi.shape != (3,) or res.shape != (3,):
            raise InvalidConfigError("range_min/range_max/resolution must be 3-vectors")
        if not (hi > lo).all():
            raise InvalidConfigError("range_max must exceed range_min per axis")
        if not (res > 0).all():
            raise InvalidConfigError("resolution must be positive")
        if self.num_levels < 1:
            raise InvalidConfigError("num_levels must be >= 1")
        if self.dilation_radius < 0:
            raise InvalidConfigError("dilation_radius must be >= 0")
        if (self.dims < 2 ** (self.num_levels - 1)).any():
            raise InvalidConfigError(
                f"grid dims {tuple(self.dims)} too small for {self.num_levels} levels"
            )

    @property
    def dims(self) -> np.ndarray:
        """Level-0 grid dimensions: floor((max - min) / resolution) per axis."""
        lo = np.asarray(self.range_min, dtype=float)
        hi = np.asarray(self.range_max, dtype=float)
        res = np.asarray(self.resolution, dtype=float)
        # epsilon guards quotients that are integers up to float rounding
        return np.floor((hi - lo) / res + 1e-9).astype(np.int64)

    def level_dims(self, level: int) -> np.ndarray:
        """Grid dimensions at a level: ceil(level-0 dims / 2**level)."""
        return -(-self.dims // (1 << level))


def kitti_grid(num_levels: int = 4, dilation_radius: int = 1) -> GridConfig:
    """The KITTI point-cloud range and resolution (1400 x 1600 x 40 cells)."""
    return GridConfig(
        range_min=(0.0, -40.0, -1.0),
        range_max=(70.0, 40.0, 3.0),
        resolution=(0.05, 0.05, 0.1),
        num_levels=num_levels,
        dilation_radius=dilation_radius,
    )


@dataclass(frozen=True)
class SparseVoxelLevel:
    """Occupied voxels of one hierarchy level.

    indices: (N, 3) unique integer triples, lexicographically sorted.
    features: (N, C) per-voxel feature vectors, row-aligned with indices.
    dims: (3,) grid dimensions at this level.
    """

    level: int
    indices: np.ndarray
    features: np.ndarray
    dims: np.ndarray

    def __post_init__(self):
        for arr in (self.indices, self.features, self.dims):
            arr.flags.writeable = False

    @property
    def occupied_count(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class VoxelHierarchy:
    levels: tuple[SparseVoxelLevel, ...]
    config: GridConfig


def _encode(indices: np.ndarray, dims: np.ndarray) -> np.ndarray:
    """Row-major linear index; monotone with lexicographic (i, j, k) order."""
    return (indices[:, 0] * dims[1] + indices[:, 1]) * dims[2] + indices[:, 2]


def _decode(codes: np.ndarray, dims: np.ndarray) -> np.ndarray:
    i, rem = np.divmod(codes, dims[1] * dims[2])
    j, k = np.divmod(rem, dims[2])
    return np.column_stack([i, j, k])


def _empty_level(level: int, dims: np.ndarray, feature_dim: int) -> SparseVoxelLevel:
    return SparseVoxelLevel(
        level=level,
        indices=np.zeros((0, 3), dtype=np.int64),
        features=np.zeros((0, feature_dim)),
        dims=np.asarray(dims, dtype=np.int64),
    )


def voxelize(points: np.ndarray, config: GridConfig) -> SparseVoxelLevel:
    """Build the level-0 sparse voxel set from a point cloud (N, 4).

    Points outside the configured range (including the upper boundary) are
    discarded. Each occupied voxel gets a 5-dim feature: point count
    normalized by the fullest voxel in the scene, mean intensity, and the
    centroid offset from the voxel center in voxel units per axis.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 4)
    lo = np.asarray(config.range_min, dtype=float)
    res = np.asarray(config.resolution, dtype=float)
    dims = config.dims

    idx = np.floor((points[:, :3] - lo) / res).astype(np.int64)
    ok = ((idx >= 0) & (idx < dims)).all(axis=1)
    idx, pts = idx[ok], points[ok]
    if len(idx) == 0:
        return _empty_level(0, dims, FEATURE_DIM)

    codes = _encode(idx, dims)
    uniq, inverse = np.unique(codes, return_inverse=True)
    n = len(uniq)
    counts = np.bincount(inverse, minlength=n).astype(float)
    sums = np.zeros((n, 4))
    np.add.at(sums, inverse, pts)
    means = sums / counts[:, None]

    voxel_idx = _decode(uniq, dims)
    centers = lo + (voxel_idx + 0.5) * res
    features = np.empty((n, FEATURE_DIM))
    features[:, 0] = counts / counts.max()
    features[:, 1] = means[:, 3]
    features[:, 2:5] = (means[:, :3] - centers) / res
    return SparseVoxelLevel(level=0, indices=voxel_idx, features=features, dims=dims)


def _chebyshev_offsets(radius: int) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    return np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)


def _nearest_offsets(radius: int) -> list[np.ndarray]:
    """Nonzero offsets covering every possible nearest contributing parent of
    a dilation-created voxel, ordered by (squared distance, lexicographic)."""
    bound = 3 * radius * radius
    r = int(np.ceil(np.sqrt(bound)))
    grid = np.arange(-r, r + 1)
    offs = np.stack(np.meshgrid(grid, grid, grid, indexing="ij"), axis=-1).reshape(-1, 3)
    d2 = (offs**2).sum(axis=1)
    offs = offs[(d2 > 0) & (d2 <= bound)]
    order = sorted(range(len(offs)), key=lambda i: ((offs[i] ** 2).sum(), tuple(offs[i])))
    return [offs[i] for i in order]


def downsample(level: SparseVoxelLevel, dilation_radius: int) -> SparseVoxelLevel:
    """Halve the grid and dilate occupancy by a Chebyshev radius.

    Child indices map to floor(index / 2); each parent with children gets the
    componentwise mean of its children's features. Voxels created purely by
    dilation copy the feature of the nearest contributing parent (squared
    Euclidean index distance, ties broken by lexicographic parent order).
    """
    if (np.asarray(level.dims) < 2).any():
        raise GridTooSmallError(f"cannot downsample grid of dims {tuple(level.dims)}")
    pdims = (np.asarray(level.dims, dtype=np.int64) + 1) // 2
    feature_dim = level.features.shape[1]
    if level.occupied_count == 0:
        return _empty_level(level.level + 1, pdims, feature_dim)

    codes = _encode(level.indices // 2, pdims)
    contrib_codes, inverse = np.unique(codes, return_inverse=True)
    n = len(contrib_codes)
    counts = np.bincount(inverse, minlength=n).astype(float)
    sums = np.zeros((n, feature_dim))
    np.add.at(sums, inverse, level.features)
    contrib_features = sums / counts[:, None]

    if dilation_radius == 0:
        return SparseVoxelLevel(
            level=level.level + 1,
            indices=_decode(contrib_codes, pdims),
            features=contrib_features,
            dims=pdims,
        )

    contrib_idx = _decode(contrib_codes, pdims)
    shifted = (contrib_idx[None, :, :] + _chebyshev_offsets(dilation_radius)[:, None, :]).reshape(-1, 3)
    shifted = shifted[((shifted >= 0) & (shifted < pdims)).all(axis=1)]
    occupied_codes = np.unique(_encode(shifted, pdims))
    created_codes = np.setdiff1d(occupied_codes, contrib_codes, assume_unique=True)

    features = np.empty((len(occupied_codes), feature_dim))
    features[np.searchsorted(occupied_codes, contrib_codes)] = contrib_features

    if len(created_codes):
        created_idx = _decode(created_codes, pdims)
        created_features = np.empty((len(created_codes), feature_dim))
        unresolved = np.ones(len(created_codes), dtype=bool)
        for off in _nearest_offsets(dilation_radius):
            if not unresolved.any():
                break
            rows = np.flatnonzero(unresolved)
            cand = created_idx[rows] + off
            ok = ((cand >= 0) & (cand < pdims)).all(axis=1)
            rows, cand = rows[ok], cand[ok]
            cand_codes = _encode(cand, pdims)
            pos = np.searchsorted(contrib_codes, cand_codes)
            hit = (pos < n) & (contrib_codes[np.minimum(pos, n - 1)] == cand_codes)
            created_features[rows[hit]] = contrib_features[pos[hit]]
            unresolved[rows[hit]] = False
        features[np.searchsorted(occupied_codes, created_codes)] = created_features

    return SparseVoxelLevel(
        level=level.level + 1,
        indices=_decode(occupied_codes, pdims),
        features=features,
        dims=pdims,
    )


def build_hierarchy(points: np.ndarray, config: GridConfig) -> VoxelHierarchy:
    """Voxelize and repeatedly downsample into config.num_levels levels."""
    levels = [voxelize(points, config)]
    for _ in range(config.num_levels - 1):
        levels.append(downsample(levels[-1], config.dilation_radius))
    return VoxelHierarchy(levels=tuple(levels), config=config)


def voxel_centers(level: SparseVoxelLevel, config: GridConfig) -> np.ndarray:
    """(N, 3) centers of the occupied voxels in metric lidar coordinates."""
    lo = np.asarray(config.range_min, dtype=float)
    res = np.asarray(config.resolution, dtype=float) * (1 << level.level)
    return lo + (level.indices + 0.5) * res
