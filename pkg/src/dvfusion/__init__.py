"""Dense voxel fusion: camera-lidar geometry, foreground heatmaps,
confidence-weighted voxel features, and detection evaluation."""

from .augment import (
    GlobalTransform,
    SampleDB,
    SampleEntry,
    Scene,
    apply_transform,
    drop_points,
    dropout_masks,
    gt_sample,
    invert_points,
    transform_points,
)
from .boxes import Box2D, Box3D, bev_corners, contains_points, corners_3d
from .calib import (
    CameraCalib,
    PixelPoint,
    ProjectedPoints,
    backproject,
    parse_calib,
    project_box3d_to_aabb2d,
    project_points,
)
from .evaluation import (
    Detection,
    EvalConfig,
    ap_r40,
    ap_r40_multi,
    bev_iou,
    density_comparison,
    iou_3d,
    range_binned_ap,
    range_binned_ap_multi,
)
from .fusion import (
    CorrespondenceStats,
    FusedLevel,
    correspondence_report,
    fuse_hierarchy,
    fuse_level,
)
from .heatmap import (
    ConfidenceRange,
    ForegroundHeatmap,
    aggregate_masks,
    inference_mask,
    mask_from_box,
    sample,
    sample_many,
    training_mask,
)
from .rng import RandomStream
from .voxelgrid import (
    GridConfig,
    SparseVoxelLevel,
    VoxelHierarchy,
    build_hierarchy,
    downsample,
    kitti_grid,
    voxel_centers,
    voxelize,
)

__version__ = "0.1.0"
