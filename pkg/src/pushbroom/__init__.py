"""Single-disparity ("pushbroom") stereo obstacle detection.

Detect obstacles at one fixed depth per frame, recover the rest of the
depth range by sweeping past detections forward through vehicle odometry,
and benchmark the result against an exhaustive block-matching reference.
"""

from .detector import Detection, DegenerateBlockError, PushbroomConfig, process_frame
from .geometry import (
    InvalidPoseError,
    ObstacleCloud,
    Pose,
    StereoCalibration,
    ZeroDisparityError,
    integrate_constant_velocity,
    interpolate_pose,
    transform_to_camera,
    transform_to_world,
)
from .imaging import block_edge_sum, block_sad, laplacian
from .metrics import (
    DistanceHistogram,
    false_negative_metric,
    false_positive_metric,
    nearest_neighbor_distances,
    random_baseline,
)
from .oracle import DisparityMap, all_matched_points, depth_crop, full_block_match
from .synth import (
    GroundTruth,
    Panel,
    Scene,
    corridor_scene,
    default_calibration,
    goalpost_scene,
    render_pair,
    scripted_flight,
    single_plane_scene,
)

__all__ = [
    "Detection",
    "DegenerateBlockError",
    "PushbroomConfig",
    "process_frame",
    "InvalidPoseError",
    "ObstacleCloud",
    "Pose",
    "StereoCalibration",
    "ZeroDisparityError",
    "integrate_constant_velocity",
    "interpolate_pose",
    "transform_to_camera",
    "transform_to_world",
    "block_edge_sum",
    "block_sad",
    "laplacian",
    "DistanceHistogram",
    "false_negative_metric",
    "false_positive_metric",
    "nearest_neighbor_distances",
    "random_baseline",
    "DisparityMap",
    "all_matched_points",
    "depth_crop",
    "full_block_match",
    "GroundTruth",
    "Panel",
    "Scene",
    "corridor_scene",
    "default_calibration",
    "goalpost_scene",
    "render_pair",
    "scripted_flight",
    "single_plane_scene",
]

__version__ = "0.1.0"
