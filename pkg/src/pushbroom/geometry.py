"""Stereo calibration, pinhole projection, rigid poses, and the obstacle
memory that sweeps fixed-depth detections into a local 3D map.

Conventions (fixed for file interchange): right-handed camera frame with
+Z forward, +X right, +Y down; the world frame is the first camera pose.
Quaternions are (w, x, y, z), world-from-camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


class ZeroDisparityError(ValueError):
    """No depth can be recovered at disparity <= 0."""


class InvalidPoseError(ValueError):
    """Pose orientation is not a unit quaternion."""


@dataclass(frozen=True)
class StereoCalibration:
    """Pinhole intrinsics of the rectified pair plus the stereo baseline.

    fx, fy, cx, cy are in pixels; baseline is the distance between the two
    rectified camera centers in meters.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    baseline: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.baseline <= 0:
            raise ValueError(f"baseline must be positive, got {self.baseline}")

    def depth_for(self, disparity: float) -> float:
        """Depth in meters of a match at the given disparity (pixels)."""
        if disparity <= 0:
            raise ZeroDisparityError(f"no depth at disparity {disparity}")
        return self.fx * self.baseline / disparity

    def backproject(self, x: float, y: float, disparity: float) -> np.ndarray:
        """Camera-frame 3D point of pixel (x, y) matched at ``disparity``."""
        z = self.depth_for(disparity)
        return np.array([(x - self.cx) * z / self.fx, (y - self.cy) * z / self.fy, z])

    def reproject(self, p) -> tuple[float, float] | None:
        """Pixel coordinates of a camera-frame point, or None if it lies at
        or behind the camera plane (not drawable)."""
        p = np.asarray(p, dtype=float)
        if p[2] <= 0:
            return None
        return (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0:
        raise InvalidPoseError("zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotvec(rotvec) -> np.ndarray:
    """Unit quaternion for a rotation of |rotvec| radians about rotvec."""
    rotvec = np.asarray(rotvec, dtype=float)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-300:
        return IDENTITY_QUAT.copy()
    axis = rotvec / angle
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def quat_slerp(a, b, alpha: float) -> np.ndarray:
    """Spherical interpolation from a (alpha=0) to b (alpha=1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.dot(a, b))
    if dot < 0:
        b = -b
        dot = -dot
    if dot > 1 - 1e-12:
        return quat_normalize(a + alpha * (b - a))
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    return quat_normalize((np.sin((1 - alpha) * theta) / s) * a + (np.sin(alpha * theta) / s) * b)


@dataclass(frozen=True)
class Pose:
    """Timestamped world-frame rigid transform of the left camera."""

    t: float
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float))
        if self.position.shape != (3,):
            raise InvalidPoseError(f"position must be a 3-vector, got {self.position.shape}")
        if self.orientation.shape != (4,):
            raise InvalidPoseError(f"orientation must be a quaternion, got {self.orientation.shape}")
        if abs(np.linalg.norm(self.orientation) - 1.0) > QUAT_NORM_TOL:
            raise InvalidPoseError(
                f"quaternion norm {np.linalg.norm(self.orientation)!r} not within {QUAT_NORM_TOL} of 1"
            )

    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def forward(self) -> np.ndarray:
        """Camera optical axis (+Z) expressed in the world frame."""
        return self.rotation()[:, 2]


def transform_to_world(pose: Pose, p_camera) -> np.ndarray:
    """Rigid transform of camera-frame point(s), shape (3,) or (N, 3)."""
    p = np.asarray(p_camera, dtype=float)
    return p @ pose.rotation().T + pose.position


def transform_to_camera(pose: Pose, p_world) -> np.ndarray:
    """Inverse of transform_to_world."""
    p = np.asarray(p_world, dtype=float)
    return (p - pose.position) @ pose.rotation()


def integrate_constant_velocity(prev: Pose, velocity, angular_velocity, dt: float) -> Pose:
    """Advance a pose by dt seconds of constant world-frame velocity and
    constant body-frame angular velocity."""
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    velocity = np.asarray(velocity, dtype=float)
    angular_velocity = np.asarray(angular_velocity, dtype=float)
    position = prev.position + velocity * dt
    dq = quat_from_rotvec(angular_velocity * dt)
    orientation = quat_normalize(quat_mul(prev.orientation, dq))
    return Pose(prev.t + dt, position, orientation)


def interpolate_pose(poses: list[Pose], t: float) -> Pose:
    """Pose at time t from a time-sorted log: linear position, slerp
    orientation between the bracketing entries, clamped at the ends."""
    if not poses:
        raise ValueError("empty pose log")
    if t <= poses[0].t:
        return poses[0]
    if t >= poses[-1].t:
        return poses[-1]
    times = [p.t for p in poses]
    hi = int(np.searchsorted(times, t, side="right"))
    lo = hi - 1
    a, b = poses[lo], poses[hi]
    if b.t == a.t:
        return a
    alpha = (t - a.t) / (b.t - a.t)
    position = a.position + alpha * (b.position - a.position)
    orientation = quat_slerp(a.orientation, b.orientation, alpha)
    return Pose(t, position, orientation)


class ObstacleCloud:
    """World-frame accumulation of past detections (the sweep memory).

    Points are appended with their birth timestamp and source frame index
    and never moved afterwards; pruning is the only removal path.
    Single-writer: update from the pipeline thread only.
    """

    def __init__(self):
        self.points = np.zeros((0, 3))
        self.birth_t = np.zeros(0)
        self.frame = np.zeros(0, dtype=np.int64)

    def __len__(self) -> int:
        return self.points.shape[0]

    def as_array(self) -> np.ndarray:
        return self.points.copy()

    def sweep_update(
        self,
        detections,
        pose: Pose,
        frame_index: int,
        retention: float = 3.0,
        behind_margin: float = 0.5,
    ) -> "ObstacleCloud":
        """Fold the current frame's detections into the cloud.

        Each detection's camera-frame point is transformed through ``pose``
        and appended.  Points older than ``retention`` seconds, or more than
        ``behind_margin`` meters behind the current camera plane, are pruned.
        """
        if detections:
            pc = np.array([d.point_camera for d in detections], dtype=float)
            pw = transform_to_world(pose, pc)
            self.points = np.concatenate([self.points, pw])
            self.birth_t = np.concatenate([self.birth_t, np.full(len(detections), pose.t)])
            self.frame = np.concatenate(
                [self.frame, np.full(len(detections), frame_index, dtype=np.int64)]
            )
        if len(self):
            fresh = pose.t - self.birth_t <= retention
            ahead = (self.points - pose.position) @ pose.forward() >= -behind_margin
            keep = fresh & ahead
            if not keep.all():
                self.points = self.points[keep]
                self.birth_t = self.birth_t[keep]
                self.frame = self.frame[keep]
        return self
