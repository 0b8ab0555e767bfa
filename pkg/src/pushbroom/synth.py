"""Deterministic synthetic stereo scenes with exact ground truth.

Renders rectified left/right pairs of textured fronto-parallel panels by
pinhole projection (right camera offset by the baseline along +X), with
painter's-algorithm occlusion.  Textures are seeded value noise sampled at
nearest texel, so a panel sitting exactly at the working depth produces a
right image that is the left image shifted by a whole number of pixels —
the identity several tests rely on.

Only translation is supported along a trajectory: rotating the camera would
slant the panels and break the integer-shift ground truth, which is the
whole point of this generator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .geometry import InvalidPoseError, Pose, StereoCalibration
from .imaging import BLOCK

DEFAULT_WIDTH = 376
DEFAULT_HEIGHT = 240


def default_calibration() -> StereoCalibration:
    """376x240 rig whose working disparity of 20 px sits exactly at 4.8 m."""
    return StereoCalibration(fx=320.0, fy=320.0, cx=188.0, cy=120.0, baseline=0.3)


@dataclass(frozen=True)
class Panel:
    """A textured fronto-parallel rectangle (a box's detectable front face).

    ``period_x`` > 0 makes the texture repeat horizontally every that many
    texels, reproducing the self-similar structures the invariance filter
    exists to reject.
    """

    center: tuple[float, float, float]
    width: float
    height: float
    texture_seed: int
    contrast: int = 90
    texel_size: float = 0.03
    period_x: int = 0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"panel extents must be positive, got {self.width}x{self.height}")
        if not (0 < self.contrast <= 127):
            raise ValueError(f"contrast must be in (0, 127], got {self.contrast}")
        if self.texel_size <= 0:
            raise ValueError(f"texel_size must be positive, got {self.texel_size}")


@dataclass(frozen=True)
class Scene:
    obstacles: tuple[Panel, ...]
    background: int = 128


@dataclass
class GroundTruth:
    """Exact per-pixel depth of the left view (inf = background) and the
    per-block true disparity, NaN where a block is not fully covered by a
    single surface."""

    depth: np.ndarray
    block_disparity: np.ndarray

    @property
    def surface_mask(self) -> np.ndarray:
        return np.isfinite(self.depth)


_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xC2B2AE3D27D4EB4F)
_F1 = np.uint64(0xFF51AFD7ED558CCD)
_F2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)


def texel_values(seed: int, tx: np.ndarray, ty: np.ndarray, contrast: int, period_x: int = 0) -> np.ndarray:
    """Seeded value noise on the integer texel grid, as uint8 around 128."""
    if period_x > 0:
        tx = np.mod(tx, period_x)
    seed_mix = np.uint64((seed * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF)
    h = tx.astype(np.uint64) * _M1 ^ ty.astype(np.uint64) * _M2 ^ seed_mix
    h ^= h >> _S33
    h *= _F1
    h ^= h >> _S33
    h *= _F2
    h ^= h >> _S33
    span = np.uint64(2 * contrast + 1)
    return (np.uint64(128 - contrast) + h % span).astype(np.uint8)


def _render_view(
    scene: Scene,
    cam: np.ndarray,
    calib: StereoCalibration,
    width: int,
    height: int,
    baseline_offset: float,
) -> tuple[np.ndarray, np.ndarray]:
    img = np.full((height, width), scene.background, dtype=np.uint8)
    depth = np.full((height, width), np.inf)
    cam_x = cam[0] + baseline_offset
    cam_y = cam[1]
    cam_z = cam[2]

    for panel in sorted(scene.obstacles, key=lambda p: -(p.center[2] - cam_z)):
        px, py, pz = panel.center
        z = pz - cam_z
        x0, x1 = px - panel.width / 2, px + panel.width / 2
        y0, y1 = py - panel.height / 2, py + panel.height / 2
        if z <= 1e-9:
            if z > -1e-9 and x0 <= cam_x <= x1 and y0 <= cam_y <= y1:
                raise InvalidPoseError(f"camera at {cam} lies inside an obstacle")
            continue

        ju = np.arange(width)
        xs = cam_x + (ju - calib.cx) * z / calib.fx
        jsel = np.nonzero((xs >= x0) & (xs <= x1))[0]
        iv = np.arange(height)
        ys = cam_y + (iv - calib.cy) * z / calib.fy
        isel = np.nonzero((ys >= y0) & (ys <= y1))[0]
        if jsel.size == 0 or isel.size == 0:
            continue

        tx = np.floor((xs[jsel] - x0) / panel.texel_size).astype(np.int64)
        ty = np.floor((ys[isel] - y0) / panel.texel_size).astype(np.int64)
        values = texel_values(
            panel.texture_seed, tx[None, :], ty[:, None], panel.contrast, panel.period_x
        )
        img[np.ix_(isel, jsel)] = values
        depth[np.ix_(isel, jsel)] = z
    return img, depth


def _slide_extrema(a: np.ndarray, fn) -> np.ndarray:
    h, w = a.shape
    r = a[:, : w - 4]
    for k in range(1, BLOCK):
        r = fn(r, a[:, k : w - 4 + k])
    s = r[: h - 4]
    for k in range(1, BLOCK):
        s = fn(s, r[k : h - 4 + k])
    return s


def _block_disparity(depth: np.ndarray, calib: StereoCalibration) -> np.ndarray:
    dmin = _slide_extrema(depth, np.minimum)
    dmax = _slide_extrema(depth, np.maximum)
    uniform = np.isfinite(dmax) & (dmin == dmax)
    out = np.full(dmin.shape, np.nan)
    out[uniform] = calib.fx * calib.baseline / dmin[uniform]
    return out


def render_pair(
    scene: Scene,
    pose: Pose,
    calib: StereoCalibration,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
) -> tuple[np.ndarray, np.ndarray, GroundTruth]:
    """Render the stereo pair seen from ``pose`` plus exact ground truth."""
    if abs(abs(pose.orientation[0]) - 1.0) > 1e-12:
        raise InvalidPoseError("renderer supports translation-only poses")
    left, depth_l = _render_view(scene, pose.position, calib, width, height, 0.0)
    right, _ = _render_view(scene, pose.position, calib, width, height, calib.baseline)
    gt = GroundTruth(depth=depth_l, block_disparity=_block_disparity(depth_l, calib))
    return left, right, gt


def distance_to_surfaces(scene: Scene, points) -> np.ndarray:
    """Euclidean distance from world points to the nearest obstacle surface."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if not scene.obstacles:
        return np.full(p.shape[0], np.inf)
    best = np.full(p.shape[0], np.inf)
    for panel in scene.obstacles:
        px, py, pz = panel.center
        dx = np.maximum(np.abs(p[:, 0] - px) - panel.width / 2, 0.0)
        dy = np.maximum(np.abs(p[:, 1] - py) - panel.height / 2, 0.0)
        dz = p[:, 2] - pz
        best = np.minimum(best, np.sqrt(dx * dx + dy * dy + dz * dz))
    return best


@dataclass
class FlightFrame:
    index: int
    left: np.ndarray
    right: np.ndarray
    ground_truth: GroundTruth
    pose: Pose
    logged_pose: Pose


def scripted_flight(
    scene: Scene,
    calib: StereoCalibration,
    velocity=(0.0, 0.0, 9.0),
    fps: float = 120.0,
    n_frames: int = 1,
    seed: int = 0,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    start=(0.0, 0.0, 0.0),
    pose_noise_std: float = 0.0,
) -> Iterator[FlightFrame]:
    """Constant-velocity trajectory through the scene, one render per frame.

    Poses are exact; ``pose_noise_std`` > 0 adds Gaussian noise to the
    *logged* poses only, emulating imperfect odometry over clean imagery.
    """
    if fps <= 0:
        raise ValueError(f"fps must be > 0, got {fps}")
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    velocity = np.asarray(velocity, dtype=float)
    start = np.asarray(start, dtype=float)
    rng = np.random.default_rng(seed)
    for i in range(n_frames):
        t = i / fps
        pose = Pose(t, start + velocity * t)
        logged = pose
        if pose_noise_std > 0:
            logged = Pose(t, pose.position + rng.normal(0.0, pose_noise_std, 3))
        left, right, gt = render_pair(scene, pose, calib, width, height)
        yield FlightFrame(i, left, right, gt, pose, logged)


# --- scene presets -----------------------------------------------------------


def single_plane_scene(
    depth: float = 4.8,
    size: tuple[float, float] = (2.0, 1.5),
    seed: int = 1,
    contrast: int = 90,
    texel_size: float = 0.03,
) -> Scene:
    """One textured panel dead ahead, for plane-detection tests."""
    return Scene(
        obstacles=(
            Panel(
                center=(0.0, 0.0, depth),
                width=size[0],
                height=size[1],
                texture_seed=seed,
                contrast=contrast,
                texel_size=texel_size,
            ),
        )
    )


def corridor_scene(
    length: float = 70.0,
    spacing: float = 1.2,
    lateral: float = 0.5,
    panel_size: tuple[float, float] = (1.0, 1.0),
    z_start: float = 4.8,
    seed: int = 5,
) -> Scene:
    """Staggered panels every ``spacing`` meters along the flight axis.

    Consecutive panels alternate between +/-``lateral``, keeping neighbor
    surfaces close enough that the sweep always has a remembered point near
    any obstacle about to enter the detector's horizon.
    """
    panels = []
    k = 0
    z = z_start
    while z <= z_start + length:
        side = lateral if k % 2 == 0 else -lateral
        panels.append(
            Panel(
                center=(side, 0.0, z),
                width=panel_size[0],
                height=panel_size[1],
                texture_seed=seed + k,
            )
        )
        k += 1
        z = z_start + k * spacing
    return Scene(obstacles=tuple(panels))


def goalpost_scene(
    post_depth: float = 5.6,
    crossbar_depth: float = 8.0,
    post_spacing: float = 2.4,
    seed: int = 11,
) -> Scene:
    """Two noise-textured posts plus a horizontally periodic crossbar.

    The crossbar's repeating texture matches at several disparities, so a
    single-disparity scan reports phantom points on it at the wrong depth;
    the horizontal-invariance filter exists to remove exactly those.
    """
    posts = [
        Panel(
            center=(side * post_spacing / 2, 0.0, post_depth),
            width=0.3,
            height=2.4,
            texture_seed=seed + i,
        )
        for i, side in enumerate((-1, 1))
    ]
    crossbar = Panel(
        center=(0.0, -1.35, crossbar_depth),
        width=post_spacing + 1.2,
        height=0.45,
        texture_seed=seed + 7,
        texel_size=0.024,
        period_x=4,
    )
    return Scene(obstacles=tuple(posts + [crossbar]))
