"""Reference exhaustive block-matching stereo.

Offline ground-truth generator: per-block argmin of SAD over a disparity
range, with the same edge-abundance gate as the online matcher and a
uniqueness filter to suppress ambiguous matches.  Deterministic: ties break
toward the smaller disparity (the farther interpretation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import StereoCalibration
from .imaging import BLOCK, box_sum, laplacian, sad_map, validate_image

NO_MATCH = -1
_SENTINEL = np.iinfo(np.int32).max


@dataclass
class DisparityMap:
    """Per-block best disparities over the block grid of a stereo pair.

    ``values[i, j]`` is the winning disparity of the block with top-left
    pixel (j, i), or NO_MATCH; ``sad_at_best`` holds the winning SAD
    (meaningless where unmatched).
    """

    width: int
    height: int
    min_disparity: int
    max_disparity: int
    values: np.ndarray
    sad_at_best: np.ndarray

    def matched_mask(self) -> np.ndarray:
        return self.values != NO_MATCH


def full_block_match(
    left: np.ndarray,
    right: np.ndarray,
    min_d: int,
    max_d: int,
    edge_threshold: int = 100,
    uniqueness_ratio: float = 0.9,
) -> DisparityMap:
    """Best-disparity search over [min_d, max_d] for every 5x5 block.

    A block is matched when it passes the edge gate and its best SAD is
    smaller than ``uniqueness_ratio`` times the best SAD at any non-adjacent
    disparity (no runner-up within +/-1 px counts against uniqueness).
    """
    validate_image(left, "left")
    validate_image(right, "right")
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    h, w = left.shape
    if not (0 <= min_d <= max_d < w - BLOCK):
        raise ValueError(f"invalid disparity range [{min_d}, {max_d}] for width {w}")

    gh, gw = h - BLOCK + 1, w - BLOCK + 1
    n_d = max_d - min_d + 1
    cost = np.full((n_d, gh, gw), _SENTINEL, dtype=np.int32)
    for i, d in enumerate(range(min_d, max_d + 1)):
        cost[i, :, d:] = sad_map(left, right, d)

    best_idx = cost.argmin(axis=0)  # first minimum -> smallest disparity
    best_sad = np.take_along_axis(cost, best_idx[None], axis=0)[0]

    adjacent = np.abs(np.arange(n_d)[:, None, None] - best_idx[None]) <= 1
    runner = np.where(adjacent, _SENTINEL, cost).min(axis=0)

    edge_ok = box_sum(laplacian(left)) >= edge_threshold
    has_any = best_sad != _SENTINEL
    unique = (runner == _SENTINEL) | (best_sad < uniqueness_ratio * runner)
    matched = edge_ok & has_any & unique

    values = np.where(matched, best_idx + min_d, NO_MATCH).astype(np.int32)
    sad_at_best = np.where(matched, best_sad, NO_MATCH).astype(np.int32)
    return DisparityMap(
        width=w,
        height=h,
        min_disparity=min_d,
        max_disparity=max_d,
        values=values,
        sad_at_best=sad_at_best,
    )


def _backproject_blocks(dmap: DisparityMap, calib: StereoCalibration, mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return np.zeros((0, 3))
    d = dmap.values[ys, xs].astype(float)
    z = calib.fx * calib.baseline / d
    half = BLOCK // 2
    px = (xs + half - calib.cx) * z / calib.fx
    py = (ys + half - calib.cy) * z / calib.fy
    return np.column_stack([px, py, z])


def depth_crop(
    dmap: DisparityMap,
    calib: StereoCalibration,
    target_depth: float,
    tolerance: float,
) -> np.ndarray:
    """Camera-frame points of all matched blocks whose depth lies within
    ``tolerance`` meters of ``target_depth``.  Returns an (N, 3) array in
    (y, x) block order."""
    if tolerance <= 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance}")
    mask = dmap.matched_mask() & (dmap.values > 0)
    ys, xs = np.nonzero(mask)
    if ys.size:
        z = calib.fx * calib.baseline / dmap.values[ys, xs].astype(float)
        sel = np.abs(z - target_depth) <= tolerance
        keep = np.zeros_like(mask)
        keep[ys[sel], xs[sel]] = True
        mask = keep
    return _backproject_blocks(dmap, calib, mask)


def all_matched_points(dmap: DisparityMap, calib: StereoCalibration) -> np.ndarray:
    """Camera-frame points of every matched block (disparity > 0)."""
    return _backproject_blocks(dmap, calib, dmap.matched_mask() & (dmap.values > 0))
