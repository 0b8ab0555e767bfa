"""Single-disparity block matcher.

Scans every 5x5 block of the left image, rejects edge-poor blocks, scores
the rest against the right image at one fixed disparity (SAD divided by the
combined edge energy of both blocks), drops horizontally self-similar
candidates, and backprojects the survivors to camera-frame 3D points.

The frame scan is decomposed into row bands merged in (y, x) order, so the
detection list is identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .geometry import StereoCalibration
from .imaging import BLOCK, box_sum, laplacian, validate_image


class DegenerateBlockError(ValueError):
    """Both blocks are edge-free; the match score is undefined."""


@dataclass(frozen=True)
class PushbroomConfig:
    """Tuning knobs of the single-disparity matcher.

    Thresholds are engineering defaults chosen to give sparse detections on
    the synthetic suite; override them per dataset.  ``invariance_offsets``
    keeps a guard band of at least 2 px around the working disparity so the
    self-similarity probe never re-tests the target match.
    """

    disparity: int
    edge_threshold: int = 100
    score_threshold: float = 0.5
    invariance_offsets: tuple[int, ...] = (-5, -4, -3, 3, 4, 5)
    invariance_score_threshold: float | None = None
    scan_stride: int = 1
    block_size: int = BLOCK

    def __post_init__(self):
        if self.block_size != BLOCK:
            raise ValueError(f"block_size is fixed at {BLOCK}, got {self.block_size}")
        if self.disparity < 1:
            raise ValueError(f"disparity must be >= 1, got {self.disparity}")
        if self.edge_threshold < 0:
            raise ValueError(f"edge_threshold must be >= 0, got {self.edge_threshold}")
        if self.score_threshold < 0:
            raise ValueError(f"score_threshold must be >= 0, got {self.score_threshold}")
        if self.scan_stride < 1:
            raise ValueError(f"scan_stride must be >= 1, got {self.scan_stride}")
        offsets = tuple(int(o) for o in self.invariance_offsets)
        for o in offsets:
            if abs(o) < 2:
                raise ValueError(f"invariance offset {o} inside the guard band (|offset| >= 2)")
        object.__setattr__(self, "invariance_offsets", offsets)
        if self.invariance_score_threshold is None:
            object.__setattr__(self, "invariance_score_threshold", self.score_threshold)
        elif self.invariance_score_threshold < 0:
            raise ValueError(
                f"invariance_score_threshold must be >= 0, got {self.invariance_score_threshold}"
            )


@dataclass(frozen=True)
class Detection:
    """A matched 5x5 block: top-left pixel coordinates in the left image,
    its score and left-block edge sum, and the backprojected camera-frame
    point of the block center (all detections share one depth)."""

    x: int
    y: int
    score: float
    edge_sum: int
    point_camera: tuple[float, float, float]


def score_block(
    left: np.ndarray,
    right: np.ndarray,
    edges_left: np.ndarray,
    edges_right: np.ndarray,
    x: int,
    y: int,
    disparity: int,
) -> float:
    """Match score of the left block at (x, y) against the right block at
    (x - disparity, y): SAD divided by the combined edge sums.  Lower is a
    better match; 0 means pixel-identical blocks."""
    from .imaging import block_edge_sum, block_sad

    sad = block_sad(left, right, x, y, disparity)
    denom = block_edge_sum(edges_left, x, y) + block_edge_sum(edges_right, x - disparity, y)
    if denom == 0:
        raise DegenerateBlockError(f"block at ({x}, {y}) has no edge energy on either side")
    return sad / denom


def horizontal_invariance_check(
    left: np.ndarray,
    right: np.ndarray,
    edges_left: np.ndarray,
    edges_right: np.ndarray,
    x: int,
    y: int,
    cfg: PushbroomConfig,
) -> bool:
    """True if the candidate block also matches the right image at some
    probe disparity, i.e. it is locally self-similar and must be rejected.

    Probe blocks that fall outside the right image are skipped, so a
    candidate with no in-bounds probes is kept (no evidence of ambiguity).
    """
    w = right.shape[1]
    lb = left[y : y + BLOCK, x : x + BLOCK].astype(np.int16)
    edge_left = int(edges_left[y : y + BLOCK, x : x + BLOCK].sum(dtype=np.int64))
    for off in cfg.invariance_offsets:
        rx = x - (cfg.disparity + off)
        if rx < 0 or rx > w - BLOCK:
            continue
        rb = right[y : y + BLOCK, rx : rx + BLOCK]
        denom = edge_left + int(edges_right[y : y + BLOCK, rx : rx + BLOCK].sum(dtype=np.int64))
        if denom == 0:
            continue
        sad = int(np.abs(lb - rb).sum(dtype=np.int64))
        if sad / denom <= cfg.invariance_score_threshold:
            return True
    return False


def _scan_band(
    left: np.ndarray,
    right: np.ndarray,
    edges_left: np.ndarray,
    edges_right: np.ndarray,
    cfg: PushbroomConfig,
    ys: np.ndarray,
    xs: np.ndarray,
):
    """Score one band of block rows; returns (y, x, score, edge_sum) arrays
    in (y, x) order.  Integer box sums over a row slice equal the same rows
    of the full-frame sums, so banding cannot change any result."""
    w = left.shape[1]
    d = cfg.disparity
    y0 = int(ys[0])
    y1 = int(ys[-1])
    band = slice(y0, y1 + BLOCK)
    lb, rb = left[band], right[band]
    el, er = edges_left[band], edges_right[band]

    edge_l = box_sum(el)
    edge_r = box_sum(er)
    sad = box_sum(np.abs(lb[:, d:].astype(np.int16) - rb[:, : w - d]))

    rows = ys - y0
    cols = xs
    edge_sums = edge_l[np.ix_(rows, cols)]
    denom = edge_sums + edge_r[np.ix_(rows, cols - d)]
    sad_g = sad[np.ix_(rows, cols - d)]
    ok = (edge_sums >= cfg.edge_threshold) & (denom > 0)
    score = np.where(ok, sad_g / np.maximum(denom, 1), np.inf)
    cand = ok & (score <= cfg.score_threshold)

    ri, ci = np.nonzero(cand)
    if ri.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0), empty
    yc = ys[ri]
    xc = xs[ci]
    scores = score[ri, ci]
    edges_c = edge_sums[ri, ci].astype(np.int64)

    # Self-similarity probes, evaluated only at the (sparse) candidates.
    lw = np.lib.stride_tricks.sliding_window_view(lb, (BLOCK, BLOCK))
    rw = np.lib.stride_tricks.sliding_window_view(rb, (BLOCK, BLOCK))
    yrel = yc - y0
    self_similar = np.zeros(yc.size, dtype=bool)
    for off in cfg.invariance_offsets:
        rx = xc - (d + off)
        valid = (rx >= 0) & (rx <= w - BLOCK) & ~self_similar
        if not valid.any():
            continue
        vi = np.nonzero(valid)[0]
        sad_off = (
            np.abs(
                lw[yrel[vi], xc[vi]].astype(np.int16) - rw[yrel[vi], rx[vi]]
            )
            .sum(axis=(1, 2), dtype=np.int64)
        )
        den_off = edges_c[vi] + edge_r[yrel[vi], rx[vi]]
        den_ok = den_off > 0
        hit = den_ok & (sad_off / np.maximum(den_off, 1) <= cfg.invariance_score_threshold)
        self_similar[vi[hit]] = True

    keep = ~self_similar
    return yc[keep], xc[keep], scores[keep], edges_c[keep]


_POOLS: dict[int, ThreadPoolExecutor] = {}


def _pool(workers: int) -> ThreadPoolExecutor:
    if workers not in _POOLS:
        _POOLS[workers] = ThreadPoolExecutor(max_workers=workers)
    return _POOLS[workers]


def process_frame(
    left: np.ndarray,
    right: np.ndarray,
    cfg: PushbroomConfig,
    calib: StereoCalibration,
    workers: int = 1,
) -> list[Detection]:
    """Detect all blocks matching at the working disparity in one frame.

    Returns detections ordered by (y, x) regardless of ``workers``; each
    carries the backprojected camera-frame point of its block center.
    """
    validate_image(left, "left")
    validate_image(right, "right")
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    h, w = left.shape
    d = cfg.disparity

    ys = np.arange(0, h - BLOCK + 1, cfg.scan_stride)
    xs = np.arange(0, w - BLOCK + 1, cfg.scan_stride)
    xs = xs[xs >= d]
    if xs.size == 0 or ys.size == 0:
        return []

    edges_left = laplacian(left)
    edges_right = laplacian(right)

    n_bands = max(1, min(int(workers), ys.size))
    if n_bands == 1:
        parts = [_scan_band(left, right, edges_left, edges_right, cfg, ys, xs)]
    else:
        bounds = np.linspace(0, ys.size, n_bands + 1).astype(int)
        chunks = [ys[bounds[i] : bounds[i + 1]] for i in range(n_bands)]
        chunks = [c for c in chunks if c.size]
        futures = [
            _pool(n_bands).submit(_scan_band, left, right, edges_left, edges_right, cfg, c, xs)
            for c in chunks
        ]
        parts = [f.result() for f in futures]

    z = calib.depth_for(d)
    half = BLOCK // 2
    detections: list[Detection] = []
    for yc, xc, scores, edge_sums in parts:
        px = (xc + half - calib.cx) * z / calib.fx
        py = (yc + half - calib.cy) * z / calib.fy
        for i in range(yc.size):
            detections.append(
                Detection(
                    x=int(xc[i]),
                    y=int(yc[i]),
                    score=float(scores[i]),
                    edge_sum=int(edge_sums[i]),
                    point_camera=(float(px[i]), float(py[i]), z),
                )
            )
    return detections
