"""Pixel-level primitives: edge maps, block edge-energy sums, and block SAD.

Images are 2-D ``uint8`` numpy arrays indexed ``[row, col]`` (so a block
coordinate ``(x, y)`` addresses ``img[y:y+5, x:x+5]``).  Edge maps are
same-shape ``int16`` arrays of absolute second-derivative responses.

Everything here is integer-exact and pure, so results are bit-identical
across runs, band splits, and thread counts.
"""

from __future__ import annotations

import numpy as np

BLOCK = 5

# Aperture-3 second-derivative kernel. Applied identically to both images;
# responses are stored as absolute values so block sums cannot cancel.
LAPLACIAN_KERNEL = np.array([[2, 0, 2], [0, -8, 0], [2, 0, 2]], dtype=np.int16)

# |response| is at most 8*255; a 5x5 block sum of that is at most 51000.
MAX_EDGE_VALUE = 2040
MAX_BLOCK_SAD = BLOCK * BLOCK * 255


def validate_image(img: np.ndarray, name: str = "image") -> None:
    """Reject arrays that cannot enter block operations."""
    if not isinstance(img, np.ndarray) or img.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got {getattr(img, 'shape', type(img))}")
    if img.dtype != np.uint8:
        raise ValueError(f"{name} must be uint8, got {img.dtype}")
    h, w = img.shape
    if h < BLOCK or w < BLOCK:
        raise ValueError(f"{name} must be at least {BLOCK}x{BLOCK}, got {w}x{h}")


def laplacian(img: np.ndarray) -> np.ndarray:
    """Absolute second-derivative edge map of an 8-bit image.

    Interior pixels hold |K * img| for the aperture-3 kernel above; the
    1-pixel border is set to 0 rather than padded, so blocks hugging the
    frame edge tend to fail edge-abundance rejection downstream.
    """
    validate_image(img)
    a = img.astype(np.int16)
    core = 2 * (a[:-2, :-2] + a[:-2, 2:] + a[2:, :-2] + a[2:, 2:]) - 8 * a[1:-1, 1:-1]
    np.abs(core, out=core)
    out = np.zeros(img.shape, dtype=np.int16)
    out[1:-1, 1:-1] = core
    return out


def _check_block(shape: tuple[int, int], x: int, y: int, name: str) -> None:
    h, w = shape
    if not (0 <= x <= w - BLOCK and 0 <= y <= h - BLOCK):
        raise ValueError(f"{name} block at ({x}, {y}) out of bounds for {w}x{h}")


def block_edge_sum(edges: np.ndarray, x: int, y: int) -> int:
    """Sum of the 5x5 edge-map block whose top-left corner is (x, y)."""
    _check_block(edges.shape, x, y, "edge")
    return int(edges[y : y + BLOCK, x : x + BLOCK].sum(dtype=np.int64))


def block_sad(left: np.ndarray, right: np.ndarray, x: int, y: int, disparity: int) -> int:
    """Sum of absolute differences between the left block at (x, y) and the
    right block shifted left by ``disparity`` pixels.
    """
    if disparity < 0:
        raise ValueError(f"disparity must be >= 0, got {disparity}")
    _check_block(left.shape, x, y, "left")
    _check_block(right.shape, x - disparity, y, "right")
    lb = left[y : y + BLOCK, x : x + BLOCK].astype(np.int16)
    rb = right[y : y + BLOCK, x - disparity : x - disparity + BLOCK]
    return int(np.abs(lb - rb).sum(dtype=np.int64))


def box_sum(values: np.ndarray) -> np.ndarray:
    """5x5 block sums at every top-left position, as int32.

    The separable sliding sum uses pure integer adds, so the result for a
    row slice equals the same rows of the full-frame result exactly.
    """
    h, w = values.shape
    if h < BLOCK or w < BLOCK:
        raise ValueError(f"need at least {BLOCK}x{BLOCK}, got {w}x{h}")
    r = values[:, : w - 4].astype(np.int32)
    for k in range(1, BLOCK):
        r += values[:, k : w - 4 + k]
    s = r[: h - 4].copy()
    for k in range(1, BLOCK):
        s += r[k : h - 4 + k]
    return s


def sad_map(left: np.ndarray, right: np.ndarray, disparity: int) -> np.ndarray:
    """Block SAD at one disparity for every left block with x >= disparity.

    Returns an (h-4, w-4-disparity) int32 array; entry [i, j] is
    ``block_sad(left, right, disparity + j, i, disparity)``.
    """
    if disparity < 0:
        raise ValueError(f"disparity must be >= 0, got {disparity}")
    h, w = left.shape
    if left.shape != right.shape:
        raise ValueError(f"image sizes differ: {left.shape} vs {right.shape}")
    if w - disparity < BLOCK:
        raise ValueError(f"disparity {disparity} leaves no full block in width {w}")
    diff = np.abs(left[:, disparity:].astype(np.int16) - right[:, : w - disparity])
    return box_sum(diff)
