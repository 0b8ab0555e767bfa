"""False-positive / false-negative benchmark metrics.

Both metrics are nearest-neighbor distance histograms between two 3D point
sets: detector output (optionally sweep-accumulated) versus the exhaustive
block-matching reference.  Bin edges match the distances the benchmark
reports against: 0.5, 1.0, 2.0, 5.0 meters, plus a no-match bin for query
points compared against an empty reference set.

Nearest neighbors are exact: a 0.5 m grid hash with a brute-force fallback,
never approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import StereoCalibration

BIN_EDGES = (0.5, 1.0, 2.0, 5.0)
BIN_LABELS = ("0.0-0.5m", "0.5-1.0m", "1.0-2.0m", "2.0-5.0m", ">5.0m", "no_match")
N_BINS = len(BIN_LABELS)

_CELL = 0.5
# Shells scanned before handing the query to the batched brute-force pass;
# queries far from the reference cloud resolve faster as one matrix op.
_MAX_SHELLS = 4


@dataclass
class DistanceHistogram:
    """Counts of nearest-neighbor distances per bin (see BIN_LABELS)."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros(N_BINS, dtype=np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def fractions(self) -> np.ndarray:
        t = self.total
        if t == 0:
            return np.zeros(N_BINS)
        return self.counts / t

    def fraction_within(self, radius: float) -> float:
        """Fraction of query points within ``radius`` (must be a bin edge)."""
        if radius not in BIN_EDGES:
            raise ValueError(f"radius {radius} is not a bin edge {BIN_EDGES}")
        k = BIN_EDGES.index(radius) + 1
        t = self.total
        return float(self.counts[:k].sum() / t) if t else 0.0

    def merge(self, other: "DistanceHistogram") -> "DistanceHistogram":
        self.counts = self.counts + other.counts
        return self

    def to_dict(self) -> dict:
        return {
            "bins": list(BIN_LABELS),
            "counts": [int(c) for c in self.counts],
            "fractions": [float(f) for f in self.fractions],
        }

    @classmethod
    def from_distances(cls, distances: np.ndarray, no_match: int = 0) -> "DistanceHistogram":
        counts = np.zeros(N_BINS, dtype=np.int64)
        d = np.asarray(distances, dtype=float)
        counts[0] = np.count_nonzero(d <= 0.5)
        counts[1] = np.count_nonzero((d > 0.5) & (d <= 1.0))
        counts[2] = np.count_nonzero((d > 1.0) & (d <= 2.0))
        counts[3] = np.count_nonzero((d > 2.0) & (d <= 5.0))
        counts[4] = np.count_nonzero(d > 5.0)
        counts[5] = no_match
        return cls(counts)


def _as_points(points) -> np.ndarray:
    p = np.asarray(points, dtype=float)
    if p.size == 0:
        return np.zeros((0, 3))
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"expected (N, 3) points, got {p.shape}")
    return p


def _sq_dists(q: np.ndarray, pts: np.ndarray) -> np.ndarray:
    diff = pts - q
    return (diff * diff).sum(axis=1)


def brute_force_nn(query, reference) -> np.ndarray:
    """O(N*M) exact nearest-neighbor distances; the oracle for the hash."""
    query = _as_points(query)
    reference = _as_points(reference)
    if reference.shape[0] == 0:
        raise ValueError("empty reference set")
    out = np.empty(query.shape[0])
    for i, q in enumerate(query):
        out[i] = np.sqrt(_sq_dists(q, reference).min())
    return out


# packed cell keys: 20 bits per axis with a +2^19 bias (covers +-260 km)
_KEY_BIAS = 1 << 19


def _pack_cells(cells: np.ndarray) -> np.ndarray:
    return (
        ((cells[:, 0] + _KEY_BIAS) << 40)
        | ((cells[:, 1] + _KEY_BIAS) << 20)
        | (cells[:, 2] + _KEY_BIAS)
    )


_SHELL_CACHE: dict[int, np.ndarray] = {}


def _shell_offsets(r: int) -> np.ndarray:
    """Integer cell offsets at Chebyshev distance exactly r."""
    if r not in _SHELL_CACHE:
        rng = np.arange(-r, r + 1)
        grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
        cheb = np.abs(grid).max(axis=1)
        _SHELL_CACHE[r] = grid[cheb == r]
    return _SHELL_CACHE[r]


class _GridIndex:
    """Reference points bucketed into 0.5 m cells, keyed for searchsorted."""

    def __init__(self, points: np.ndarray):
        self.points = points
        keys = _pack_cells(np.floor(points / _CELL).astype(np.int64))
        self.order = np.argsort(keys, kind="stable")
        sorted_keys = keys[self.order]
        self.uniq, starts = np.unique(sorted_keys, return_index=True)
        self.starts = starts
        self.counts = np.diff(np.append(starts, keys.size))

    def candidates(self, cell_keys: np.ndarray) -> np.ndarray:
        """Indices of all reference points in the given cells."""
        pos = np.searchsorted(self.uniq, cell_keys)
        pos_c = np.minimum(pos, self.uniq.size - 1)
        hit = self.uniq[pos_c] == cell_keys
        starts = self.starts[pos_c[hit]]
        counts = self.counts[pos_c[hit]]
        total = int(counts.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64)
        bases = np.concatenate([[0], np.cumsum(counts[:-1])])
        flat = np.arange(total) - np.repeat(bases, counts) + np.repeat(starts, counts)
        return self.order[flat]


def _group_min_sq(qpts: np.ndarray, cand_pts: np.ndarray, chunk: int = 512) -> np.ndarray:
    # per-axis accumulation: same reduction order as _sq_dists, so results
    # stay bit-identical to the brute-force oracle
    out = np.empty(qpts.shape[0])
    cx, cy, cz = cand_pts[:, 0], cand_pts[:, 1], cand_pts[:, 2]
    for s in range(0, qpts.shape[0], chunk):
        block = qpts[s : s + chunk]
        acc = (cx[None, :] - block[:, 0, None]) ** 2
        acc += (cy[None, :] - block[:, 1, None]) ** 2
        acc += (cz[None, :] - block[:, 2, None]) ** 2
        out[s : s + chunk] = acc.min(axis=1)
    return out


def nearest_neighbor_distances(query, reference) -> np.ndarray:
    """Exact NN distance from each query point to the reference set.

    Queries sharing a grid cell are resolved together: shells of cells are
    expanded until every point in the group provably has its true nearest
    neighbor among the gathered candidates; anything still open after the
    shell budget is finished by (vectorized) brute force.  Per-pair
    arithmetic is identical to brute_force_nn, so results match it bitwise.
    """
    query = _as_points(query)
    reference = _as_points(reference)
    if reference.shape[0] == 0:
        raise ValueError("empty reference set")
    if reference.shape[0] <= 64 or query.shape[0] <= 2:
        return brute_force_nn(query, reference)

    grid = _GridIndex(reference)
    qcells = np.floor(query / _CELL).astype(np.int64)
    qkeys = _pack_cells(qcells)
    order = np.argsort(qkeys, kind="stable")
    sorted_keys = qkeys[order]
    group_starts = np.concatenate([[0], np.nonzero(np.diff(sorted_keys))[0] + 1, [qkeys.size]])

    out = np.empty(query.shape[0])
    for gi in range(group_starts.size - 1):
        rows = order[group_starts[gi] : group_starts[gi + 1]]
        qpts = query[rows]
        cell = qcells[rows[0]]
        best = np.full(rows.size, np.inf)
        done = False
        for r in range(_MAX_SHELLS + 1):
            cand = grid.candidates(_pack_cells(cell[None, :] + _shell_offsets(r)))
            if cand.size:
                best = np.minimum(best, _group_min_sq(qpts, grid.points[cand]))
            # anything in farther shells is at least r * _CELL away
            if (best <= (r * _CELL) ** 2).all():
                done = True
                break
        if not done:
            far = best > (_MAX_SHELLS * _CELL) ** 2
            if far.any():
                best[far] = np.minimum(best[far], _group_min_sq(qpts[far], reference))
        out[rows] = np.sqrt(best)
    return out


def _nn_histogram(query, reference) -> DistanceHistogram:
    query = _as_points(query)
    reference = _as_points(reference)
    if query.shape[0] == 0:
        return DistanceHistogram()
    if reference.shape[0] == 0:
        return DistanceHistogram.from_distances(np.zeros(0), no_match=query.shape[0])
    return DistanceHistogram.from_distances(nearest_neighbor_distances(query, reference))


def false_positive_metric(pushbroom_points, oracle_points) -> DistanceHistogram:
    """Distance from each detector point to the nearest reference point.

    Large distances flag detections the exhaustive matcher never saw; a
    frame with an empty reference sends every detector point to no_match.
    """
    return _nn_histogram(pushbroom_points, oracle_points)


def false_negative_metric(oracle_points, pushbroom_remembered_points) -> DistanceHistogram:
    """Distance from each reference point to the nearest remembered detector
    point.  Large distances flag obstacles the detector missed."""
    return _nn_histogram(oracle_points, pushbroom_remembered_points)


def random_baseline(
    n_points: int,
    calib: StereoCalibration,
    width: int,
    height: int,
    depth_range: tuple[float, float],
    seed,
) -> np.ndarray:
    """Uniformly random camera-frame points inside the viewing frustum.

    Emitted at the same per-frame frequency as the detector to anchor the
    benchmark: pixel coordinates uniform over the image, depth uniform over
    ``depth_range``.  Fixed seed gives bit-identical points.
    """
    z_near, z_far = depth_range
    if n_points < 0 or z_near <= 0 or z_far <= z_near:
        raise ValueError(f"bad baseline parameters n={n_points} range={depth_range}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, width, n_points)
    v = rng.uniform(0, height, n_points)
    z = rng.uniform(z_near, z_far, n_points)
    x = (u - calib.cx) * z / calib.fx
    y = (v - calib.cy) * z / calib.fy
    return np.column_stack([x, y, z])
