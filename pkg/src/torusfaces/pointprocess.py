"""Poisson sampling on the unit torus and fixed-radius neighbor search.

The grid index is a toroidal cell list: the unit cube is split into
``ncells`` equal cells per axis with ``cell_size >= query radius``, so any
closed-ball query is covered by the 3^d block around the center's cell.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .geometry import wrapped_delta

INDEX_RADIUS_GUARD = 0.125  # cell grids need at least 8 cells per axis


@dataclass(frozen=True)
class PointSet:
    """A sampled configuration on the unit d-torus."""

    d: int
    points: np.ndarray  # (N, d) float64 in [0, 1)
    intensity_n: float
    seed: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.d)
        if pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
            raise ValueError("points must lie in [0, 1)^d")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return len(self.points)


def replicate_rng(master_seed: int, cell: int = 0, replicate: int = 0) -> np.random.Generator:
    """Counter-based substream for one replicate of one sweep cell.

    Philox is keyed by the master seed with the (cell, replicate) pair in
    the high counter words, so streams never overlap and results do not
    depend on scheduling order.
    """
    bits = np.uint64(np.uint64(master_seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    return np.random.Generator(
        np.random.Philox(key=bits, counter=[0, 0, np.uint64(replicate), np.uint64(cell)])
    )


def sample_poisson(n: float, d: int, rng: np.random.Generator, seed: int = 0) -> PointSet:
    """Draw N ~ Poisson(n) i.i.d. uniform points on [0, 1)^d."""
    if n <= 0:
        raise ValueError("intensity must be positive")
    if d < 2:
        raise ValueError("dimension must be >= 2")
    count = int(rng.poisson(n))
    pts = rng.random((count, d))
    return PointSet(d=d, points=pts, intensity_n=float(n), seed=seed)


def save_points_csv(ps: PointSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(ps.d)])
        for row in ps.points:
            writer.writerow([repr(float(v)) for v in row])


def load_points_csv(path, intensity_n: float = 0.0, seed: int = 0) -> PointSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header)
        if header != [f"x{i + 1}" for i in range(d)]:
            raise ValueError(f"bad header {header!r}; expected x1,...,xd")
        rows = [[float(v) for v in row] for row in reader if row]
    pts = np.array(rows, dtype=float).reshape(-1, d)
    if pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
        raise ValueError("points outside [0, 1)")
    return PointSet(d=d, points=pts, intensity_n=intensity_n, seed=seed)


# ---------------------------------------------------------------------------
# Toroidal cell grid
# ---------------------------------------------------------------------------

@dataclass
class GridIndex:
    """Cell-list index over a PointSet supporting queries up to ``radius``."""

    radius: float
    ncells: int
    cell_size: float
    order: np.ndarray    # point ids sorted by flat cell id
    indptr: np.ndarray   # CSR offsets into ``order`` per flat cell
    cells: np.ndarray    # (N, d) integer cell coordinates per point
    d: int

    def supports(self, radius: float) -> bool:
        # ring-1 gathers cover any query ball up to one cell size
        return radius <= self.cell_size + 1e-15

    def cell_of(self, x: np.ndarray) -> np.ndarray:
        c = np.floor(np.asarray(x) * self.ncells).astype(np.int64)
        return np.clip(c, 0, self.ncells - 1)

    def flatten(self, cells: np.ndarray) -> np.ndarray:
        flat = cells[..., 0]
        for axis in range(1, self.d):
            flat = flat * self.ncells + cells[..., axis]
        return flat


def build_index(ps: PointSet, radius: float) -> GridIndex:
    """Bucket points into a toroidal grid with cell_size >= radius."""
    if not (0.0 < radius < INDEX_RADIUS_GUARD):
        raise ValueError(f"index radius must be in (0, {INDEX_RADIUS_GUARD})")
    # Larger cells than the radius remain correct (ring-1 still covers the
    # query ball); cap the cell count so tiny radii cannot blow up memory.
    per_axis_cap = max(8, int((1 << 26) ** (1.0 / ps.d)))
    ncells = min(int(1.0 / radius), per_axis_cap)
    cell_size = 1.0 / ncells
    d = ps.d
    cells = np.clip(np.floor(ps.points * ncells).astype(np.int64), 0, ncells - 1)
    flat = cells[:, 0].copy()
    for axis in range(1, d):
        flat = flat * ncells + cells[:, axis]
    order = np.argsort(flat, kind="stable")
    counts = np.bincount(flat, minlength=ncells**d)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return GridIndex(
        radius=radius, ncells=ncells, cell_size=cell_size,
        order=order, indptr=indptr, cells=cells, d=d,
    )


def _block_ids(idx: GridIndex, center_cell: np.ndarray) -> np.ndarray:
    """Point ids in the 3^d neighborhood of one cell (toroidal wrap)."""
    offs = np.array(list(product((-1, 0, 1), repeat=idx.d)), dtype=np.int64)
    neigh = np.mod(center_cell[None, :] + offs, idx.ncells)
    flats = idx.flatten(neigh)
    pieces = [idx.order[idx.indptr[f]:idx.indptr[f + 1]] for f in np.unique(flats)]
    return np.concatenate(pieces) if pieces else np.empty(0, dtype=np.int64)


def range_query(idx: GridIndex, ps: PointSet, center: np.ndarray, radius: float) -> np.ndarray:
    """Ids of all points with torus_dist(center, point) <= radius, ascending."""
    if not idx.supports(radius):
        raise ValueError(f"query radius {radius} exceeds index support {idx.radius}")
    center = np.asarray(center, dtype=float)
    cand = _block_ids(idx, idx.cell_of(center))
    if len(cand) == 0:
        return cand
    delta = wrapped_delta(center, ps.points[cand])
    hit = np.einsum("ij,ij->i", delta, delta) <= radius * radius
    return np.sort(cand[hit])


def batch_range_counts(idx: GridIndex, ps: PointSet, centers: np.ndarray,
                       radii: np.ndarray, exclude: np.ndarray | None = None) -> np.ndarray:
    """Number of points within ``radii[i]`` of ``centers[i]``, vectorized.

    ``exclude`` (optional, shape (M, e)) lists point ids not to count for
    each center.  Used by the isolated-at-birth tests where the face's own
    vertices sit on the region boundary.
    """
    if len(centers) == 0:
        return np.zeros(0, dtype=np.int64)
    if not idx.supports(float(np.max(radii))):
        raise ValueError("query radius exceeds index support")
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    cells = idx.cell_of(centers)
    offs = np.array(list(product((-1, 0, 1), repeat=idx.d)), dtype=np.int64)
    counts = np.zeros(len(centers), dtype=np.int64)
    for off in offs:
        flats = idx.flatten(np.mod(cells + off[None, :], idx.ncells))
        starts = idx.indptr[flats]
        stops = idx.indptr[flats + 1]
        sizes = stops - starts
        total = int(np.sum(sizes))
        if total == 0:
            continue
        owner = np.repeat(np.arange(len(centers)), sizes)
        cand = idx.order[_ragged_arange(starts, stops)]
        delta = wrapped_delta(centers[owner], ps.points[cand])
        hit = np.einsum("ij,ij->i", delta, delta) <= (radii[owner] ** 2)
        if exclude is not None:
            for col in range(exclude.shape[1]):
                hit &= cand != exclude[owner, col]
        np.add.at(counts, owner[hit], 1)
    return counts


def _ragged_arange(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenated arange(starts[i], stops[i]) without a Python loop."""
    sizes = stops - starts
    total = int(np.sum(sizes))
    if total == 0:
        return np.empty(0, dtype=np.int64)
    seg = np.repeat(np.arange(len(sizes)), sizes)
    prev = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    within = np.arange(total, dtype=np.int64) - prev[seg]
    return starts[seg] + within


def neighbor_pairs(ps: PointSet, idx: GridIndex, radius: float
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All unordered pairs (i < j) with torus_dist <= radius, lexsorted.

    Returns (i, j, dist).  For the zero offset, pairs inside one cell are
    kept with i < j; for one of each (+off, -off) pair of cell offsets all
    source/target combinations are kept, so every pair appears exactly once.
    """
    if not idx.supports(radius):
        raise ValueError(f"pair radius {radius} exceeds index support {idx.radius}")
    n = len(ps)
    if n < 2:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), np.empty(0, dtype=float)
    pts = ps.points
    order = idx.order
    indptr = idx.indptr
    ncells = idx.ncells
    d = idx.d
    r2 = radius * radius

    cells = idx.cells  # (n, d) integer cell coordinates in original id order
    half_offs = [off for off in product((-1, 0, 1), repeat=d)
                 if not any(o != 0 for o in off)
                 or next(o for o in off if o != 0) > 0]

    ii: list[np.ndarray] = []
    jj: list[np.ndarray] = []
    dd: list[np.ndarray] = []
    for off in half_offs:
        zero = not any(off)
        tgt = np.mod(cells + np.asarray(off, dtype=np.int64)[None, :], ncells)
        flat = idx.flatten(tgt)
        starts = indptr[flat]
        stops = indptr[flat + 1]
        sizes = stops - starts
        total = int(np.sum(sizes))
        if total == 0:
            continue
        a = np.repeat(np.arange(n, dtype=np.int64), sizes)
        b = order[_ragged_arange(starts, stops)]
        if zero:
            keep = a < b
        else:
            keep = np.ones(total, dtype=bool)
        a, b = a[keep], b[keep]
        delta = wrapped_delta(pts[a], pts[b])
        dist2 = np.einsum("ij,ij->i", delta, delta)
        close = dist2 <= r2
        a, b, dv = a[close], b[close], np.sqrt(dist2[close])
        ii.append(np.minimum(a, b))
        jj.append(np.maximum(a, b))
        dd.append(dv)

    if not ii:
        e = np.empty(0, dtype=np.int64)
        return e, e.copy(), np.empty(0, dtype=float)
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    dist = np.concatenate(dd)
    key = np.lexsort((j, i))
    return i[key], j[key], dist[key]
