"""k-simplex enumeration for Rips and Cech complexes at a fixed radius.

A (k+1)-tuple is a Rips k-face when all pairwise toroidal distances are at
most 2r, and a Cech k-face when additionally the smallest enclosing ball of
its chart lift has radius at most r.  Faces are enumerated as (k+1)-cliques
of the 2r-geometric graph by ordered vertex extension, with Cech pruning at
every level (subsets of Cech faces are Cech faces).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import (
    CECH,
    ChartGuardError,
    miniball_radius,
    nearest_image,
    normalize_flavor,
    torus_dist,
)
from .pointprocess import GridIndex, PointSet, neighbor_pairs

# Enumeration and isolation tests assume faces plus their attachment
# regions fit a single chart: r < 1/16 keeps every lift below 1/4.
FACE_RADIUS_GUARD = 1.0 / 16.0

Simplex = tuple[int, ...]


@dataclass(frozen=True)
class ComplexSlice:
    """All k-faces of one complex at one radius."""

    flavor: str
    k: int
    r: float
    simplices: np.ndarray  # (m, k+1) int64, rows lexicographically sorted
    source: PointSet

    def __len__(self) -> int:
        return len(self.simplices)

    def as_tuples(self) -> list[Simplex]:
        return [tuple(int(v) for v in row) for row in self.simplices]


def check_face_radius(r: float) -> None:
    if not (0.0 < r < FACE_RADIUS_GUARD):
        raise ChartGuardError(
            f"face radius {r} outside (0, {FACE_RADIUS_GUARD}); tuple may not fit one chart"
        )


def lift_tuple(ps: PointSet, ids) -> np.ndarray:
    """Chart lift of a vertex tuple around its first vertex."""
    ids = np.asarray(ids, dtype=np.int64)
    base = ps.points[ids[0]]
    return nearest_image(base, ps.points[ids])


def is_simplex(ps: PointSet, ids, r: float, flavor: str) -> bool:
    """Whether the tuple is a k-face at radius r (closed-ball conventions)."""
    flavor = normalize_flavor(flavor)
    check_face_radius(r)
    ids = np.asarray(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("vertex ids must be distinct")
    pts = ps.points[ids]
    dists = torus_dist(pts[:, None, :], pts[None, :, :])
    if np.any(dists > 2.0 * r):
        return False
    if flavor == CECH and len(ids) > 2:
        return miniball_radius(lift_tuple(ps, ids)) <= r
    return True


def simplex_birth_radius(ps: PointSet, ids, flavor: str) -> float:
    """Infimum radius at which the tuple becomes a face.

    Half the maximal pairwise distance for Rips; the smallest enclosing
    ball radius of the chart lift for Cech.
    """
    flavor = normalize_flavor(flavor)
    ids = np.asarray(ids, dtype=np.int64)
    if len(np.unique(ids)) != len(ids):
        raise ValueError("vertex ids must be distinct")
    if len(ids) == 1:
        return 0.0
    lifted = lift_tuple(ps, ids)  # raises ChartGuardError when too spread
    diff = lifted[:, None, :] - lifted[None, :, :]
    half_max = 0.5 * float(np.max(np.sqrt(np.sum(diff**2, axis=-1))))
    if flavor == CECH and len(ids) > 2:
        return float(miniball_radius(lifted))
    return half_max


def enumerate_k_simplices(ps: PointSet, idx: GridIndex, r: float, k: int,
                          flavor: str) -> ComplexSlice:
    """All k-faces at radius r, lexicographically sorted and duplicate-free."""
    flavor = normalize_flavor(flavor)
    check_face_radius(r)
    if k < 0:
        raise ValueError("k must be >= 0")
    if not idx.supports(2.0 * r):
        raise ValueError("index does not support radius 2r")

    n = len(ps)
    if k == 0:
        sims = np.arange(n, dtype=np.int64)[:, None]
        return ComplexSlice(flavor=flavor, k=0, r=r, simplices=sims, source=ps)

    i, j, _ = neighbor_pairs(ps, idx, 2.0 * r)
    if k == 1:
        sims = np.stack([i, j], axis=1) if len(i) else np.empty((0, 2), dtype=np.int64)
        return ComplexSlice(flavor=flavor, k=1, r=r, simplices=sims, source=ps)

    # forward adjacency: neighbors with larger id, per vertex, sorted
    fwd: dict[int, np.ndarray] = {}
    if len(i):
        boundaries = np.searchsorted(i, np.arange(n + 1))
        for v in range(n):
            lo, hi = boundaries[v], boundaries[v + 1]
            if hi > lo:
                fwd[v] = j[lo:hi]

    cech = flavor == CECH
    tuples: list[tuple[int, ...]] = []

    def extend(tup: list[int], cands: np.ndarray) -> None:
        level = len(tup)
        for w in cands:
            new = tup + [int(w)]
            if cech and level >= 2:
                if miniball_radius(lift_tuple(ps, new)) > r:
                    continue
            if level == k:
                tuples.append(tuple(new))
            else:
                nxt = np.intersect1d(cands, fwd.get(int(w), _EMPTY), assume_unique=True)
                nxt = nxt[nxt > w]
                if len(nxt) >= k - level:
                    extend(new, nxt)

    for a, b in zip(i, j):
        cands = fwd.get(int(b), _EMPTY)
        common = np.intersect1d(fwd[int(a)], cands, assume_unique=True) if len(cands) else _EMPTY
        if len(common) >= k - 1:
            extend([int(a), int(b)], common)

    sims = (np.array(sorted(tuples), dtype=np.int64).reshape(-1, k + 1)
            if tuples else np.empty((0, k + 1), dtype=np.int64))
    return ComplexSlice(flavor=flavor, k=k, r=r, simplices=sims, source=ps)


_EMPTY = np.empty(0, dtype=np.int64)


def save_slice_csv(sl: ComplexSlice, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"v{i}" for i in range(sl.k + 1)])
        for row in sl.simplices:
            writer.writerow([int(v) for v in row])
