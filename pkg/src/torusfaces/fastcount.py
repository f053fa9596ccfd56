"""Vectorized isolated-face counting for k <= 1 (the heavy simulation path).

For k = 1 the four connectivity cases reduce to neighborhood combinatorics
of the 2r-geometric graph:

* rips/up:   an edge is isolated iff it lies in no graph triangle
* cech/up:   iff it lies in no triangle whose enclosing-ball radius is <= r
* both/down: iff both endpoints have degree one

The isolated-at-birth search for ``J*`` enumerates pairs with birth radius
in (r, cap] and prunes them through an occupancy grid before the exact
region test; for an up pair at birth the region contains the ball of
radius D/2 around the midpoint, which is empty for only a vanishing
fraction of pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .geometry import (
    CECH,
    DOWN,
    UP,
    enclosing_radius3_sq,
    normalize_conn,
    normalize_flavor,
    wrapped_delta,
)
from .complexes import check_face_radius
from .pointprocess import PointSet, _ragged_arange, build_index, neighbor_pairs

STAR_CAP_LIMIT = (1.0 / 16.0) * (1.0 - 1e-9)
NEAR_CAP_FRACTION = 0.8


@dataclass(frozen=True)
class K1Result:
    j: int
    j_star: int
    comp_hist: dict[int, int]
    cap: float
    near_cap_hits: int


def _hist_from_labels(labels: np.ndarray) -> dict[int, int]:
    if len(labels) == 0:
        return {}
    sizes = np.bincount(labels)
    counts = np.bincount(sizes)
    return {int(s): int(c) for s, c in enumerate(counts) if s > 0 and c > 0}


def _components_hist(n_nodes: int, rows: np.ndarray, cols: np.ndarray) -> dict[int, int]:
    if n_nodes == 0:
        return {}
    graph = coo_matrix(
        (np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_nodes, n_nodes)
    )
    _, labels = connected_components(graph, directed=False)
    return _hist_from_labels(labels)


def _nearest_two(n: int, i: np.ndarray, j: np.ndarray, d: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per point: distance and id of nearest neighbor, and second distance.

    Neighbors beyond the enumeration radius count as infinitely far.
    """
    verts = np.concatenate([i, j])
    other = np.concatenate([j, i])
    dist = np.concatenate([d, d])
    nn1 = np.full(n, np.inf)
    nn2 = np.full(n, np.inf)
    nn1id = np.full(n, -1, dtype=np.int64)
    order = np.lexsort((dist, verts))
    verts, other, dist = verts[order], other[order], dist[order]
    starts = np.searchsorted(verts, np.arange(n + 1))
    has1 = starts[:-1] < starts[1:]
    first = starts[:-1][has1]
    nn1[has1] = dist[first]
    nn1id[has1] = other[first]
    has2 = starts[:-1] + 1 < starts[1:]
    nn2[has2] = dist[starts[:-1][has2] + 1]
    return nn1, nn1id, nn2


class _OccupancyGrid:
    """Dense per-cell point counts on the torus, for emptiness pruning."""

    def __init__(self, points: np.ndarray, target_cell: float):
        d = points.shape[1]
        per_axis_cap = max(4, int((1 << 26) ** (1.0 / d)))
        self.ncells = min(max(4, int(np.ceil(1.0 / target_cell))), per_axis_cap)
        self.d = d
        cells = np.clip((points * self.ncells).astype(np.int64), 0, self.ncells - 1)
        flat = cells[:, 0].copy()
        for axis in range(1, d):
            flat = flat * self.ncells + cells[:, axis]
        self.counts = np.bincount(flat, minlength=self.ncells**d)
        self.cell_size = 1.0 / self.ncells

    def certified_radius(self) -> float:
        """Any point of a 3^d block lies within this distance of a query
        point in the block's center cell."""
        return 2.0 * np.sqrt(self.d) * self.cell_size

    def block_counts(self, queries: np.ndarray) -> np.ndarray:
        cells = np.clip((queries * self.ncells).astype(np.int64), 0, self.ncells - 1)
        total = np.zeros(len(queries), dtype=np.int64)
        for off in product((-1, 0, 1), repeat=self.d):
            nb = np.mod(cells + np.asarray(off, dtype=np.int64), self.ncells)
            flat = nb[:, 0].copy()
            for axis in range(1, self.d):
                flat = flat * self.ncells + nb[:, axis]
            total += self.counts[flat]
        return total


class _GatherGrid:
    """CSR cell lists supporting batched ring-1 candidate gathers."""

    def __init__(self, points: np.ndarray, radius: float):
        d = points.shape[1]
        per_axis_cap = max(3, int((1 << 26) ** (1.0 / d)))
        self.ncells = max(3, min(int(1.0 / radius), per_axis_cap))
        self.d = d
        self.points = points
        cells = np.clip((points * self.ncells).astype(np.int64), 0, self.ncells - 1)
        flat = cells[:, 0].copy()
        for axis in range(1, d):
            flat = flat * self.ncells + cells[:, axis]
        self.order = np.argsort(flat, kind="stable").astype(np.int64)
        counts = np.bincount(flat, minlength=self.ncells**d)
        self.indptr = np.concatenate([[0], np.cumsum(counts)])
        self.cover = 1.0 / self.ncells  # ring-1 covers any radius <= cell size

    def gather(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(owner, candidate_id) rows over the 3^d blocks of each query."""
        cells = np.clip((queries * self.ncells).astype(np.int64), 0, self.ncells - 1)
        owners = []
        cands = []
        for off in product((-1, 0, 1), repeat=self.d):
            nb = np.mod(cells + np.asarray(off, dtype=np.int64), self.ncells)
            flat = nb[:, 0].copy()
            for axis in range(1, self.d):
                flat = flat * self.ncells + nb[:, axis]
            starts = self.indptr[flat]
            stops = self.indptr[flat + 1]
            sizes = stops - starts
            if not np.any(sizes):
                continue
            owners.append(np.repeat(np.arange(len(queries)), sizes))
            cands.append(self.order[_ragged_arange(starts, stops)])
        if not owners:
            e = np.empty(0, dtype=np.int64)
            return e, e.copy()
        return np.concatenate(owners), np.concatenate(cands)


_DENSE_ADJ_LIMIT = 15_000  # n*n bool bytes stays near 225 MB below this


def _rips_triangles(n: int, ei: np.ndarray, ej: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Triangles (u < v < w) of the graph with edge ids (uv, vw, uw).

    Wedge join: each edge (u, v) is extended by the forward neighbors w of
    v and kept when (u, w) is also an edge.  Returns vertex rows w plus the
    three edge ids per triangle.
    """
    m = len(ei)
    empty = np.empty(0, dtype=np.int64)
    if m == 0:
        return empty, empty, empty, empty
    indptr = np.searchsorted(ei, np.arange(n + 1))
    sizes = indptr[ej + 1] - indptr[ej]
    eidx = np.repeat(np.arange(m, dtype=np.int64), sizes)
    wpos = _ragged_arange(indptr[ej], indptr[ej + 1])
    if len(eidx) == 0:
        return empty, empty, empty, empty
    w = ej[wpos]
    u = ei[eidx]
    ekey = ei * n + ej
    if n <= _DENSE_ADJ_LIMIT:
        # dense boolean adjacency: O(1) membership instead of binary search,
        # then resolve edge ids only for the confirmed triangles
        adj = np.zeros((n, n), dtype=bool)
        adj[ei, ej] = True
        ok = adj[u, w]
        uw = np.searchsorted(ekey, u[ok] * n + w[ok])
    else:
        qkey = u * n + w
        pos = np.searchsorted(ekey, qkey)
        pos_c = np.minimum(pos, m - 1)
        ok = ekey[pos_c] == qkey
        uw = pos_c[ok]
    return w[ok], eidx[ok], wpos[ok], uw


def analyze_k1(points: np.ndarray, r: float, k: int, flavor: str, conn: str,
               cap: float | None = None, want_hist: bool = True,
               want_star: bool = True) -> K1Result:
    """Exact J, J* and component census for k in {0, 1} on raw coordinates."""
    flavor = normalize_flavor(flavor)
    conn = normalize_conn(conn)
    check_face_radius(r)
    if k not in (0, 1):
        raise ValueError("fast path supports k in {0, 1}")
    if conn == DOWN and k == 0:
        raise ValueError("down-connectivity is undefined for 0-faces")
    if cap is None:
        cap = float(min(max(4.0 * r, r), STAR_CAP_LIMIT))
    if not (r <= cap <= STAR_CAP_LIMIT):
        raise ValueError(f"cap must lie in [r, {STAR_CAP_LIMIT}]")

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(pts)
    if n == 0 or pts.size == 0:
        return K1Result(0, 0, {}, cap, 0)

    ps = PointSet(d=pts.shape[1], points=pts, intensity_n=max(float(n), 1.0))
    enum_radius = 2.0 * cap if (want_star and k == 1) else 2.0 * r
    idx = build_index(ps, enum_radius)
    i, j, dist = neighbor_pairs(ps, idx, enum_radius)

    edge_mask = dist <= 2.0 * r
    ei, ej, edist = i[edge_mask], j[edge_mask], dist[edge_mask]
    m = len(ei)

    if k == 0:
        deg = np.bincount(np.concatenate([ei, ej]), minlength=n)
        jcount = int(np.sum(deg == 0))
        hist = _components_hist(n, ei, ej) if want_hist else {}
        return K1Result(jcount, jcount, hist, cap, 0)

    # --- J at radius r -----------------------------------------------------
    tri = None
    if conn == DOWN:
        deg = np.bincount(np.concatenate([ei, ej]), minlength=n)
        jcount = int(np.sum((deg[ei] == 1) & (deg[ej] == 1))) if m else 0
    else:
        w, t_uv, t_vw, t_uw = _rips_triangles(n, ei, ej)
        if flavor == CECH and len(w):
            # triangle side lengths were already computed during the pair
            # enumeration; the enclosing-ball test needs nothing else
            q = edist * edist
            keep = enclosing_radius3_sq(q[t_uv], q[t_vw], q[t_uw]) <= r * r
            t_uv, t_vw, t_uw = t_uv[keep], t_vw[keep], t_uw[keep]
        tri = (t_uv, t_vw, t_uw)
        in_tri = np.zeros(m, dtype=bool)
        for arr in tri:
            in_tri[arr] = True
        jcount = int(m - np.count_nonzero(in_tri))

    # --- component census ---------------------------------------------------
    hist: dict[int, int] = {}
    if want_hist:
        if conn == DOWN:
            eid = np.arange(m, dtype=np.int64)
            verts = np.concatenate([ei, ej])
            eids = np.concatenate([eid, eid])
            order = np.lexsort((eids, verts))
            verts_s, eids_s = verts[order], eids[order]
            # chain consecutive edges incident to the same vertex
            same = verts_s[1:] == verts_s[:-1]
            rows, cols = eids_s[:-1][same], eids_s[1:][same]
        else:
            t_uv, t_vw, t_uw = tri
            rows = np.concatenate([t_uv, t_vw])
            cols = np.concatenate([t_vw, t_uw])
        hist = _components_hist(m, rows, cols)

    # --- isolated at birth above r -------------------------------------------
    extra = 0
    near_cap = 0
    if want_star:
        smask = dist > 2.0 * r
        si, sj, sD = i[smask], j[smask], dist[smask]
        if len(si):
            if conn == DOWN:
                nn1, nn1id, nn2 = _nearest_two(n, i, j, dist)
                da = np.where(nn1id[si] == sj, nn2[si], nn1[si])
                db = np.where(nn1id[sj] == si, nn2[sj], nn1[sj])
                alive = (da > sD) & (db > sD)
                extra = int(np.count_nonzero(alive))
                if extra:
                    near_cap = int(np.count_nonzero(sD[alive] > 2.0 * NEAR_CAP_FRACTION * cap))
            else:
                base = pts[si]
                mids = np.mod(base + 0.5 * wrapped_delta(base, pts[sj]), 1.0)
                occ = _OccupancyGrid(pts, target_cell=r / (2.0 * np.sqrt(pts.shape[1]) * 1.01))
                if occ.certified_radius() <= r:
                    survive = occ.block_counts(mids) == 0
                else:  # grid too coarse to certify; fall through to exact stage
                    survive = np.ones(len(si), dtype=bool)
                si2, sj2, sD2 = si[survive], sj[survive], sD[survive]
                mids2 = mids[survive]
                if len(si2):
                    # exact midball test: B(mid, D/2) must be empty; D/2 <= cap
                    gg = _GatherGrid(pts, radius=cap)
                    owner, cand = gg.gather(mids2)
                    not_self = (cand != si2[owner]) & (cand != sj2[owner])
                    delta = wrapped_delta(mids2[owner], pts[cand])
                    inball = np.einsum("ij,ij->i", delta, delta) <= (0.5 * sD2[owner]) ** 2
                    dead = np.zeros(len(si2), dtype=bool)
                    dead[owner[inball & not_self]] = True
                    alive_idx = np.nonzero(~dead)[0]
                    if flavor == CECH:
                        final = alive_idx
                    elif len(alive_idx):
                        # exact lens test on the few midball-empty survivors;
                        # lens points lie within sqrt(3)/2 * D <= sqrt(3)*cap
                        # of the midpoint, so gather ring-1 on a 2cap grid
                        g2 = _GatherGrid(pts, radius=2.0 * cap)
                        o2, c2 = g2.gather(mids2[alive_idx])
                        ns2 = (c2 != si2[alive_idx][o2]) & (c2 != sj2[alive_idx][o2])
                        o2, c2 = o2[ns2], c2[ns2]
                        da = np.sqrt(np.sum(wrapped_delta(pts[si2[alive_idx][o2]],
                                                          pts[c2]) ** 2, axis=1))
                        db = np.sqrt(np.sum(wrapped_delta(pts[sj2[alive_idx][o2]],
                                                          pts[c2]) ** 2, axis=1))
                        in_lens = np.maximum(da, db) <= sD2[alive_idx][o2]
                        killed = np.zeros(len(alive_idx), dtype=bool)
                        killed[o2[in_lens]] = True
                        final = alive_idx[~killed]
                    else:
                        final = alive_idx
                    extra = int(len(final))
                    if extra:
                        near_cap = int(np.count_nonzero(
                            sD2[final] > 2.0 * NEAR_CAP_FRACTION * cap))

    return K1Result(jcount, jcount + extra, hist, cap, near_cap)
