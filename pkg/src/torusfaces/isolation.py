"""Isolated-face counts, connectivity graphs on faces, component census.

A k-face is isolated when no other process point lies in its attachment
region; equivalently it has degree zero in the chosen face-connectivity
graph.  ``count_isolated_star`` additionally counts tuples that are not yet
faces at r but are isolated at their own birth radius, capped at a
recorded search radius.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .geometry import (
    DOWN,
    RegionSpec,
    UP,
    conn_letter,
    flavor_letter,
    nearest_image,
    normalize_conn,
    normalize_flavor,
    region_contains_batch,
)
from .complexes import (
    FACE_RADIUS_GUARD,
    ComplexSlice,
    check_face_radius,
    enumerate_k_simplices,
    simplex_birth_radius,
)
from .pointprocess import GridIndex, PointSet, build_index, range_query

# Birth-radius searches must stay below the face guard so isolation tests
# at the birth radius still fit one chart.
STAR_CAP_LIMIT = FACE_RADIUS_GUARD * (1.0 - 1e-9)
DEFAULT_STAR_CAP_FACTOR = 4.0
NEAR_CAP_FRACTION = 0.8


def default_star_cap(r: float, factor: float = DEFAULT_STAR_CAP_FACTOR) -> float:
    """Birth-radius search cap: factor * r, clamped to the chart guard."""
    return float(min(max(factor * r, r), STAR_CAP_LIMIT))


# ---------------------------------------------------------------------------
# Per-face isolation
# ---------------------------------------------------------------------------

def _isolation_candidates(ps: PointSet, idx: GridIndex, ids: np.ndarray,
                          radius: float) -> np.ndarray:
    """Ids of points that could lie in the face's attachment region.

    Every attachment region at test radius rho is covered by the union of
    2*rho-balls around the face's vertices, so per-vertex range queries at
    2*rho (within the index ceiling) are exhaustive.
    """
    cand = np.unique(np.concatenate(
        [range_query(idx, ps, ps.points[v], 2.0 * radius) for v in ids]
    ))
    return cand[~np.isin(cand, ids)]


def _is_isolated_at(ps: PointSet, idx: GridIndex, ids: np.ndarray, rho: float,
                    flavor: str, conn: str) -> bool:
    cand = _isolation_candidates(ps, idx, ids, rho)
    if len(cand) == 0:
        return True
    base = ps.points[ids[0]]
    centers = nearest_image(base, ps.points[ids])
    lifted = nearest_image(base, ps.points[cand])
    region = RegionSpec(flavor, conn, centers, rho, rho)
    return not bool(np.any(region_contains_batch(region, lifted)))


def is_isolated(ps: PointSet, idx: GridIndex, simplex, r: float,
                flavor: str, conn: str) -> bool:
    """Whether no other point lies in the face's attachment region at r."""
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    check_face_radius(r)
    ids = np.asarray(simplex, dtype=np.int64)
    if conn == DOWN and len(ids) == 1:
        raise ValueError("down-connectivity is undefined for 0-faces")
    return _is_isolated_at(ps, idx, ids, r, flavor, conn)


# ---------------------------------------------------------------------------
# Counts
# ---------------------------------------------------------------------------

def count_isolated(ps: PointSet, idx: GridIndex | None, r: float, k: int,
                   flavor: str, conn: str, engine: str = "auto") -> int:
    """Number of isolated k-faces at radius r."""
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    check_face_radius(r)
    if conn == DOWN and k == 0:
        raise ValueError("down-connectivity is undefined for 0-faces")
    if engine == "auto" and k <= 1:
        from .fastcount import analyze_k1

        return analyze_k1(ps.points, r, k, flavor, conn,
                          want_hist=False, want_star=False).j
    if idx is None or not idx.supports(2.0 * r):
        idx = build_index(ps, 2.0 * r)
    sl = enumerate_k_simplices(ps, idx, r, k, flavor)
    return sum(
        1 for row in sl.simplices if _is_isolated_at(ps, idx, row, r, flavor, conn)
    )


@dataclass(frozen=True)
class StarCount:
    """Isolated-at-or-above count with its search-cap diagnostics."""

    count: int
    at_radius: int
    extra: int
    cap: float
    near_cap_hits: int  # counted tuples with birth radius in the top cap band


def count_isolated_star_details(ps: PointSet, idx: GridIndex | None, r: float,
                                k: int, flavor: str, conn: str,
                                cap: float | None = None,
                                engine: str = "auto") -> StarCount:
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    check_face_radius(r)
    if conn == DOWN and k == 0:
        raise ValueError("down-connectivity is undefined for 0-faces")
    if cap is None:
        cap = default_star_cap(r)
    if not (r <= cap <= STAR_CAP_LIMIT):
        raise ValueError(f"cap must lie in [r, {STAR_CAP_LIMIT}]")
    if engine == "auto" and k <= 1:
        from .fastcount import analyze_k1

        res = analyze_k1(ps.points, r, k, flavor, conn, cap=cap,
                         want_hist=False, want_star=True)
        return StarCount(count=res.j_star, at_radius=res.j,
                         extra=res.j_star - res.j, cap=cap,
                         near_cap_hits=res.near_cap_hits)

    j = count_isolated(ps, idx, r, k, flavor, conn, engine="generic")
    cap_idx = build_index(ps, 2.0 * cap)
    sl = enumerate_k_simplices(ps, cap_idx, cap, k, flavor)
    extra = 0
    near = 0
    for row in sl.simplices:
        rb = simplex_birth_radius(ps, row, flavor)
        if rb <= r or rb > cap:
            continue
        if _is_isolated_at(ps, cap_idx, row, rb, flavor, conn):
            extra += 1
            if rb > NEAR_CAP_FRACTION * cap:
                near += 1
    return StarCount(count=j + extra, at_radius=j, extra=extra, cap=cap,
                     near_cap_hits=near)


def count_isolated_star(ps: PointSet, idx: GridIndex | None, r: float, k: int,
                        flavor: str, conn: str, cap: float | None = None,
                        engine: str = "auto") -> int:
    """Isolated faces at r plus tuples isolated at their birth radius in (r, cap]."""
    return count_isolated_star_details(ps, idx, r, k, flavor, conn, cap, engine).count


# ---------------------------------------------------------------------------
# Face connectivity graphs
# ---------------------------------------------------------------------------

@dataclass
class ConnGraph:
    """Up- or down-connectivity graph over the k-faces of one slice."""

    nodes: np.ndarray            # (m, k+1) face vertex ids
    adjacency: list[np.ndarray]  # sorted neighbor positions per node
    conn: str
    flavor: str
    k: int
    r: float

    def __len__(self) -> int:
        return len(self.nodes)

    def degree(self, pos: int) -> int:
        return len(self.adjacency[pos])

    def isolated_nodes(self) -> np.ndarray:
        return np.array([p for p in range(len(self.nodes)) if not len(self.adjacency[p])],
                        dtype=np.int64)


def build_conn_graph(sl: ComplexSlice, conn: str, idx: GridIndex | None = None) -> ConnGraph:
    """Face-connectivity graph: up links via shared (k+1)-faces, down links
    via shared (k-1)-faces."""
    conn = normalize_conn(conn)
    k = sl.k
    if conn == DOWN and k == 0:
        raise ValueError("down-connectivity is undefined for 0-faces")
    m = len(sl.simplices)
    neighbor_sets: list[set[int]] = [set() for _ in range(m)]
    pos = {tuple(int(v) for v in row): p for p, row in enumerate(sl.simplices)}

    if conn == UP:
        if idx is None or not idx.supports(2.0 * sl.r):
            idx = build_index(sl.source, 2.0 * sl.r)
        upper = enumerate_k_simplices(sl.source, idx, sl.r, k + 1, sl.flavor)
        for row in upper.simplices:
            tup = tuple(int(v) for v in row)
            subs = [pos[s] for s in combinations(tup, k + 1)]
            for a, b in combinations(subs, 2):
                neighbor_sets[a].add(b)
                neighbor_sets[b].add(a)
    else:
        groups: dict[tuple[int, ...], list[int]] = {}
        for p, row in enumerate(sl.simplices):
            tup = tuple(int(v) for v in row)
            for sub in combinations(tup, k):
                groups.setdefault(sub, []).append(p)
        for members in groups.values():
            for a, b in combinations(members, 2):
                neighbor_sets[a].add(b)
                neighbor_sets[b].add(a)

    adjacency = [np.array(sorted(s), dtype=np.int64) for s in neighbor_sets]
    return ConnGraph(nodes=sl.simplices, adjacency=adjacency, conn=conn,
                     flavor=sl.flavor, k=k, r=sl.r)


class UnionFind:
    """Array union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return int(x)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def component_sizes(self) -> np.ndarray:
        if len(self.parent) == 0:
            return np.empty(0, dtype=np.int64)
        roots = np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)
        return np.bincount(roots)[np.unique(roots)]


def component_size_histogram(g: ConnGraph) -> dict[int, int]:
    """Census of connected-component sizes: {size L: number of components}."""
    uf = UnionFind(len(g.nodes))
    for a, nbrs in enumerate(g.adjacency):
        for b in nbrs:
            uf.union(a, int(b))
    sizes = uf.component_sizes()
    hist: dict[int, int] = {}
    for s in sizes:
        hist[int(s)] = hist.get(int(s), 0) + 1
    return hist


# ---------------------------------------------------------------------------
# Count records
# ---------------------------------------------------------------------------

CSV_COLUMNS = ["p", "q", "k", "d", "n", "r", "J", "J_star", "comp_hist",
               "replicate_id", "seed"]


@dataclass(frozen=True)
class CountRecord:
    """One replicate's counting outputs for one parameter cell."""

    flavor: str
    conn: str
    k: int
    d: int
    n: float
    r: float
    J: int
    J_star: int
    comp_hist: dict[int, int]
    replicate_id: int
    seed: int
    star_cap: float = 0.0
    star_near_cap: int = 0
    skipped: bool = False

    def csv_row(self) -> list:
        hist = json.dumps({str(k): v for k, v in sorted(self.comp_hist.items())},
                          separators=(",", ":"))
        return [flavor_letter(self.flavor), conn_letter(self.conn), self.k,
                self.d, repr(float(self.n)), repr(float(self.r)), self.J,
                self.J_star, hist, self.replicate_id, self.seed]


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow(rec.csv_row())


def read_records_csv(path) -> list[CountRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected header {header!r}")
        for row in reader:
            if not row:
                continue
            hist = {int(k): int(v) for k, v in json.loads(row[8]).items()}
            out.append(CountRecord(
                flavor="cech" if row[0] == "C" else "rips",
                conn="up" if row[1] == "U" else "down",
                k=int(row[2]), d=int(row[3]), n=float(row[4]), r=float(row[5]),
                J=int(row[6]), J_star=int(row[7]), comp_hist=hist,
                replicate_id=int(row[9]), seed=int(row[10]),
                skipped=int(row[6]) < 0,
            ))
    return out
