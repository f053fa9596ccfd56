import json
import math

import numpy as np
import pytest

from torusfaces import complexes as cx
from torusfaces import isolation as iso
from torusfaces import pointprocess as pp

from oracles import OracleInstance


def make_ps(rows, scale, offset=0.5):
    pts = np.mod(np.asarray(rows, float) * scale + offset, 1.0)
    return pp.PointSet(pts.shape[1], pts, len(pts), 0)


@pytest.fixture
def path_triangle_config():
    """Five points whose maximal faces mirror the classic two-complex picture.

    At unit radius: edges 1-2, 2-3, 3-4, 2-4, 2-5, 4-5; the triple {2,4,5}
    has a common ball intersection while {2,3,4} is only pairwise close.
    """
    rows = [
        [-1.9, 0.4],   # 1
        [0.0, 0.0],    # 2
        [1.0, -1.65],  # 3
        [1.8, 0.0],    # 4
        [0.9, 1.2],    # 5
    ]
    scale = 0.02
    return make_ps(rows, scale), scale  # radius = scale (unit radius scaled)


def test_figure_config_counts(path_triangle_config):
    ps, r = path_triangle_config
    idx = pp.build_index(ps, 0.1)
    assert iso.count_isolated(ps, idx, r, 1, "rips", "up") == 1
    assert iso.count_isolated(ps, idx, r, 1, "cech", "up") == 3
    assert iso.count_isolated(ps, idx, r, 1, "rips", "down") == 0
    assert iso.count_isolated(ps, idx, r, 1, "cech", "down") == 0


def test_single_edge_isolated():
    ps = make_ps([[0.0, 0.0], [1.0, 0.0]], 0.03)
    idx = pp.build_index(ps, 0.1)
    for conn in ("up", "down"):
        for flavor in ("rips", "cech"):
            assert iso.is_isolated(ps, idx, (0, 1), 0.03, flavor, conn)


def test_collinear_counts():
    s = 0.02
    ps = make_ps([[0.0, 0.0], [1.9, 0.0], [3.8, 0.0]], s, 0.2)
    idx = pp.build_index(ps, 0.1)
    assert iso.count_isolated(ps, idx, s, 1, "rips", "up") == 2
    assert iso.count_isolated(ps, idx, s, 1, "rips", "down") == 0
    assert iso.count_isolated(ps, idx, s, 1, "cech", "down") == 0


def test_empty_pointset_counts():
    ps = pp.PointSet(2, np.empty((0, 2)), 1.0, 0)
    assert iso.count_isolated(ps, None, 0.02, 1, "rips", "up") == 0
    assert iso.count_isolated_star(ps, None, 0.02, 1, "cech", "down") == 0


def test_down_k0_rejected():
    ps = pp.sample_poisson(30, 2, pp.replicate_rng(1))
    with pytest.raises(ValueError):
        iso.count_isolated(ps, None, 0.02, 0, "rips", "down")


def test_down_counts_equal_across_flavors_k1(rng):
    for trial in range(30):
        n = int(rng.integers(5, 60))
        ps = pp.sample_poisson(n, 2, pp.replicate_rng(3000 + trial))
        if len(ps) == 0:
            continue
        r = float(rng.uniform(0.01, 0.05))
        a = iso.count_isolated(ps, None, r, 1, "rips", "down")
        b = iso.count_isolated(ps, None, r, 1, "cech", "down")
        assert a == b


def test_star_cap_validation():
    ps = pp.sample_poisson(30, 2, pp.replicate_rng(2))
    with pytest.raises(ValueError):
        iso.count_isolated_star(ps, None, 0.02, 1, "rips", "up", cap=0.01)
    with pytest.raises(ValueError):
        iso.count_isolated_star(ps, None, 0.02, 1, "rips", "up", cap=0.1)


def test_star_hand_construction():
    # two points at distance 2r + delta and nothing else: J(r) = 0 but the
    # pair is isolated at its own birth radius
    r = 0.02
    ps = make_ps([[0.0, 0.0], [2.2, 0.0]], r, 0.3)
    idx = pp.build_index(ps, 0.1)
    for flavor in ("rips", "cech"):
        for conn in ("up", "down"):
            assert iso.count_isolated(ps, idx, r, 1, flavor, conn) == 0
            assert iso.count_isolated_star(ps, idx, r, 1, flavor, conn) == 1


def test_star_monotone_on_radius_grid(rng):
    # with a common birth-radius cap, J* is non-increasing in r
    for trial in range(10):
        ps = pp.sample_poisson(60, 2, pp.replicate_rng(4000 + trial))
        if len(ps) < 3:
            continue
        cap = iso.default_star_cap(0.03)
        radii = np.linspace(0.008, 0.03, 5)
        for flavor in ("rips", "cech"):
            for conn in ("up", "down"):
                vals = [iso.count_isolated_star(ps, None, float(r), 1, flavor, conn,
                                                cap=cap) for r in radii]
                assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_star_matches_oracle_k2(rng):
    for trial in range(6):
        d = 2 if trial % 2 else 3
        r = float(rng.uniform(0.012, 0.03))
        base = rng.random(d)
        pts = np.mod(base + (rng.random((14, d)) - 0.5) * 5 * r, 1.0)
        ps = pp.PointSet(d, pts, 14, 0)
        cap = iso.default_star_cap(r)
        orc = OracleInstance(pts)
        for flavor in ("rips", "cech"):
            for conn in ("up", "down"):
                got = iso.count_isolated_star(ps, None, r, 2, flavor, conn, cap=cap)
                assert got == orc.count_isolated_star(r, 2, flavor, conn, cap)


def test_monotone_coupling_adding_points(rng):
    # adding points can only destroy isolation of a still-alive face
    for trial in range(20):
        base = rng.random(2)
        pts = np.mod(base + (rng.random((12, 2)) - 0.5) * 0.15, 1.0)
        extra = np.mod(base + (rng.random((4, 2)) - 0.5) * 0.15, 1.0)
        ps_small = pp.PointSet(2, pts, 12, 0)
        ps_big = pp.PointSet(2, np.vstack([pts, extra]), 16, 0)
        r = float(rng.uniform(0.02, 0.05))
        idx_s = pp.build_index(ps_small, 0.12)
        idx_b = pp.build_index(ps_big, 0.12)
        sl = cx.enumerate_k_simplices(ps_small, idx_s, r, 1, "rips")
        for row in sl.simplices:
            for conn in ("up", "down"):
                if not iso.is_isolated(ps_small, idx_s, row, r, "rips", conn):
                    assert not iso.is_isolated(ps_big, idx_b, row, r, "rips", conn)


# ---------------------------------------------------------------------------
# connectivity graphs and census
# ---------------------------------------------------------------------------

def test_conn_graph_triangle_down_clique():
    # three edges pairwise sharing vertices -> complete down graph
    side = 0.02
    tri = [[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]]
    ps = make_ps(tri, side, 0.4)
    idx = pp.build_index(ps, 0.1)
    sl = cx.enumerate_k_simplices(ps, idx, side, 1, "rips")
    assert len(sl) == 3
    gd = iso.build_conn_graph(sl, "down", idx)
    assert all(len(a) == 2 for a in gd.adjacency)
    assert iso.component_size_histogram(gd) == {3: 1}


def test_conn_graph_single_face_no_edges():
    ps = make_ps([[0.0, 0.0], [1.0, 0.0]], 0.02)
    idx = pp.build_index(ps, 0.1)
    sl = cx.enumerate_k_simplices(ps, idx, 0.02, 1, "rips")
    g = iso.build_conn_graph(sl, "up", idx)
    assert len(g) == 1 and g.degree(0) == 0
    assert iso.component_size_histogram(g) == {1: 1}


def test_isolated_nodes_match_count(rng):
    for trial in range(15):
        n = int(rng.integers(6, 45))
        ps = pp.sample_poisson(n, 2, pp.replicate_rng(5000 + trial))
        if len(ps) < 2:
            continue
        r = float(rng.uniform(0.015, 0.05))
        idx = pp.build_index(ps, 0.12)
        for flavor in ("rips", "cech"):
            sl = cx.enumerate_k_simplices(ps, idx, r, 1, flavor)
            for conn in ("up", "down"):
                g = iso.build_conn_graph(sl, conn, idx)
                assert len(g.isolated_nodes()) == iso.count_isolated(
                    ps, idx, r, 1, flavor, conn)


def test_histogram_sums_to_node_count(rng):
    for trial in range(10):
        base = rng.random(2)
        pts = np.mod(base + (rng.random((25, 2)) - 0.5) * 0.2, 1.0)
        ps = pp.PointSet(2, pts, 25, 0)
        idx = pp.build_index(ps, 0.12)
        sl = cx.enumerate_k_simplices(ps, idx, 0.03, 1, "rips")
        for conn in ("up", "down"):
            g = iso.build_conn_graph(sl, conn, idx)
            hist = iso.component_size_histogram(g)
            assert sum(size * count for size, count in hist.items()) == len(g)


def test_histogram_matches_dfs_oracle(rng):
    for trial in range(8):
        base = rng.random(2)
        pts = np.mod(base + (rng.random((18, 2)) - 0.5) * 0.15, 1.0)
        ps = pp.PointSet(2, pts, 18, 0)
        idx = pp.build_index(ps, 0.12)
        r = float(rng.uniform(0.02, 0.045))
        orc = OracleInstance(pts)
        for flavor in ("rips", "cech"):
            sl = cx.enumerate_k_simplices(ps, idx, r, 1, flavor)
            for conn in ("up", "down"):
                g = iso.build_conn_graph(sl, conn, idx)
                assert iso.component_size_histogram(g) == orc.component_histogram(
                    r, 1, flavor, conn)


def test_union_find_basics():
    uf = iso.UnionFind(6)
    uf.union(0, 1)
    uf.union(1, 2)
    uf.union(4, 5)
    sizes = sorted(uf.component_sizes().tolist())
    assert sizes == [1, 2, 3]


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

def test_count_record_roundtrip(tmp_path):
    rec = iso.CountRecord(flavor="rips", conn="up", k=1, d=2, n=500.0, r=0.03,
                          J=4, J_star=5, comp_hist={1: 4, 3: 2},
                          replicate_id=7, seed=99)
    path = tmp_path / "records.csv"
    iso.write_records_csv([rec], path)
    text = path.read_text().splitlines()
    assert text[0] == "p,q,k,d,n,r,J,J_star,comp_hist,replicate_id,seed"
    assert text[1].startswith("R,U,1,2,500.0,0.03,4,5,")
    back = iso.read_records_csv(path)
    assert len(back) == 1
    assert back[0].comp_hist == {1: 4, 3: 2}
    assert back[0].J == 4 and back[0].J_star == 5 and back[0].seed == 99
    import csv as _csv

    with open(path, newline="") as fh:
        row = list(_csv.reader(fh))[1]
    assert json.loads(row[8]) == {"1": 4, "3": 2}
