import json
import math
import subprocess
import sys

import numpy as np
import pytest

from torusfaces import experiments as exp
from torusfaces import isolation as iso
from torusfaces.asymptotics import ConstantsEntry, constants_key, save_constants
from torusfaces.geometry import lens_volume


@pytest.fixture(scope="module")
def ru_entry():
    return ConstantsEntry(
        flavor="rips", conn="up", k=1, d=2, m=lens_volume(2, 2, 2),
        M=4 * math.pi, A_vol=4 * math.pi, m_provenance="closed_form",
        M_provenance="estimated", A_provenance="closed_form")


def small_cfg(**kw):
    base = dict(flavor="rips", conn="up", k=1, d=2, n_list=[500],
                radius_rule={"kind": "fixed", "r": [0.04]},
                replicates=5, master_seed=11, jstar_cap_factor=2.0)
    base.update(kw)
    return exp.SweepConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        small_cfg(replicates=0)
    with pytest.raises(ValueError):
        small_cfg(radius_rule={"kind": "nope"})
    with pytest.raises(ValueError):
        small_cfg(flavor="quux")


def test_resolve_cells_rules(ru_entry):
    cfg = small_cfg(radius_rule={"kind": "fixed", "r": [0.01, 0.02]},
                    n_list=[100, 200])
    cells = exp.resolve_cells(cfg)
    assert len(cells) == 4
    assert [c.index for c in cells] == [0, 1, 2, 3]

    cfg = small_cfg(radius_rule={"kind": "fraction", "factor": [0.5, 1.5]},
                    n_list=[1000])
    cells = exp.resolve_cells(cfg, ru_entry)
    m = ru_entry.m
    assert cells[0].r == pytest.approx(math.sqrt(0.5 * math.log(1000) / (1000 * m)))
    assert cells[1].r == pytest.approx(math.sqrt(1.5 * math.log(1000) / (1000 * m)))

    cfg = small_cfg(radius_rule={"kind": "offset", "a": 1.0, "w": [0.0, 2.0]},
                    n_list=[1000])
    cells = exp.resolve_cells(cfg, ru_entry)
    want = math.log(1000) + math.log(math.log(1000))
    assert cells[0].r == pytest.approx(math.sqrt(want / (1000 * m)))

    cfg = small_cfg(radius_rule={"kind": "schedule", "c": "m"}, n_list=[1000])
    cells = exp.resolve_cells(cfg, ru_entry)
    assert cells[0].note == "c=m"
    assert 0 < cells[0].r < 1 / 16


def test_skipped_cells_and_exit_code(ru_entry):
    # tiny n makes the schedule radius blow past the chart guard
    cfg = small_cfg(radius_rule={"kind": "schedule", "c": "m"}, n_list=[30],
                    replicates=3)
    records = exp.run_sweep(cfg, ru_entry)
    assert len(records) == 3
    assert all(r.skipped and r.J == -1 for r in records)
    assert exp.sweep_exit_code(records) == 3

    live = exp.run_sweep(small_cfg(), ru_entry)
    assert exp.sweep_exit_code(live) == 0


def test_run_sweep_deterministic_and_parallel(tmp_path, ru_entry):
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    cfg1 = small_cfg(replicates=8, output=str(out1))
    cfg2 = small_cfg(replicates=8, output=str(out2))
    exp.run_sweep(cfg1, ru_entry, workers=1)
    exp.run_sweep(cfg2, ru_entry, workers=2)
    assert out1.read_bytes() == out2.read_bytes()
    meta = json.loads((tmp_path / "a.csv.meta.json").read_text())
    assert meta["config"]["master_seed"] == 11
    assert "star_caps" in meta and meta["cells"][0]["n"] == 500


def test_single_replicate_reproducible(ru_entry):
    cfg = small_cfg(replicates=6)
    records = exp.run_sweep(cfg, ru_entry)
    target = records[3]
    redo = exp._count_one(cfg.flavor, cfg.conn, cfg.k, cfg.d, 500.0, 0.04,
                          iso.default_star_cap(0.04, 2.0), cfg.master_seed,
                          0, 3)
    assert redo.csv_row() == target.csv_row()


def test_record_invariants(ru_entry):
    records = exp.run_sweep(small_cfg(replicates=20), ru_entry)
    for rec in records:
        assert rec.J == rec.comp_hist.get(1, 0)
        assert rec.J_star >= rec.J


def test_k2_sweep_path(ru_entry):
    cfg = small_cfg(k=2, n_list=[120], radius_rule={"kind": "fixed", "r": [0.035]},
                    replicates=3, flavor="cech", conn="down")
    records = exp.run_sweep(cfg, ru_entry)
    for rec in records:
        assert rec.J == rec.comp_hist.get(1, 0)
        assert rec.J_star >= rec.J


def test_poisson_gof_examples(rng):
    synth = list(rng.poisson(1.0, 100_000))
    rep = exp.poisson_gof(synth)
    assert rep.tv_distance <= 0.01
    assert rep.dispersion == pytest.approx(1.0, abs=0.05)

    point_mass = exp.poisson_gof([0] * 1000, estimator="target", alpha=0.0)
    assert point_mass.tv_distance == pytest.approx(1 - math.exp(-1), abs=1e-9)

    with pytest.raises(ValueError):
        exp.poisson_gof([1] * 50)
    with pytest.raises(ValueError):
        exp.poisson_gof([1] * 500, estimator="target")


def test_expectation_scan_shape_and_trends(ru_entry):
    cfg = small_cfg(radius_rule={"kind": "offset", "a": 1.0, "w": [-1.0, 1.5, 4.0]},
                    n_list=[1500], replicates=60)
    rows = exp.expectation_scan(cfg, ru_entry, mc_samples=600, workers=1)
    assert len(rows) == 3
    assert all(not math.isnan(row.emp_J) for row in rows)
    assert all(r.emp_J_star >= r.emp_J - 1e-12 for r in rows)
    # decreasing expectation in w, both empirically and via the integral
    assert rows[0].emp_J > rows[-1].emp_J
    assert rows[0].mc_J > rows[-1].mc_J
    # empirical and configuration-integral means agree (a zero-count
    # allowance of 3/replicates covers the rare-event rows)
    for row in rows:
        tol = 4 * math.hypot(row.emp_J_se, row.mc_J_se) + 3.0 / 60
        assert abs(row.emp_J - row.mc_J) <= tol


def test_scan_csv(tmp_path, ru_entry):
    cfg = small_cfg(radius_rule={"kind": "offset", "a": 1.0, "w": [0.0]},
                    n_list=[300], replicates=10)
    rows = exp.expectation_scan(cfg, ru_entry, mc_samples=500)
    path = tmp_path / "scan.csv"
    exp.write_scan_csv(rows, path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("n,a,w,r,emp_J")


def test_small_components_vanish_supercritically(ru_entry):
    # above the threshold, components of 2 or 3 faces die out along with
    # the singletons; below it they are plentiful
    def mean_small(factor):
        cfg = small_cfg(radius_rule={"kind": "fraction", "factor": [factor]},
                        n_list=[3000], replicates=40, master_seed=21)
        recs = exp.run_sweep(cfg, ru_entry, workers=2)
        return float(np.mean([r.comp_hist.get(2, 0) + r.comp_hist.get(3, 0)
                              for r in recs]))

    assert mean_small(1.4) <= 0.1
    assert mean_small(0.5) >= 0.5  # nonvanishing below the threshold


def test_scaling_probe_contrast(ru_entry):
    cu_entry = ConstantsEntry(
        flavor="cech", conn="up", k=1, d=2, m=math.pi, M=4 * math.pi,
        A_vol=4 * math.pi, m_provenance="closed_form",
        M_provenance="estimated", A_provenance="closed_form")
    ns = [1e3, 1e4, 1e5, 1e6]
    ru = exp.scaling_probe("rips", "up", 2, ns, ru_entry, seed=3,
                           A_samples=20_000, vol_samples=15_000)
    cu = exp.scaling_probe("cech", "up", 2, ns, cu_entry, seed=3,
                           A_samples=20_000, vol_samples=15_000)
    assert ru.a == 1.0 and cu.a == 2.0
    assert len(ru.rows) == 4
    assert all(row.residual <= 1e-6 for row in ru.rows + cu.rows)
    # the up-connected Cech case carries an extra loglog unit
    assert (ru.slope - cu.slope) == pytest.approx(1.0, abs=0.5)
    # sanity: a = 0 substitution breaks the bounded window (negative control)
    wrong_expr = [row.expression - 1.0 * math.log(math.log(row.n))
                  for row in cu.rows]
    assert max(wrong_expr) - min(wrong_expr) > cu.window


def test_cli_end_to_end(tmp_path, ru_entry):
    env_cmd = [sys.executable, "-m", "torusfaces.cli"]

    out_pts = tmp_path / "pts.csv"
    res = subprocess.run(env_cmd + ["sample", "--n", "200", "--d", "2",
                                    "--seed", "3", "--out", str(out_pts)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr

    res = subprocess.run(env_cmd + ["count", "-p", "R", "-q", "U", "--r", "0.04",
                                    "--points", str(out_pts), "--k", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert res.stdout.strip().startswith("R,U,1,2,")

    # sweep + gof via config file
    consts = tmp_path / "constants.json"
    save_constants([ru_entry], consts)
    cfg = dict(flavor="rips", conn="up", k=1, d=2, n_list=[400],
               radius_rule={"kind": "fixed", "r": [0.045]}, replicates=250,
               master_seed=5, jstar_cap_factor=2.0,
               constants_path=str(consts))
    cfg_path = tmp_path / "sweep.json"
    cfg_path.write_text(json.dumps(cfg))
    out_csv = tmp_path / "records.csv"
    res = subprocess.run(env_cmd + ["sweep", "--config", str(cfg_path),
                                    "--out", str(out_csv), "--workers", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert out_csv.exists() and (tmp_path / "records.csv.meta.json").exists()

    res = subprocess.run(env_cmd + ["gof", "--records", str(out_csv)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    payload = json.loads(res.stdout)
    assert 0.0 <= payload["tv_distance"] <= 1.0

    # validation failure -> exit 2
    res = subprocess.run(env_cmd + ["count", "-p", "R", "-q", "U", "--r", "0.04"],
                         capture_output=True, text=True)
    assert res.returncode == 2

    # all-skipped sweep -> exit 3
    cfg_bad = dict(cfg, n_list=[25],
                   radius_rule={"kind": "schedule", "c": "m"}, replicates=2)
    bad_path = tmp_path / "bad.json"
    bad_path.write_text(json.dumps(cfg_bad))
    res = subprocess.run(env_cmd + ["sweep", "--config", str(bad_path),
                                    "--out", str(tmp_path / "skip.csv")],
                         capture_output=True, text=True)
    assert res.returncode == 3

    # probe-lemma smoke
    res = subprocess.run(env_cmd + ["probe-lemma", "--k", "1", "--d", "2",
                                    "--j", "1", "--delta", "0.05",
                                    "--trials", "60", "--mc-samples", "8000"],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["min_excess_volume"] > 0


def test_cli_solve_cn(tmp_path, ru_entry):
    consts = tmp_path / "constants.json"
    save_constants([ru_entry], consts)
    res = subprocess.run(
        [sys.executable, "-m", "torusfaces.cli", "solve-cn", "-p", "rips",
         "-q", "up", "--k", "1", "--d", "2", "--n", "1000", "10000",
         "--A-samples", "5000", "--vol-samples", "5000",
         "--constants", str(consts)],
        capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    lines = res.stdout.strip().splitlines()
    assert len(lines) == 2 and all("c_n=" in ln for ln in lines)
