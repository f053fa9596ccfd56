"""Replicated sweeps, Poisson goodness-of-fit, expectation and scaling scans.

A sweep resolves its radius rule into (n, r) cells, runs seeded replicates
(counter-based substreams keyed by cell and replicate id, so results never
depend on worker scheduling), and streams one CSV row per replicate.  Cells
whose radius violates the chart guard become explicit skipped records.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .geometry import conn_letter, flavor_letter, normalize_conn, normalize_flavor
from .complexes import FACE_RADIUS_GUARD, enumerate_k_simplices
from .pointprocess import build_index, replicate_rng, sample_poisson
from .isolation import (
    CountRecord,
    build_conn_graph,
    component_size_histogram,
    count_isolated_star_details,
    default_star_cap,
    write_records_csv,
)
from .fastcount import analyze_k1
from .asymptotics import (
    ConstantsEntry,
    RadiusSchedule,
    constants_key,
    expected_J_mc,
    frozen_region_volumes,
    load_constants,
    r_n_of_c,
    solve_c_n,
)


# ---------------------------------------------------------------------------
# Sweep configuration
# ---------------------------------------------------------------------------

RULE_KINDS = ("fixed", "schedule", "offset", "fraction")


@dataclass
class SweepConfig:
    """One replicated counting experiment.

    radius_rule is one of
      {"kind": "fixed",    "r": [..]}
      {"kind": "schedule", "c": "solved" | "m" | <float>}
      {"kind": "offset",   "a": <float, default k>, "w": [..]}
      {"kind": "fraction", "factor": [..]}
    where the offset rule sets n m r^d = log n + a loglog n + w and the
    fraction rule sets n m r^d = factor * log n.
    """

    flavor: str
    conn: str
    k: int
    d: int
    n_list: list
    radius_rule: dict
    alpha: float = 0.0
    replicates: int = 1
    master_seed: int = 0
    jstar_cap_factor: float = 4.0
    output: str | None = None
    constants_path: str | None = None

    def __post_init__(self):
        self.flavor = normalize_flavor(self.flavor)
        self.conn = normalize_conn(self.conn)
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        kind = self.radius_rule.get("kind")
        if kind not in RULE_KINDS:
            raise ValueError(f"radius_rule.kind must be one of {RULE_KINDS}")

    @classmethod
    def from_json(cls, path) -> "SweepConfig":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(**raw)


@dataclass(frozen=True)
class Cell:
    index: int
    n: float
    r: float
    note: str
    skipped: bool = False


def _rule_radius(kind: str, n: float, m: float, k: int, **kw) -> float:
    log_n = math.log(n)
    if kind == "offset":
        a = kw["a"] if kw.get("a") is not None else float(k)
        num = log_n + a * math.log(log_n) + kw["w"]
    elif kind == "fraction":
        num = kw["factor"] * log_n
    else:
        raise ValueError(kind)
    if num <= 0:
        return -1.0
    return (num / (n * m)) ** (1.0 / kw["d"])


def resolve_cells(cfg: SweepConfig, entry: ConstantsEntry | None = None,
                  rng: np.random.Generator | None = None) -> list[Cell]:
    """Expand the radius rule into concrete (n, r) cells."""
    rule = cfg.radius_rule
    kind = rule["kind"]
    cells: list[Cell] = []
    need_entry = kind in ("schedule", "offset", "fraction")
    if need_entry and entry is None:
        if cfg.constants_path:
            table = load_constants(cfg.constants_path)
            entry = table[constants_key(cfg.flavor, cfg.conn, cfg.k, cfg.d)]
        else:
            raise ValueError("radius rule needs a constants entry")

    solved_vols = None
    idx = 0
    for n in cfg.n_list:
        n = float(n)
        if kind == "fixed":
            for r in rule["r"]:
                r = float(r)
                cells.append(Cell(idx, n, r, "fixed",
                                  skipped=not (0 < r < FACE_RADIUS_GUARD)))
                idx += 1
            continue
        if kind == "schedule":
            c_spec = rule.get("c", "solved")
            if c_spec == "m":
                c_val = entry.m
                note = "c=m"
            elif c_spec == "solved":
                if solved_vols is None:
                    srng = rng if rng is not None else replicate_rng(cfg.master_seed, 2**30, 0)
                    solved_vols = frozen_region_volumes(
                        cfg.flavor, cfg.conn, cfg.k, cfg.d,
                        rule.get("A_samples", 20_000), srng,
                        vol_samples=rule.get("vol_samples", 20_000))
                c_val = solve_c_n(n, entry, alpha=cfg.alpha, volumes=solved_vols).c
                note = f"c=solved:{c_val:.6g}"
            else:
                c_val = float(c_spec)
                note = f"c={c_val:.6g}"
            sched = RadiusSchedule(k=cfg.k, d=cfg.d, alpha=cfg.alpha,
                                   A_vol=entry.A_vol, m=entry.m, c=c_val)
            try:
                r = r_n_of_c(n, sched)
            except ValueError:
                r = -1.0
            cells.append(Cell(idx, n, r, note, skipped=not (0 < r < FACE_RADIUS_GUARD)))
            idx += 1
            continue
        values = rule["w"] if kind == "offset" else rule["factor"]
        for val in values:
            kw = dict(d=cfg.d)
            if kind == "offset":
                kw["a"] = rule.get("a")
                kw["w"] = float(val)
                note = f"w={val:g}"
            else:
                kw["factor"] = float(val)
                note = f"factor={val:g}"
            r = _rule_radius(kind, n, entry.m, cfg.k, **kw)
            cells.append(Cell(idx, n, r, note, skipped=not (0 < r < FACE_RADIUS_GUARD)))
            idx += 1
    return cells


# ---------------------------------------------------------------------------
# Replicate execution
# ---------------------------------------------------------------------------

def _count_one(flavor: str, conn: str, k: int, d: int, n: float, r: float,
               cap: float, master_seed: int, cell_index: int,
               replicate_id: int) -> CountRecord:
    rng = replicate_rng(master_seed, cell_index, replicate_id)
    ps = sample_poisson(n, d, rng, seed=master_seed)
    if k <= 1:
        res = analyze_k1(ps.points, r, k, flavor, conn, cap=cap)
        j, j_star, hist, near = res.j, res.j_star, res.comp_hist, res.near_cap_hits
    else:
        idx = build_index(ps, 2.0 * r)
        sl = enumerate_k_simplices(ps, idx, r, k, flavor)
        hist = component_size_histogram(build_conn_graph(sl, conn, idx))
        det = count_isolated_star_details(ps, idx, r, k, flavor, conn, cap=cap)
        j, j_star, near = det.at_radius, det.count, det.near_cap_hits
    return CountRecord(flavor=flavor, conn=conn, k=k, d=d, n=n, r=r, J=j,
                       J_star=j_star, comp_hist=hist,
                       replicate_id=replicate_id, seed=master_seed,
                       star_cap=cap, star_near_cap=near)


def _worker(args) -> CountRecord:
    return _count_one(*args)


def run_sweep(cfg: SweepConfig, entry: ConstantsEntry | None = None,
              workers: int = 1) -> list[CountRecord]:
    """Run every (cell, replicate) and return records in deterministic order.

    Writes the CSV (exact column schema) plus a sidecar ``<output>.meta.json``
    recording the resolved cells and the birth-radius search caps.
    """
    cells = resolve_cells(cfg, entry)
    tasks = []
    records: list[CountRecord] = []
    skipped_records: dict[tuple[int, int], CountRecord] = {}
    for cell in cells:
        for rep in range(cfg.replicates):
            if cell.skipped:
                skipped_records[(cell.index, rep)] = CountRecord(
                    flavor=cfg.flavor, conn=cfg.conn, k=cfg.k, d=cfg.d,
                    n=cell.n, r=max(cell.r, 0.0), J=-1, J_star=-1, comp_hist={},
                    replicate_id=rep, seed=cfg.master_seed, skipped=True)
            else:
                cap = default_star_cap(cell.r, cfg.jstar_cap_factor)
                tasks.append((cfg.flavor, cfg.conn, cfg.k, cfg.d, cell.n,
                              cell.r, cap, cfg.master_seed, cell.index, rep))

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_worker, tasks, chunksize=8))
    else:
        done = [_count_one(*t) for t in tasks]

    by_key = {(t[8], t[9]): rec for t, rec in zip(tasks, done)}
    by_key.update(skipped_records)
    for cell in cells:
        for rep in range(cfg.replicates):
            records.append(by_key[(cell.index, rep)])

    if cfg.output:
        write_records_csv(records, cfg.output)
        meta = {
            "config": {k: v for k, v in asdict_like(cfg).items()},
            "cells": [asdict(c) for c in cells],
            "star_caps": {str(c.index): default_star_cap(c.r, cfg.jstar_cap_factor)
                          for c in cells if not c.skipped},
        }
        with open(str(cfg.output) + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
    return records


def asdict_like(cfg: SweepConfig) -> dict:
    out = dict(cfg.__dict__)
    out["output"] = str(out["output"]) if out["output"] else None
    return out


def sweep_exit_code(records) -> int:
    """0 when any cell produced counts, 3 when every cell was skipped."""
    live = [r for r in records if not r.skipped]
    return 0 if live else 3


# ---------------------------------------------------------------------------
# Poisson goodness of fit
# ---------------------------------------------------------------------------

@dataclass
class GofReport:
    pmf: dict[int, float]
    mean: float
    tv_distance: float
    dispersion: float
    n_records: int

    def to_json(self) -> str:
        payload = asdict(self)
        payload["pmf"] = {str(k): v for k, v in sorted(self.pmf.items())}
        return json.dumps(payload, indent=2)


def poisson_gof(counts, estimator: str = "empirical_mean",
                alpha: float | None = None) -> GofReport:
    """Total-variation distance of the empirical law to a fitted Poisson.

    ``estimator`` picks the Poisson mean: the empirical mean, or the target
    value exp(-alpha) of the stabilized schedule.
    """
    values = np.asarray([r.J if isinstance(r, CountRecord) else r for r in counts],
                        dtype=np.int64)
    if len(values) < 200:
        raise ValueError("need at least 200 records for a stable fit")
    if estimator == "empirical_mean":
        mean = float(np.mean(values))
    elif estimator == "target":
        if alpha is None:
            raise ValueError("estimator='target' needs alpha")
        mean = math.exp(-alpha)
    else:
        raise ValueError("estimator must be 'empirical_mean' or 'target'")

    top = int(values.max())
    emp = np.bincount(values, minlength=top + 1) / len(values)
    jj = np.arange(top + 1, dtype=float)
    if mean > 0:
        log_fact = np.array([math.lgamma(v + 1) for v in jj])
        poi = np.exp(-mean + jj * math.log(mean) - log_fact)
    else:
        poi = np.where(jj == 0, 1.0, 0.0)
    tail = max(0.0, 1.0 - float(np.sum(poi)))
    tv = 0.5 * (float(np.sum(np.abs(emp - poi))) + tail)
    var = float(np.var(values))
    dispersion = var / mean if mean > 0 else math.inf
    pmf = {int(v): float(p) for v, p in enumerate(emp) if p > 0}
    return GofReport(pmf=pmf, mean=mean, tv_distance=tv, dispersion=dispersion,
                     n_records=len(values))


# ---------------------------------------------------------------------------
# Expectation scan
# ---------------------------------------------------------------------------

@dataclass
class ScanRow:
    n: float
    a: float
    w: float
    r: float
    emp_J: float
    emp_J_se: float
    emp_J_star: float
    emp_J_star_se: float
    mc_J: float
    mc_J_se: float
    mean_components_L2: float
    mean_components_L3: float


def expectation_scan(cfg: SweepConfig, entry: ConstantsEntry,
                     mc_samples: int = 2000, workers: int = 1,
                     rng: np.random.Generator | None = None) -> list[ScanRow]:
    """Sweep offset radii and report empirical vs configuration-integral means."""
    if cfg.radius_rule.get("kind") != "offset":
        raise ValueError("expectation_scan expects an offset radius rule")
    records = run_sweep(cfg, entry, workers=workers)
    cells = resolve_cells(cfg, entry)
    a = cfg.radius_rule.get("a")
    a = float(a) if a is not None else float(cfg.k)
    if rng is None:
        rng = replicate_rng(cfg.master_seed, 2**30, 1)
    rows: list[ScanRow] = []
    per_cell = cfg.replicates
    for cell in cells:
        recs = records[cell.index * per_cell:(cell.index + 1) * per_cell]
        w = float(cell.note.split("=")[1])
        if cell.skipped:
            rows.append(ScanRow(cell.n, a, w, cell.r, *([math.nan] * 8)))
            continue
        js = np.array([rec.J for rec in recs], dtype=float)
        jstars = np.array([rec.J_star for rec in recs], dtype=float)
        l2 = np.array([rec.comp_hist.get(2, 0) for rec in recs], dtype=float)
        l3 = np.array([rec.comp_hist.get(3, 0) for rec in recs], dtype=float)
        mc, mc_se = expected_J_mc(cell.n, cell.r, cfg.flavor, cfg.conn, cfg.k,
                                  cfg.d, mc_samples, rng)
        rows.append(ScanRow(
            n=cell.n, a=a, w=w, r=cell.r,
            emp_J=float(js.mean()), emp_J_se=float(js.std() / math.sqrt(len(js))),
            emp_J_star=float(jstars.mean()),
            emp_J_star_se=float(jstars.std() / math.sqrt(len(jstars))),
            mc_J=mc, mc_J_se=mc_se,
            mean_components_L2=float(l2.mean()), mean_components_L3=float(l3.mean()),
        ))
    return rows


def write_scan_csv(rows: list[ScanRow], path) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        cols = list(ScanRow.__dataclass_fields__)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([getattr(row, c) for c in cols])


# ---------------------------------------------------------------------------
# Scaling probe (second-order radius behavior of the solved rate)
# ---------------------------------------------------------------------------

@dataclass
class ScalingRow:
    n: float
    c_n: float
    residual: float
    r_hat: float
    expression: float  # n r^d m - log n - (1 - a) loglog n


@dataclass
class ScalingReport:
    flavor: str
    conn: str
    a: float
    rows: list[ScalingRow]
    slope: float       # fitted loglog-coefficient of n r^d m - log n
    window: float      # spread of the bounded expression across n
    drift_flag: bool

    def expression_values(self) -> list[float]:
        return [row.expression for row in self.rows]


def scaling_probe(flavor: str, conn: str, d: int, n_list, entry: ConstantsEntry,
                  alpha: float = 0.0, A_samples: int = 40_000,
                  vol_samples: int = 30_000, seed: int = 0,
                  drift_window: float = 3.0) -> ScalingReport:
    """Tabulate the bounded second-order expression along solved rates (k=1).

    The up-connected Cech case carries loglog-coefficient 2, every other
    case 1; the report fits the loglog slope of n r^d m - log n so callers
    can contrast the cases.
    """
    flavor, conn = normalize_flavor(flavor), normalize_conn(conn)
    if entry.k != 1:
        raise ValueError("scaling probe is defined for k = 1")
    a = 2.0 if (flavor == "cech" and conn == "up") else 1.0
    rng = replicate_rng(seed, 2**29, 0)
    vols = frozen_region_volumes(flavor, conn, 1, d, A_samples, rng,
                                 vol_samples=vol_samples)
    rows: list[ScalingRow] = []
    ys = []
    xs = []
    for n in n_list:
        n = float(n)
        sol = solve_c_n(n, entry, alpha=alpha, volumes=vols)
        sched = RadiusSchedule(k=1, d=d, alpha=alpha, A_vol=entry.A_vol,
                               m=entry.m, c=sol.c)
        r_hat = r_n_of_c(n, sched)
        log_n = math.log(n)
        loglog = math.log(log_n)
        y = n * r_hat**d * entry.m - log_n
        rows.append(ScalingRow(n=n, c_n=sol.c, residual=sol.residual_rel,
                               r_hat=r_hat, expression=y - (1.0 - a) * loglog))
        ys.append(y)
        xs.append(loglog)
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(xs) >= 2 else math.nan
    expr = [row.expression for row in rows]
    window = max(expr) - min(expr)
    return ScalingReport(flavor=flavor, conn=conn, a=a, rows=rows, slope=slope,
                         window=window, drift_flag=window > drift_window)
