"""Command-line interface.

Subcommands: sample, count, constants, solve-cn, sweep, gof, scan,
probe-lemma.  Exit codes: 0 success, 2 validation failure, 3 when a sweep
produced only skipped cells.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import asymptotics as asy
from . import experiments as exp
from .fastcount import analyze_k1
from .geometry import normalize_conn, normalize_flavor
from .isolation import CountRecord, default_star_cap, read_records_csv, write_records_csv
from .pointprocess import load_points_csv, replicate_rng, sample_poisson, save_points_csv

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ALL_SKIPPED = 3


def _add_flavor_conn(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flavor", "-p", required=True, help="cech|rips (or C|R)")
    p.add_argument("--conn", "-q", required=True, help="up|down (or U|D)")


def cmd_sample(args) -> int:
    rng = replicate_rng(args.seed, 0, 0)
    ps = sample_poisson(args.n, args.d, rng, seed=args.seed)
    save_points_csv(ps, args.out)
    print(f"wrote {len(ps)} points to {args.out}")
    return EXIT_OK


def cmd_count(args) -> int:
    if args.points:
        ps = load_points_csv(args.points, intensity_n=args.n or 0.0, seed=args.seed)
    else:
        if not args.n:
            print("count: need --points or --n", file=sys.stderr)
            return EXIT_VALIDATION
        rng = replicate_rng(args.seed, 0, 0)
        ps = sample_poisson(args.n, args.d, rng, seed=args.seed)
    cap = default_star_cap(args.r, args.cap_factor)
    res = analyze_k1(ps.points, args.r, args.k, args.flavor, args.conn, cap=cap)
    rec = CountRecord(flavor=normalize_flavor(args.flavor),
                      conn=normalize_conn(args.conn), k=args.k, d=ps.d,
                      n=ps.intensity_n or float(len(ps)), r=args.r, J=res.j,
                      J_star=res.j_star, comp_hist=res.comp_hist,
                      replicate_id=0, seed=args.seed, star_cap=cap,
                      star_near_cap=res.near_cap_hits)
    if args.out:
        write_records_csv([rec], args.out)
    print(",".join(str(v) for v in rec.csv_row()))
    return EXIT_OK


def cmd_constants(args) -> int:
    rng = replicate_rng(args.seed, 1, 0)
    entries = []
    try:
        existing = asy.load_constants(args.out)
    except (FileNotFoundError, json.JSONDecodeError):
        existing = {}
    for fl in args.flavors.split(","):
        for cn in args.conns.split(","):
            entry = asy.constants(fl, cn, args.k, args.d, rng=rng,
                                  budget=args.budget, A_samples=args.A_samples)
            existing[entry.key] = entry
            entries.append(entry)
            print(f"{entry.key}: m={entry.m:.6g} ({entry.m_provenance}) "
                  f"M={entry.M:.6g} A={entry.A_vol:.6g}")
    asy.save_constants(existing.values(), args.out)
    return EXIT_OK


def cmd_solve_cn(args) -> int:
    table = asy.load_constants(args.constants)
    entry = table[asy.constants_key(args.flavor, args.conn, args.k, args.d)]
    rng = replicate_rng(args.seed, 2, 0)
    vols = asy.frozen_region_volumes(entry.flavor, entry.conn, entry.k, entry.d,
                                     args.A_samples, rng,
                                     vol_samples=args.vol_samples)
    for n in args.n:
        sol = asy.solve_c_n(float(n), entry, alpha=args.alpha, volumes=vols)
        print(f"n={n:g} c_n={sol.c:.8f} residual={sol.residual_rel:.3e} "
              f"bracket=({sol.lo:.6g},{sol.hi:.6g})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = exp.SweepConfig.from_json(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out:
        cfg.output = args.out
    records = exp.run_sweep(cfg, workers=args.workers)
    code = exp.sweep_exit_code(records)
    live = sum(1 for r in records if not r.skipped)
    print(f"{len(records)} records ({live} live) -> {cfg.output}")
    return code


def cmd_gof(args) -> int:
    records = read_records_csv(args.records)
    live = [r for r in records if not r.skipped]
    try:
        report = exp.poisson_gof(live, estimator=args.estimator, alpha=args.alpha)
    except ValueError as err:
        print(f"gof: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    print(report.to_json())
    return EXIT_OK


def cmd_scan(args) -> int:
    cfg = exp.SweepConfig.from_json(args.config)
    if args.seed is not None:
        cfg.master_seed = args.seed
    table = asy.load_constants(cfg.constants_path)
    entry = table[asy.constants_key(cfg.flavor, cfg.conn, cfg.k, cfg.d)]
    rows = exp.expectation_scan(cfg, entry, mc_samples=args.mc_samples,
                                workers=args.workers)
    exp.write_scan_csv(rows, args.out)
    print(f"wrote {len(rows)} scan rows to {args.out}")
    return EXIT_OK


def cmd_probe_lemma(args) -> int:
    rng = replicate_rng(args.seed, 3, 0)
    probe = asy.probe_separation(args.k, args.d, args.j, args.delta,
                                 trials=args.trials, rng=rng,
                                 mc_samples=args.mc_samples)
    print(json.dumps({
        "k": probe.k, "d": probe.d, "j": probe.j, "delta": probe.delta,
        "min_excess_volume": probe.min_value, "stderr": probe.stderr,
        "feasible_trials": probe.feasible_trials,
    }, indent=2))
    return EXIT_OK if probe.min_value > 0 else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="torusfaces",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a Poisson configuration to CSV")
    p.add_argument("--n", type=float, required=True)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("count", help="count isolated k-faces of one realization")
    _add_flavor_conn(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--n", type=float)
    p.add_argument("--points", help="CSV of points (overrides --n)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap-factor", type=float, default=4.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("constants", help="build/refresh the constants table")
    p.add_argument("--flavors", default="cech,rips")
    p.add_argument("--conns", default="up,down")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--budget", type=int, default=3_000_000)
    p.add_argument("--A-samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("solve-cn", help="solve the implicit rate equation")
    _add_flavor_conn(p)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--n", type=float, nargs="+", required=True)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--A-samples", type=int, default=20_000)
    p.add_argument("--vol-samples", type=int, default=20_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constants", required=True)
    p.set_defaults(func=cmd_solve_cn)

    p = sub.add_parser("sweep", help="run a replicated sweep from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--out", default=None, help="override output path")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gof", help="Poisson goodness of fit over sweep records")
    p.add_argument("--records", required=True)
    p.add_argument("--estimator", default="empirical_mean",
                   choices=["empirical_mean", "target"])
    p.add_argument("--alpha", type=float, default=None)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("scan", help="expectation scan over radius offsets")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mc-samples", type=int, default=2000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("probe-lemma", help="search the excess-volume separation bound")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--mc-samples", type=int, default=40_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_probe_lemma)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as err:
        return EXIT_VALIDATION if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
