"""Command line entry point: ``momentsketch <command> [options]``.

Commands: gen, ingest, query quantile, query threshold, window, eval, bench.
Solver settings come from ``--config`` (a JSON object with any of ``k``,
``kappa_max``, ``tol``, ``nc``, ``cell_size``, ``seed``, ``threads``) and are
overridden by explicit flags.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from ..errors import SketchError
from ..maxent import PHIS, SolverConfig
from . import bench as bench_mod
from . import datagen
from .cube import CubeStore, ingest, query_quantile, query_threshold_groups
from .evaluate import evaluate
from .window import PaneSeries, query_sliding_window

DEFAULTS = {"k": 10, "kappa_max": 1e4, "tol": 1e-9, "nc": 128, "cell_size": None,
            "seed": None, "threads": 1, "format": "table"}


def _csv_list(text):
    return [s for s in text.split(",") if s] if text else []


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("solver and output")
    g.add_argument("--config", help="JSON file with default settings")
    g.add_argument("--k", type=int, help="sketch order (default 10)")
    g.add_argument("--kappa-max", type=float, help="condition number limit (default 1e4)")
    g.add_argument("--tol", type=float, help="moment-matching tolerance (default 1e-9)")
    g.add_argument("--nc", type=int, help="Chebyshev quadrature degree (default 128)")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int, help="merge shards (default 1)")
    g.add_argument("--format", choices=("table", "csv", "json"))


def _settings(args) -> dict:
    out = dict(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config) as f:
            cfg = json.load(f)
        unknown = set(cfg) - set(DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        out.update(cfg)
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    return out


def _solver(s: dict) -> SolverConfig:
    nc = int(s["nc"])
    return SolverConfig(tol=float(s["tol"]), kappa_max=float(s["kappa_max"]), n_c=nc,
                        max_n_c=max(nc, SolverConfig.max_n_c))


def emit(rows, fmt: str, out=None):
    """Write a list of flat dicts as an aligned table, CSV or JSON."""
    out = out or sys.stdout
    rows = list(rows)
    if fmt == "json":
        json.dump(rows, out, indent=1, default=float)
        out.write("\n")
        return
    if not rows:
        return
    cols = list(rows[0])
    if fmt == "csv":
        w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return

    def cell(v):
        if isinstance(v, float):
            return f"{v:.6g}"
        return str(v)

    table = [[cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(t[i]) for t in table)) for i, c in enumerate(cols)]
    out.write("  ".join(c.rjust(w) for c, w in zip(cols, widths)) + "\n")
    for t in table:
        out.write("  ".join(v.rjust(w) for v, w in zip(t, widths)) + "\n")


def _parse_where(items):
    where = {}
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"--where expects dim=value[|value...], got {item!r}")
        k, v = item.split("=", 1)
        where[k] = v.split("|")
    return where or None


# commands ------------------------------------------------------------------
def cmd_gen(args, s):
    params = {"lam": args.lam, "shape": args.shape, "outlier_mean": args.outlier_mean,
              "fraction": args.fraction, "cardinality": args.cardinality}
    rng = np.random.default_rng(s["seed"])
    if args.dataset == "spikes":
        ts, vals = datagen.spike_workload(seed=rng)
        text = datagen.to_csv(vals, {"time": ts}, args.metric)
    else:
        vals = datagen.generate(args.dataset, args.n, seed=rng, **params)
        dims = {}
        for spec in _csv_list(args.dims):
            name, _, card = spec.partition(":")
            dims[name] = rng.integers(0, int(card or 10), size=vals.shape[0])
        text = datagen.to_csv(vals, dims, args.metric)
    if args.out:
        with open(args.out, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_ingest(args, s):
    store, report = ingest(args.csv, _csv_list(args.dims), args.metric, int(s["k"]),
                           s["cell_size"])
    store.save(args.store)
    emit([{"rows": report.rows, "bad_rows": report.bad_rows, "cells": report.cells,
           "store": args.store}], s["format"])


def cmd_query_quantile(args, s):
    store = CubeStore.load(args.store)
    phis = args.phi or [0.5]
    ans = query_quantile(store, _parse_where(args.where), phis, _solver(s),
                         round_integers=args.round_integers, threads=int(s["threads"]))
    emit(ans.rows(), s["format"])
    if not ans.converged:
        print("warning: solver did not converge; estimates are midpoints of guaranteed intervals", file=sys.stderr)


def cmd_query_threshold(args, s):
    store = CubeStore.load(args.store)
    if args.threshold is None and args.global_phi is None:
        raise SystemExit("give --threshold or --global-phi")
    phi = (args.phi or [0.5])[0]
    ans = query_threshold_groups(store, _csv_list(args.group_by), phi, args.threshold,
                                 args.global_phi, _solver(s))
    rows = [{"group": "|".join(g.key), "count": g.count,
             "decision": "indeterminate" if g.outcome.indeterminate else g.qualifies,
             "resolved_by": g.outcome.resolved_by}
            for g in ans.groups if args.all or g.qualifies or g.outcome.indeterminate]
    emit(rows, s["format"])
    fr = ans.stats.fractions()
    print(f"threshold t={ans.t:.6g}; {len(ans.qualifying)} of {len(ans.groups)} groups qualify; "
          + ", ".join(f"{k}={v:.3f}" for k, v in fr.items()), file=sys.stderr)


def cmd_window(args, s):
    with open(args.csv, newline="") as f:
        reader = csv.DictReader(f)
        ts, vals = [], []
        for row in reader:
            try:
                ts.append(float(row[args.time_col]))
                vals.append(float(row[args.metric]))
            except (TypeError, ValueError, KeyError):
                continue
    panes = PaneSeries.from_values(ts, vals, args.pane_width, int(s["k"]), origin=args.origin)
    phi = (args.phi or [0.99])[0]
    res = query_sliding_window(panes, args.window, phi, args.threshold, _solver(s))
    rows = [{"start": r.start, "end": r.end, "count": r.count,
             "flagged": "indeterminate" if r.indeterminate else r.flagged}
            for r in res if args.all or r.flagged or r.indeterminate]
    emit(rows, s["format"])


def cmd_eval(args, s):
    if args.csv:
        with open(args.csv, newline="") as f:
            data = np.array([float(r[args.metric]) for r in csv.DictReader(f)])
    else:
        data = datagen.generate(args.dataset, args.n, seed=s["seed"], lam=args.lam,
                                shape=args.shape, outlier_mean=args.outlier_mean,
                                fraction=args.fraction, cardinality=args.cardinality)
    rep = evaluate(data, int(s["k"]), _solver(s), s["cell_size"], PHIS,
                   round_integers=args.round_integers)
    emit(rep.rows(), s["format"])
    print(f"eps_avg={rep.eps_avg:.6g} eps_max={rep.eps_max:.6g} converged={rep.converged} "
          f"n_merge={rep.n_merge} t_merge={rep.t_merge:.3g}s t_est={rep.t_est:.3g}s",
          file=sys.stderr)


def cmd_bench(args, s):
    k = int(s["k"])
    seed = s["seed"] or 0
    rows = []
    if args.what in ("merge", "all"):
        rows.append({"metric": "merge_latency_s", "value": bench_mod.merge_latency(args.cells, k, seed=seed)})
        rows.append({"metric": "object_merge_latency_s", "value": bench_mod.object_merge_latency(order=k, seed=seed)})
    if args.what in ("solve", "all"):
        lat = bench_mod.solve_latency(k, config=_solver(s), seed=seed)
        rows += [{"metric": f"{name}_s", "value": v} for name, v in lat.items()]
    if args.what in ("sweep", "all"):
        sw = bench_mod.n_merge_sweep(order=k, config=_solver(s), seed=seed)
        rows += [{"metric": f"t_query_s@{r['n_merge']}", "value": r["t_query"]} for r in sw.rows()]
        rows += [{"metric": "t_merge_fit_s", "value": sw.slope},
                 {"metric": "t_est_fit_s", "value": sw.intercept},
                 {"metric": "r2", "value": sw.r2}]
    if args.what in ("parallel", "all"):
        threads = [int(t) for t in _csv_list(args.shards)]
        for r in bench_mod.parallel_merge(args.cells, threads, k, seed=seed):
            rows.append({"metric": f"merges_per_s@{r['threads']}", "value": r["merges_per_sec"]})
            rows.append({"metric": f"max_rel_dev@{r['threads']}", "value": r["max_rel_dev"]})
    emit(rows, s["format"])


def _data_args(p):
    p.add_argument("--dataset", default="exponential",
                   choices=datagen.DATASETS + ("spikes",))
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--shape", type=float, default=1.0)
    p.add_argument("--outlier-mean", type=float, default=10.0)
    p.add_argument("--fraction", type=float, default=0.01)
    p.add_argument("--cardinality", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="momentsketch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    _data_args(p)
    p.add_argument("--dims", help="extra random dimension columns, e.g. region:5,host:40")
    p.add_argument("--metric", default="value")
    p.add_argument("--out")
    _common(p)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("ingest", help="aggregate a CSV into a cube directory")
    p.add_argument("csv")
    p.add_argument("--store", required=True)
    p.add_argument("--dims", default="", help="comma-separated dimension columns")
    p.add_argument("--metric", default="value")
    p.add_argument("--cell-size", type=int, help="rows per sequence cell")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    q = sub.add_parser("query", help="query a cube").add_subparsers(dest="query", required=True)
    p = q.add_parser("quantile", help="merged-selection quantiles with error bounds")
    p.add_argument("--store", required=True)
    p.add_argument("--where", action="append", help="dim=value[|value...], repeatable")
    p.add_argument("--phi", type=float, nargs="+")
    p.add_argument("--round-integers", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_query_quantile)

    p = q.add_parser("threshold", help="groups whose phi-quantile exceeds a threshold")
    p.add_argument("--store", required=True)
    p.add_argument("--group-by", required=True, help="comma-separated dimensions")
    p.add_argument("--phi", type=float, nargs="+")
    p.add_argument("--threshold", type=float)
    p.add_argument("--global-phi", type=float, help="use this quantile of all data as threshold")
    p.add_argument("--all", action="store_true", help="list non-qualifying groups too")
    _common(p)
    p.set_defaults(func=cmd_query_threshold)

    p = sub.add_parser("window", help="flag sliding windows whose phi-quantile exceeds a threshold")
    p.add_argument("csv")
    p.add_argument("--time-col", default="time")
    p.add_argument("--metric", default="value")
    p.add_argument("--pane-width", type=float, required=True)
    p.add_argument("--window", type=float, required=True, help="window width (multiple of pane width)")
    p.add_argument("--origin", type=float)
    p.add_argument("--phi", type=float, nargs="+")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--all", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_window)

    p = sub.add_parser("eval", help="accuracy on a CSV column or a synthetic dataset")
    p.add_argument("--csv")
    p.add_argument("--metric", default="value")
    p.add_argument("--cell-size", type=int)
    p.add_argument("--round-integers", action="store_true")
    _data_args(p)
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="merge, solve and query-time benchmarks")
    p.add_argument("--what", choices=("merge", "solve", "sweep", "parallel", "all"), default="all")
    p.add_argument("--cells", type=int, default=1_000_000)
    p.add_argument("--shards", default="1,2,4,8")
    _common(p)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    s = _settings(args)
    try:
        args.func(args, s)
    except (SketchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
