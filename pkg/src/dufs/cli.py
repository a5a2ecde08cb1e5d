"""Command-line interface: ``dufs {load,lcc,gen,run,grid,calibrate,analytic,replay}``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional

from . import __version__
from .analysis import AnalysisError, analytic_edge_sampling_nrmse, analytic_node_sampling_nrmse
from .estimate import NoDataError, estimate, format_label, label_sort_key, write_estimates_csv
from .experiment import (
    ESTIMATORS,
    LABEL_KINDS,
    METHODS,
    ExperimentConfig,
    calibrate_durw_jump_weight,
    config_from_mapping,
    expand_preset,
    load_graph,
    parse_generator,
    read_config_file,
    run_experiment,
    run_grid,
    walk_config,
)
from .graph import (
    GenerationError,
    GraphError,
    ParseError,
    generate_powerlaw_digraph,
    ground_truth,
    largest_scc,
    load_snap_edgelist,
    save_edgelist,
    save_remap,
)
from .walk import ConfigError, SampleLog

log = logging.getLogger("dufs")

EXIT_CONFIG = 2
EXIT_DATA = 3

# flags that map one-to-one onto ExperimentConfig fields
_EXPERIMENT_FLAGS = (
    "graph", "generator", "symmetrize", "lcc", "attributes", "scenario", "method", "estimator",
    "budget_fraction", "budget", "b", "c", "w", "placement", "runs", "seed", "label_kind",
    "top_fraction", "workers", "save_logs",
)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so a config file value survives unless a flag is given
    p.add_argument("--config", help="INI file; [experiment] holds shared keys")
    p.add_argument("--graph", help="SNAP-style edge list")
    p.add_argument("--generator", help="e.g. powerlaw:n=1000,beta=2,max_degree=100,seed=1 or cliques:20,200")
    p.add_argument("--symmetrize", action="store_const", const=True)
    p.add_argument("--lcc", action="store_const", const=True, help="restrict to the largest SCC")
    p.add_argument("--attributes", help="node attribute file")
    p.add_argument("--scenario", choices=("visible", "invisible"))
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--budget-fraction", type=float)
    p.add_argument("--budget", type=float, help="absolute budget, overrides --budget-fraction")
    p.add_argument("-b", type=float, help="budget per walker")
    p.add_argument("-c", type=float, help="cost of a uniform draw")
    p.add_argument("-w", type=float, help="jump weight")
    p.add_argument("--placement", choices=("uniform", "prop", "inv"))
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--label-kind", choices=LABEL_KINDS)
    p.add_argument("--top-fraction", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--save-logs", action="store_const", const=True)
    p.add_argument("--out", required=True, help="output directory")


def _experiment_config(args) -> tuple:
    shared, sections = ({}, [])
    if args.config:
        shared, sections = read_config_file(args.config)
    flags = {k: getattr(args, k) for k in _EXPERIMENT_FLAGS if getattr(args, k, None) is not None}
    base = ExperimentConfig()
    merged = dict(shared)
    if flags.get("graph") or flags.get("generator"):
        merged.pop("graph", None)
        merged.pop("generator", None)
    merged.update(flags)
    if not merged.get("graph") and not merged.get("generator"):
        merged["generator"] = "powerlaw:n=1000,beta=2,max_degree=100,seed=1"
    cfg = config_from_mapping(merged, base)
    cfg = replace(cfg, output=args.out)
    return cfg, sections, flags


def cmd_load(args) -> int:
    g = load_snap_edgelist(args.path, symmetrize=args.symmetrize)
    if args.lcc:
        g = largest_scc(g)
    _write_graph(g, args.out)
    return 0


def cmd_lcc(args) -> int:
    g = largest_scc(load_snap_edgelist(args.path, symmetrize=args.symmetrize))
    _write_graph(g, args.out)
    return 0


def cmd_gen(args) -> int:
    g = generate_powerlaw_digraph(args.n, args.beta, args.max_degree, args.seed)
    _write_graph(g, args.out)
    return 0


def _write_graph(g, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_edgelist(g, os.path.join(out_dir, "edges.tsv"))
    save_remap(g, os.path.join(out_dir, "remap.tsv"))
    summary = {"nodes": g.node_count, "edges": g.edge_count, "digest": g.digest()}
    with open(os.path.join(out_dir, "graph.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"{g.node_count} nodes, {g.edge_count} edges -> {out_dir}")


def cmd_run(args) -> int:
    cfg, _, _ = _experiment_config(args)
    res = run_experiment(cfg)
    if res.report is None:
        print(f"only {len(res.estimates)} of {cfg.runs} runs completed", file=sys.stderr)
        return EXIT_DATA
    rep = res.report
    print(f"{cfg.label}: R={rep.run_count} head={rep.head_mean:.4g} tail={rep.tail_mean:.4g} "
          f"failed={len(res.failures)} -> {args.out}")
    return 0


def cmd_grid(args) -> int:
    base, sections, flags = _experiment_config(args)
    if args.preset:
        cfgs = expand_preset(args.preset, base)
        cfgs.insert(0, replace(base, name="baseline"))
    elif sections:
        cfgs = []
        for name, values in sections:
            # a section overrides shared keys; explicit flags override both
            cfg = config_from_mapping({**values, **flags}, base)
            cfgs.append(replace(cfg, name=name, output=args.out))
    else:
        raise ConfigError("grid needs --preset or config sections")
    report = run_grid(cfgs, baseline=0, output=args.out)
    for col in report.columns:
        vals = [report.nrmse[col][k] for k in report.labels if k in report.nrmse[col]]
        print(f"{col}: mean NRMSE {sum(vals) / max(1, len(vals)):.4g}")
    return 0


def cmd_calibrate(args) -> int:
    cfg, _, _ = _experiment_config(args)
    cfg.validate()
    graph = load_graph(cfg)
    wp, target, got = calibrate_durw_jump_weight(graph, walk_config(cfg, graph), runs=cfg.runs, seed=cfg.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "calibration.json"), "w") as fh:
        json.dump({"durw_jump_weight": wp, "dufs_mean_draws": target, "durw_mean_draws": got}, fh, indent=2)
        fh.write("\n")
    print(f"w' = {wp:.6g} (DUFS {target:.3f} draws, DURW {got:.3f})")
    return 0


def cmd_analytic(args) -> int:
    if args.graph:
        g = load_snap_edgelist(args.graph, symmetrize=args.symmetrize)
    else:
        g = parse_generator(args.generator)
    truth = ground_truth(g, args.label_kind)
    budget = args.budget if args.budget is not None else int(args.budget_fraction * g.node_count)
    node = analytic_node_sampling_nrmse(truth, budget)
    edge = analytic_edge_sampling_nrmse(truth, budget)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["label", "truth", "node_sampling_nrmse", "edge_sampling_nrmse"])
        for k in sorted(node.per_degree, key=label_sort_key):
            w.writerow([format_label(k), repr(truth.label_mass[k]), repr(node.per_degree[k]),
                        repr(edge.per_degree.get(k, float("nan")))])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_replay(args) -> int:
    with open(args.log) as fh:
        sample_log = SampleLog.from_text(fh.read())
    est = estimate(sample_log, args.estimator, args.label_kind, mean_degree=args.mean_degree)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        write_estimates_csv([est], out)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dufs", description="Directed unbiased frontier sampling experiments")
    p.add_argument("--version", action="version", version=f"dufs {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("load", help="parse an edge list and write a remapped copy")
    s.add_argument("path")
    s.add_argument("--symmetrize", action="store_true")
    s.add_argument("--lcc", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_load)

    s = sub.add_parser("lcc", help="extract the largest strongly connected component")
    s.add_argument("path")
    s.add_argument("--symmetrize", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_lcc)

    s = sub.add_parser("gen", help="generate a power-law directed graph")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--beta", type=float, required=True)
    s.add_argument("--max-degree", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("run", help="run one experiment")
    _add_experiment_flags(s)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("grid", help="run several configs and compare NRMSE")
    _add_experiment_flags(s)
    s.add_argument("--preset", choices=("wb-grid", "table2-head", "table2-tail"))
    s.set_defaults(func=cmd_grid)

    s = sub.add_parser("calibrate", help="match DURW's uniform draws to a DUFS config")
    _add_experiment_flags(s)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("analytic", help="closed-form NRMSE of node and edge sampling")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph")
    src.add_argument("--generator")
    s.add_argument("--symmetrize", action="store_true")
    s.add_argument("--label-kind", choices=("out-degree", "in-degree", "degree"), default="out-degree")
    s.add_argument("--budget-fraction", type=float, default=0.1)
    s.add_argument("--budget", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_analytic)

    s = sub.add_parser("replay", help="re-estimate from a saved sample log")
    s.add_argument("log")
    s.add_argument("--estimator", choices=ESTIMATORS, default="hybrid")
    s.add_argument("--label-kind", choices=LABEL_KINDS, default="out-degree")
    s.add_argument("--mean-degree", type=float)
    s.add_argument("--out")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, GraphError, GenerationError, NoDataError, AnalysisError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
