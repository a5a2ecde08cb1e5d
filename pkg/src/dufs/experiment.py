"""Experiment orchestration: configs, replications, parameter grids, result files."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .analysis import (
    NrmseReport,
    empirical_nrmse,
    joint_error_grid,
    top_decile_attribute_task,
    write_grid_csv,
    write_plotspec,
)
from .estimate import Estimate, estimate, format_label, label_sort_key, restrict_to_top, write_estimates_csv
from .graph import (
    DirectedGraph,
    degree_threshold_top_fraction,
    from_edge_pairs,
    generate_powerlaw_digraph,
    ground_truth,
    largest_scc,
    load_attributes,
    load_snap_edgelist,
)
from .walk import ConfigError, SampleLog, WalkConfig, run_method

METHODS = ("dufs", "fs", "durw", "single-rw", "multi-rw", "uniform-node")
ESTIMATORS = ("edge", "hybrid", "hybrid-norule", "hybrid-mle", "hybrid-em", "mvue")
LABEL_KINDS = ("out-degree", "in-degree", "joint-degree", "degree", "attribute")

# recommended DUFS settings by target and cost: (target, c, scenario) -> [(w, b), ...]
GUIDELINES = {
    ("head", 1, "visible"): [(10.0, 1.0)],
    ("head", 1, "invisible"): [(10.0, 1.0)],
    ("head", 10, "visible"): [(1.0, 100.0)],
    ("head", 10, "invisible"): [(10.0, 1.0)],
    ("tail", 1, "visible"): [(1.0, 10.0)],
    ("tail", 1, "invisible"): [(1.0, 10.0), (1.0, 100.0), (1.0, 1000.0)],
    ("tail", 10, "visible"): [(0.1, 1000.0)],
    ("tail", 10, "invisible"): [(0.1, 10.0), (0.1, 100.0), (0.1, 1000.0)],
}
WB_GRID_W = (0.1, 1.0, 10.0)
WB_GRID_B = (1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a graph, a sampler, an estimator and R replications.

    ``graph`` is an edge-list path; ``generator`` a spec such as
    ``powerlaw:n=1000,beta=2,max_degree=100,seed=1`` or ``cliques:20,200``.
    ``budget`` (absolute) overrides ``budget_fraction * |V|``.
    ``top_fraction`` switches to the attribute task restricted to the
    highest-degree nodes.
    """

    graph: Optional[str] = None
    generator: Optional[str] = None
    symmetrize: bool = False
    lcc: bool = False
    attributes: Optional[str] = None
    scenario: str = "visible"
    method: str = "dufs"
    estimator: str = "hybrid"
    budget_fraction: float = 0.1
    budget: Optional[float] = None
    b: float = 10.0
    c: float = 1.0
    w: float = 1.0
    placement: str = "uniform"
    runs: int = 200
    seed: int = 0
    label_kind: str = "out-degree"
    top_fraction: Optional[float] = None
    output: Optional[str] = None
    workers: Optional[int] = None
    save_logs: bool = False
    name: Optional[str] = None

    def validate(self) -> None:
        if self.b < 0 or self.w < 0 or self.c < 1:
            raise ConfigError("need b >= 0, w >= 0, c >= 1")
        if not 0 < self.budget_fraction <= 1:
            raise ConfigError("budget_fraction must lie in (0, 1]")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.label_kind not in LABEL_KINDS:
            raise ConfigError(f"unknown label kind {self.label_kind!r}")
        if self.scenario not in ("visible", "invisible"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.placement not in ("uniform", "prop", "inv"):
            raise ConfigError(f"unknown placement {self.placement!r}")
        if (self.graph is None) == (self.generator is None):
            raise ConfigError("give exactly one of graph / generator")
        if self.estimator == "mvue" and self.label_kind != "degree":
            raise ConfigError("mvue requires label_kind = degree")
        if self.estimator in ("hybrid-mle", "hybrid-em") and self.label_kind == "attribute":
            raise ConfigError("likelihood estimators need single-label kinds")
        if self.estimator != "edge" and self.placement != "uniform":
            raise ConfigError("hybrid estimators need uniform placements; use the edge estimator")
        if self.method in ("fs", "single-rw", "multi-rw") and self.scenario != "visible":
            raise ConfigError(f"{self.method} runs with visible in-edges only")
        no_walks = self.method == "uniform-node" or (self.method in ("dufs", "fs") and self.b == 0)
        if no_walks and self.estimator == "edge":
            raise ConfigError("the edge estimator needs walk samples (b > 0)")
        if no_walks and self.estimator == "hybrid":
            raise ConfigError("the variance-reduction rule zeroes every label without walk samples; use hybrid-norule")
        if self.top_fraction is not None:
            if not 0 < self.top_fraction <= 1:
                raise ConfigError("top_fraction must lie in (0, 1]")
            if self.label_kind != "attribute":
                raise ConfigError("top_fraction applies to attribute labels")
            if self.estimator not in ("edge", "hybrid", "hybrid-norule"):
                raise ConfigError("top-degree attribute task supports edge / hybrid / hybrid-norule")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def identity(self) -> dict:
        """Config fields that determine results (not output path or parallelism)."""
        d = dataclasses.asdict(self)
        for k in ("output", "workers", "save_logs", "name"):
            d.pop(k)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.identity(), sort_keys=True).encode()).hexdigest()

    @property
    def label(self) -> str:
        return self.name or f"{self.method}-{self.estimator}-w{self.w:g}-b{self.b:g}-c{self.c:g}-{self.scenario}"


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, value):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    if not isinstance(value, str):
        return value
    t = str(_FIELD_TYPES[key])
    v = value.strip()
    if "Optional" in t and v.lower() in ("", "none"):
        return None
    if "bool" in t:
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {value!r}")
    try:
        if "int" in t:
            return int(v)
        if "float" in t:
            return float(v)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r}") from None
    return v


def config_from_mapping(values: Dict, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    base = base or ExperimentConfig(generator="powerlaw:n=1000,beta=2,max_degree=100,seed=1")
    updates = {k.replace("-", "_"): _coerce(k.replace("-", "_"), v) for k, v in values.items() if v is not None}
    return replace(base, **updates)


def read_config_file(path) -> Tuple[Dict, List[Tuple[str, Dict]]]:
    """``[experiment]`` holds shared keys; every other section is one run of a grid."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    shared = dict(parser["experiment"]) if parser.has_section("experiment") else {}
    runs = [(name, dict(parser[name])) for name in parser.sections() if name != "experiment"]
    return shared, runs


def parse_generator(spec: str) -> DirectedGraph:
    kind, _, args = spec.partition(":")
    if kind == "powerlaw":
        kw = dict(x.split("=") for x in args.split(",") if x)
        return generate_powerlaw_digraph(
            int(kw.get("n", 1000)), float(kw.get("beta", 2.0)), int(kw.get("max_degree", 100)), int(kw.get("seed", 0))
        )
    if kind == "cliques":
        sizes = [int(x) for x in args.split(",") if x]
        return disjoint_cliques(sizes)
    raise ConfigError(f"unknown generator {spec!r}")


def disjoint_cliques(sizes: Sequence[int]) -> DirectedGraph:
    """Symmetric directed cliques, one per size, with no edges between them."""
    pairs = []
    offset = 0
    for k in sizes:
        if k < 2:
            raise ConfigError("clique size must be >= 2")
        pairs += [(offset + i, offset + j) for i in range(k) for j in range(k) if i != j]
        offset += k
    return from_edge_pairs(pairs)


def load_graph(cfg: ExperimentConfig) -> DirectedGraph:
    g = load_snap_edgelist(cfg.graph, cfg.symmetrize) if cfg.graph else parse_generator(cfg.generator)
    if cfg.attributes:
        g = load_attributes(g, cfg.attributes)
    if cfg.lcc:
        g = largest_scc(g)
    return g


def budget_for(cfg: ExperimentConfig, graph: DirectedGraph) -> float:
    if cfg.budget is not None:
        return float(cfg.budget)
    return float(math.floor(cfg.budget_fraction * graph.node_count))


def walk_config(cfg: ExperimentConfig, graph: DirectedGraph) -> WalkConfig:
    return WalkConfig(
        budget=budget_for(cfg, graph),
        per_walker=cfg.b,
        uniform_cost=cfg.c,
        jump_weight=cfg.w,
        scenario=cfg.scenario,
        placement=cfg.placement,
    )


_GRAPH: Optional[DirectedGraph] = None


def _init_worker(graph: DirectedGraph) -> None:
    global _GRAPH
    _GRAPH = graph


def _run_in_worker(args):
    cfg, run, mean_degree, threshold = args
    return _one_run(_GRAPH, cfg, run, mean_degree, threshold)


def _one_run(graph, cfg: ExperimentConfig, run: int, mean_degree: float, threshold: Optional[int]):
    try:
        log = run_method(cfg.method, graph, walk_config(cfg, graph), cfg.seed + run)
        est = estimate(log, cfg.estimator, cfg.label_kind, mean_degree=mean_degree, min_degree=threshold)
        if threshold is not None:
            est = restrict_to_top(est)
        return run, est, (log.to_text() if cfg.save_logs else None), log.uniform_draws(), None
    except Exception as exc:  # recorded in the failure manifest
        return run, None, None, None, f"{type(exc).__name__}: {exc}"


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    estimates: List[Estimate]
    run_ids: List[int]
    report: Optional[NrmseReport]
    failures: List[Tuple[int, str]] = field(default_factory=list)
    uniform_draws: List[int] = field(default_factory=list)
    grid: Optional[Dict] = None
    threshold: Optional[int] = None
    files: Dict[str, str] = field(default_factory=dict)


def run_replications(cfg: ExperimentConfig, graph: DirectedGraph) -> ExperimentResult:
    cfg.validate()
    wc = walk_config(cfg, graph)
    if cfg.method in ("durw", "single-rw"):
        if wc.budget <= wc.uniform_cost:
            raise ConfigError(f"{cfg.method} needs budget > c")
        wc = replace(wc, walkers=1)
    wc.validate()
    if cfg.label_kind == "attribute" and graph.node_labels is None:
        raise ConfigError("attribute labels need an attributes file")
    truth = ground_truth(graph, cfg.label_kind)
    threshold = None
    if cfg.top_fraction is not None:
        threshold = degree_threshold_top_fraction(graph, cfg.top_fraction)
    mean_degree = truth.mean_undirected_degree
    jobs = [(cfg, r, mean_degree, threshold) for r in range(cfg.runs)]
    workers = cfg.workers or os.cpu_count() or 1
    if workers == 1 or cfg.runs == 1:
        results = [_one_run(graph, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(graph,)) as ex:
            results = list(ex.map(_run_in_worker, jobs, chunksize=max(1, cfg.runs // (4 * workers))))
    results.sort(key=lambda x: x[0])

    ok = [x for x in results if x[4] is None]
    res = ExperimentResult(
        config=cfg,
        estimates=[x[1] for x in ok],
        run_ids=[x[0] for x in ok],
        report=None,
        failures=[(x[0], x[4]) for x in results if x[4] is not None],
        uniform_draws=[x[3] for x in ok],
        threshold=threshold,
    )
    res._logs = {x[0]: x[2] for x in ok if x[2] is not None}
    if len(res.estimates) >= 2:
        if threshold is not None:
            res.report = top_decile_attribute_task(res.estimates, graph, threshold, budget_for(cfg, graph))
        else:
            res.report = empirical_nrmse(res.estimates, truth)
        res.report.estimator_id = cfg.estimator
        if cfg.label_kind == "joint-degree":
            res.grid = joint_error_grid(res.estimates, truth)
    return res


def run_experiment(cfg: ExperimentConfig, graph: Optional[DirectedGraph] = None) -> ExperimentResult:
    """Run ``cfg.runs`` replications with seeds ``seed + r`` and write result files.

    Files (in ``cfg.output``): ``estimates.csv``, ``nrmse.csv``,
    ``grid.csv`` (joint degrees only), ``plotspec.json`` and
    ``manifest.json``. Failed runs are listed in the manifest; completed
    runs are kept.
    """
    cfg.validate()
    if graph is None:
        graph = load_graph(cfg)
    res = run_replications(cfg, graph)
    if cfg.output:
        write_results(res, graph, cfg.output)
    return res


def write_results(res: ExperimentResult, graph: DirectedGraph, out_dir: str) -> None:
    cfg = res.config
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "estimates.csv")
    with open(path, "w", newline="") as fh:
        write_estimates_csv(res.estimates, fh, run_ids=res.run_ids)
    res.files["estimates"] = path
    if res.report is not None:
        path = os.path.join(out_dir, "nrmse.csv")
        with open(path, "w", newline="") as fh:
            res.report.to_csv(fh)
        res.files["nrmse"] = path
    if res.grid is not None:
        path = os.path.join(out_dir, "grid.csv")
        with open(path, "w", newline="") as fh:
            write_grid_csv(res.grid, fh, cfg.estimator, len(res.estimates))
        res.files["grid"] = path
    kind = "joint" if cfg.label_kind == "joint-degree" else ("degree" if "degree" in cfg.label_kind else "attribute")
    write_plotspec(os.path.join(out_dir, "plotspec.json"), kind, [cfg.estimator])
    logs = getattr(res, "_logs", {})
    if logs:
        log_dir = os.path.join(out_dir, "logs")
        os.makedirs(log_dir, exist_ok=True)
        for r, text in sorted(logs.items()):
            with open(os.path.join(log_dir, f"run_{r:05d}.log"), "w") as fh:
                fh.write(text)
    manifest = {
        "tool": "dufs",
        "version": __version__,
        "config": cfg.identity(),
        "config_hash": cfg.digest(),
        "graph_hash": graph.digest(),
        "graph_nodes": graph.node_count,
        "graph_edges": graph.edge_count,
        "budget": budget_for(cfg, graph),
        "seeds": [cfg.seed, cfg.seed + cfg.runs - 1],
        "completed_runs": len(res.estimates),
        "failed_runs": [{"run": r, "error": e} for r, e in res.failures],
        "top_degree_threshold": res.threshold,
        "status": "ok" if not res.failures else "partial",
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    res.files["manifest"] = path


@dataclass
class GridReport:
    labels: List
    truth: Dict
    columns: List[str]
    nrmse: Dict[str, Dict]
    baseline: str
    runs: int

    def ratios(self, column: str) -> Dict:
        base = self.nrmse[self.baseline]
        cur = self.nrmse[column]
        return {k: (cur[k] / base[k] if base.get(k) else math.nan) for k in self.labels if k in cur}

    def rows(self) -> List[List]:
        out = []
        for k in self.labels:
            for col in self.columns:
                v = self.nrmse[col].get(k, math.nan)
                r = self.ratios(col).get(k, math.nan)
                out.append([format_label(k), self.truth.get(k, math.nan), col, v, r])
        return out

    def to_csv(self, fh) -> None:
        import csv

        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "truth", "config", "nrmse", f"ratio_to_{self.baseline}"])
        for row in self.rows():
            writer.writerow([row[0], repr(float(row[1])), row[2], repr(float(row[3])), repr(float(row[4]))])


def run_grid(
    cfgs: Sequence[ExperimentConfig], graph: Optional[DirectedGraph] = None, baseline: int = 0, output: Optional[str] = None
) -> GridReport:
    """Run several configs on one graph and join their per-label NRMSE."""
    if not cfgs:
        raise ConfigError("empty grid")
    kinds = {c.label_kind for c in cfgs}
    if len(kinds) != 1:
        raise ConfigError("grid configs must share label_kind")
    sources = {(c.graph, c.generator, c.symmetrize, c.lcc, c.attributes) for c in cfgs}
    if graph is None:
        if len(sources) != 1:
            raise ConfigError("grid configs reference different graphs")
        graph = load_graph(cfgs[0])
    columns = []
    nrmse: Dict[str, Dict] = {}
    truth: Dict = {}
    runs = 0
    for i, cfg in enumerate(cfgs):
        col = cfg.label
        if col in nrmse:
            col = f"{col}#{i}"
        sub_out = os.path.join(output, col) if output else None
        res = run_experiment(replace(cfg, output=sub_out), graph)
        if res.report is None:
            raise ConfigError(f"config {col} produced fewer than two runs")
        columns.append(col)
        nrmse[col] = res.report.per_label_nrmse
        truth.update(res.report.truth)
        runs = max(runs, res.report.run_count)
    labels = sorted(truth, key=label_sort_key)
    report = GridReport(labels, truth, columns, nrmse, columns[baseline], runs)
    if output:
        os.makedirs(output, exist_ok=True)
        with open(os.path.join(output, "grid_nrmse.csv"), "w", newline="") as fh:
            report.to_csv(fh)
    return report


def guideline_preset(target: str, c: float, scenario: str) -> List[Tuple[float, float]]:
    """``(w, b)`` settings recommended for head or tail accuracy."""
    try:
        return list(GUIDELINES[(target, int(c), scenario)])
    except KeyError:
        raise ConfigError(f"no guideline preset for target={target}, c={c}, scenario={scenario}") from None


def expand_preset(name: str, base: ExperimentConfig) -> List[ExperimentConfig]:
    """``wb-grid`` (3 x 4 grid over w, b) or ``table2-head`` / ``table2-tail``."""
    if name == "wb-grid":
        pairs = [(w, b) for w in WB_GRID_W for b in WB_GRID_B]
    elif name in ("table2-head", "table2-tail"):
        pairs = guideline_preset(name.split("-")[1], base.c, base.scenario)
    else:
        raise ConfigError(f"unknown preset {name!r}")
    return [replace(base, w=w, b=b, name=None) for w, b in pairs]


def mean_uniform_draws(graph: DirectedGraph, method: str, wcfg: WalkConfig, runs: int, seed: int) -> float:
    return float(np.mean([run_method(method, graph, wcfg, seed + r).uniform_draws() for r in range(runs)]))


def calibrate_durw_jump_weight(
    graph: DirectedGraph,
    dufs_cfg: WalkConfig,
    runs: int = 200,
    seed: int = 0,
    lo: float = 0.01,
    hi: float = 100.0,
    rel_tol: float = 0.01,
    max_iter: int = 60,
) -> Tuple[float, float, float]:
    """Jump weight for DURW whose mean uniform-draw count matches a DUFS config.

    Bisection over ``[lo, hi]`` (geometric midpoints); both sides use the
    same seeds. Returns ``(w', dufs_mean, durw_mean)``.
    """
    target = mean_uniform_draws(graph, "dufs", dufs_cfg, runs, seed)

    def draws(wp: float) -> float:
        return mean_uniform_draws(graph, "durw", replace(dufs_cfg, jump_weight=wp), runs, seed)

    f_lo, f_hi = draws(lo), draws(hi)
    if not f_lo <= target <= f_hi:
        raise ConfigError(f"target {target:.2f} draws outside DURW range [{f_lo:.2f}, {f_hi:.2f}]")
    best = (lo, f_lo) if abs(f_lo - target) < abs(f_hi - target) else (hi, f_hi)
    for _ in range(max_iter):
        if abs(best[1] - target) <= rel_tol * target:
            break
        mid = math.sqrt(lo * hi)
        f_mid = draws(mid)
        if abs(f_mid - target) < abs(best[1] - target):
            best = (mid, f_mid)
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    return best[0], target, best[1]
