"""Random-walk samplers: DUFS and its special cases (FS, DURW, SingleRW, MultiRW).

All samplers share one loop, :func:`dufs_run`, except MultiRW whose walkers
are uncoordinated. Revisiting a node is free: a walk step onto an unvisited
node costs 1, a uniform draw landing on an unvisited node costs ``c`` and
each initial placement costs ``c`` regardless of duplicates.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .graph import DirectedGraph

SCENARIOS = ("visible", "invisible")
PLACEMENTS = ("uniform", "prop", "inv")
LOG_VERSION = 1


class ConfigError(ValueError):
    pass


class StuckWalkerError(RuntimeError):
    """A walker without jumps sits on a node with no usable edge."""

    def __init__(self, message: str, log: "SampleLog"):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class WalkConfig:
    """Sampler parameters.

    ``walkers`` overrides the walker count ``floor(budget / (c + b))``.
    ``max_steps`` caps the number of walk moves; with it set, a run keeps
    going after every node is known (useful for steady-state checks).
    ``charge_revisits`` charges every move, visited or not.
    """

    budget: float
    per_walker: float = 10.0
    uniform_cost: float = 1.0
    jump_weight: float = 1.0
    scenario: str = "visible"
    placement: str = "uniform"
    walkers: Optional[int] = None
    charge_revisits: bool = False
    max_steps: Optional[int] = None
    idle_limit: Optional[int] = None

    @property
    def n_walkers(self) -> int:
        if self.walkers is not None:
            return self.walkers
        return int(math.floor(self.budget / (self.uniform_cost + self.per_walker) + 1e-12))

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.per_walker < 0 or self.jump_weight < 0 or self.uniform_cost < 1:
            raise ConfigError("need b >= 0, w >= 0, c >= 1")
        n = self.n_walkers
        if n < 1:
            raise ConfigError(f"budget {self.budget} buys no walker at c + b = {self.uniform_cost + self.per_walker}")
        if n * self.uniform_cost > self.budget:
            raise ConfigError(f"{n} placements at cost {self.uniform_cost} exceed budget {self.budget}")


class Visit(NamedTuple):
    """One observation: a placement (``move='I'``) or a walk sample.

    ``degree`` is the frozen degree in the observed undirected graph and
    ``bias = degree + w``. ``move`` is ``S`` (edge step), ``J`` (random jump)
    or ``F`` (forced jump of a stuck walker). The remaining fields are the
    node's labels: true out-, in- and undirected degree and its attributes.
    """

    node: int
    degree: int
    bias: float
    move: str
    out_degree: int
    in_degree: int
    und_degree: int
    attrs: Tuple[str, ...] = ()


@dataclass
class BudgetLedger:
    total: float
    uniform_cost: float
    per_walker: float
    charge_revisits: bool = False
    spent: float = 0.0
    placements: int = 0
    jumps: int = 0
    jumps_new: int = 0
    steps: int = 0
    steps_new: int = 0

    @property
    def remaining(self) -> float:
        return self.total - self.spent

    def expected_spent(self) -> float:
        if self.charge_revisits:
            return self.uniform_cost * (self.placements + self.jumps) + self.steps
        return self.uniform_cost * (self.placements + self.jumps_new) + self.steps_new


@dataclass
class WalkerPool:
    locations: List[int]
    jump_weight: float

    @property
    def walker_count(self) -> int:
        return len(self.locations)


@dataclass
class SampleLog:
    config: WalkConfig
    seed: Optional[int]
    placements: List[Visit] = field(default_factory=list)
    walk_samples: List[Visit] = field(default_factory=list)
    spent: float = 0.0
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def scenario(self) -> str:
        return self.config.scenario

    @property
    def initial_nodes(self) -> List[Visit]:
        """Placements usable as uniform node samples (empty for prop/inv)."""
        return self.placements if self.config.placement == "uniform" else []

    def uniform_draws(self) -> int:
        return len(self.placements) + sum(1 for s in self.walk_samples if s.move != "S")

    def to_text(self) -> str:
        lines = [
            f"# dufs-samplelog v{LOG_VERSION}",
            "config " + json.dumps(asdict(self.config), sort_keys=True),
            f"seed {self.seed}",
            f"spent {self.spent!r}",
            "diagnostics " + json.dumps(self.diagnostics, sort_keys=True),
        ]
        for v in self.placements:
            lines.append(f"I {v.node} {v.degree} {_labels_field(v)}")
        for v in self.walk_samples:
            lines.append(f"W {v.node} {v.bias!r} {v.move} {v.degree} {_labels_field(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SampleLog":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# dufs-samplelog v"):
            raise ValueError("not a sample log")
        version = int(lines[0].rsplit("v", 1)[1])
        if version != LOG_VERSION:
            raise ValueError(f"unsupported sample log version {version}")
        config = seed = spent = None
        diagnostics: Dict[str, object] = {}
        placements: List[Visit] = []
        walk: List[Visit] = []
        for line in lines[1:]:
            key, _, rest = line.partition(" ")
            if key == "config":
                config = WalkConfig(**json.loads(rest))
            elif key == "seed":
                seed = None if rest == "None" else int(rest)
            elif key == "spent":
                spent = float(rest)
            elif key == "diagnostics":
                diagnostics = json.loads(rest)
            elif key == "I":
                node, deg, out, inn, und, attrs = rest.split(" ")
                w = config.jump_weight if config else 0.0
                placements.append(
                    Visit(int(node), int(deg), int(deg) + w, "I", int(out), int(inn), int(und), _parse_attrs(attrs))
                )
            elif key == "W":
                node, bias, move, deg, out, inn, und, attrs = rest.split(" ")
                walk.append(
                    Visit(int(node), int(deg), float(bias), move, int(out), int(inn), int(und), _parse_attrs(attrs))
                )
            elif line.strip():
                raise ValueError(f"unrecognised sample log line {line!r}")
        if config is None:
            raise ValueError("sample log has no config line")
        return cls(config, seed, placements, walk, spent or 0.0, diagnostics)


def _labels_field(v: Visit) -> str:
    attrs = ",".join(v.attrs) if v.attrs else "-"
    return f"{v.out_degree} {v.in_degree} {v.und_degree} {attrs}"


def _parse_attrs(field_: str) -> Tuple[str, ...]:
    return () if field_ == "-" else tuple(field_.split(","))


def jump_probability(jump_weight: float, degree: float) -> float:
    if jump_weight <= 0:
        return 0.0
    return jump_weight / (jump_weight + degree)


class ObservedGraph:
    """The crawler's undirected view of the graph.

    Invisible scenario: when ``u`` is first visited only its out-edges to
    still-unvisited nodes are added, so a node's degree is frozen at its
    first visit. Visible scenario: the true undirected adjacency is used.
    """

    def __init__(self, graph: DirectedGraph, scenario: str):
        if scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scenario!r}")
        self.graph = graph
        self.scenario = scenario
        self.visited = bytearray(graph.node_count)
        self.visited_count = 0
        self.frozen_degree: Dict[int, int] = {}
        self._adj: Optional[List[List[int]]] = None
        if scenario == "invisible":
            self._adj = [[] for _ in range(graph.node_count)]

    def is_visited(self, v: int) -> bool:
        return bool(self.visited[v])

    def neighbors(self, v: int) -> Sequence[int]:
        if self._adj is None:
            return self.graph.und_adj[v]
        return self._adj[v]

    @property
    def und_edges(self) -> List[Tuple[int, int]]:
        pairs = set()
        for u in range(self.graph.node_count):
            if self._adj is None and not self.visited[u]:
                continue
            for v in self.neighbors(u):
                pairs.add((min(u, v), max(u, v)))
        return sorted(pairs)

    def degree(self, v: int) -> int:
        d = self.frozen_degree.get(v)
        return len(self.neighbors(v)) if d is None else d

    def initialize(self, nodes: Sequence[int]) -> None:
        """Mark a set of placements visited at once with all their out-edges."""
        new = [v for v in dict.fromkeys(nodes) if not self.visited[v]]
        for v in new:
            self.visited[v] = 1
        self.visited_count += len(new)
        if self._adj is not None:
            seen = set()
            for u in new:
                for v in self.graph.out_adj[u]:
                    key = (min(u, v), max(u, v))
                    if u == v or key in seen:
                        continue
                    seen.add(key)
                    self._adj[u].append(v)
                    self._adj[v].append(u)
        for v in new:
            self.frozen_degree[v] = len(self.neighbors(v))

    def visit(self, u: int) -> bool:
        """Record an arrival at ``u``; returns True on a first visit."""
        if self.visited[u]:
            return False
        self.visited[u] = 1
        self.visited_count += 1
        if self._adj is not None:
            adj = self._adj
            for v in self.graph.out_adj[u]:
                if not self.visited[v]:
                    adj[u].append(v)
                    adj[v].append(u)
        self.frozen_degree[u] = len(self.neighbors(u))
        return True


def observed_update(og: ObservedGraph, arrived: int) -> ObservedGraph:
    og.visit(arrived)
    return og


def _visit_record(graph: DirectedGraph, og: ObservedGraph, v: int, w: float, move: str) -> Visit:
    d = og.degree(v)
    attrs = tuple(sorted(graph.node_labels[v])) if graph.node_labels is not None else ()
    return Visit(v, d, d + w, move, graph.out_degree[v], graph.in_degree[v], graph.degree[v], attrs)


def placement_weights(graph: DirectedGraph, placement: str) -> Optional[List[float]]:
    if placement == "uniform":
        return None
    if placement == "prop":
        return [float(d) for d in graph.degree]
    if placement == "inv":
        return [1.0 / d if d > 0 else 0.0 for d in graph.degree]
    raise ConfigError(f"unknown placement {placement!r}")


def place_walkers(graph: DirectedGraph, n: int, placement: str, rng: random.Random) -> List[int]:
    """``n`` i.i.d. node draws (with replacement) from the placement law."""
    if n < 1:
        raise ConfigError("need at least one walker")
    weights = placement_weights(graph, placement)
    if weights is None:
        return [rng.randrange(graph.node_count) for _ in range(n)]
    return rng.choices(range(graph.node_count), weights=weights, k=n)


def _idle_limit(cfg: WalkConfig, graph: DirectedGraph) -> int:
    if cfg.idle_limit is not None:
        return cfg.idle_limit
    return max(1000, 20 * graph.node_count)


def dufs_run(graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    """Run Directed Unbiased Frontier Sampling and return the sample log.

    A walker is picked with probability proportional to ``w + deg(v)``; it
    jumps to a uniform node with probability ``w / (w + deg(v))`` and
    otherwise follows a uniform edge of the observed graph. If every walker
    has weight zero (``w = 0`` on degree-0 nodes) a uniformly chosen walker
    makes a forced jump, counted in ``diagnostics['forced_jumps']``.

    The run stops when the budget is spent, when ``max_steps`` moves were
    made, when the next charge would overdraw the budget, or (without
    ``max_steps``) when no new node was found for ``idle_limit`` moves or
    every node has been visited.
    """
    cfg.validate()
    rng = random.Random(seed)
    w = float(cfg.jump_weight)
    c = cfg.uniform_cost
    n = cfg.n_walkers
    og = ObservedGraph(graph, cfg.scenario)
    ledger = BudgetLedger(cfg.budget, c, cfg.per_walker, cfg.charge_revisits)
    log = SampleLog(cfg, seed)

    locations = place_walkers(graph, n, cfg.placement, rng)
    ledger.placements = n
    ledger.spent = n * c
    og.initialize(locations)
    log.placements = [_visit_record(graph, og, v, w, "I") for v in locations]
    pool = WalkerPool(locations, w)
    weights = [w + og.degree(v) for v in locations]

    forced = 0
    idle = 0
    halt = "budget"
    moves = 0
    idle_cap = _idle_limit(cfg, graph)
    node_count = graph.node_count
    samples = log.walk_samples
    while ledger.spent < ledger.total:
        if cfg.max_steps is not None:
            if moves >= cfg.max_steps:
                halt = "max_steps"
                break
        elif not cfg.charge_revisits:
            if og.visited_count == node_count:
                halt = "exhausted"
                break
            if idle >= idle_cap:
                halt = "idle"
                break

        total = sum(weights)
        if total > 0:
            x = rng.random() * total
            k = 0
            acc = weights[0]
            while acc <= x and k < n - 1:
                k += 1
                acc += weights[k]
            v = pool.locations[k]
            d = og.degree(v)
            jump = w > 0 and rng.random() < w / (w + d)
            move = "J" if jump else "S"
        else:
            k = rng.randrange(n)
            jump = True
            move = "F"

        if jump:
            target = rng.randrange(node_count)
            new = not og.visited[target]
            cost = c if (new or cfg.charge_revisits) else 0
        else:
            target = rng.choice(og.neighbors(v))
            new = not og.visited[target]
            cost = 1 if (new or cfg.charge_revisits) else 0
        if cost > ledger.remaining:
            halt = "overdraw"
            break

        if jump:
            ledger.jumps += 1
            ledger.jumps_new += new
            forced += move == "F"
        else:
            ledger.steps += 1
            ledger.steps_new += new
        ledger.spent += cost
        moves += 1
        if new:
            og.visit(target)
            idle = 0
        else:
            idle += 1
        samples.append(_visit_record(graph, og, target, w, move))
        pool.locations[k] = target
        weights[k] = w + og.degree(target)

    log.spent = ledger.spent
    log.diagnostics = {
        "walkers": n,
        "moves": moves,
        "jumps": ledger.jumps,
        "jumps_new": ledger.jumps_new,
        "steps": ledger.steps,
        "steps_new": ledger.steps_new,
        "forced_jumps": forced,
        "visited": og.visited_count,
        "halt": halt,
    }
    return log


def fs_run(graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    """Frontier Sampling: DUFS without jumps on the true undirected graph."""
    return dufs_run(graph, replace(cfg, jump_weight=0.0, scenario="visible"), seed)


def durw_run(graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    """Directed Unbiased Random Walk: DUFS with a single walker (``b = B - c``)."""
    if cfg.budget <= cfg.uniform_cost:
        raise ConfigError("DURW needs budget > c")
    return dufs_run(graph, replace(cfg, walkers=1, per_walker=cfg.budget - cfg.uniform_cost), seed)


def uniform_node_run(graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    """Pure uniform node sampling, i.e. DUFS with ``b = 0``."""
    return dufs_run(graph, replace(cfg, per_walker=0.0, walkers=None, placement="uniform"), seed)


def single_rw_run(graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    """One walker, no jumps, visible in-edges."""
    cfg = replace(cfg, walkers=1, per_walker=cfg.budget - cfg.uniform_cost)
    return multi_rw_run(graph, cfg, seed)


def multi_rw_run(graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    """Independent walkers taking turns (round-robin), no jumps, no coordination."""
    cfg = replace(cfg, jump_weight=0.0)
    cfg.validate()
    if cfg.scenario != "visible":
        raise ConfigError("SingleRW/MultiRW run with visible in-edges only")
    rng = random.Random(seed)
    c = cfg.uniform_cost
    n = cfg.n_walkers
    og = ObservedGraph(graph, "visible")
    ledger = BudgetLedger(cfg.budget, c, cfg.per_walker, cfg.charge_revisits)
    log = SampleLog(cfg, seed)

    locations = place_walkers(graph, n, cfg.placement, rng)
    ledger.placements = n
    ledger.spent = n * c
    og.initialize(locations)
    log.placements = [_visit_record(graph, og, v, 0.0, "I") for v in locations]
    active = [k for k in range(n) if og.degree(locations[k]) > 0]
    if not active:
        log.spent = ledger.spent
        log.diagnostics = {"walkers": n, "halt": "stuck"}
        raise StuckWalkerError("every walker starts on a node without edges", log)

    idle = 0
    moves = 0
    halt = "budget"
    idle_cap = _idle_limit(cfg, graph)
    turn = 0
    while ledger.spent < ledger.total:
        if cfg.max_steps is not None:
            if moves >= cfg.max_steps:
                halt = "max_steps"
                break
        elif not cfg.charge_revisits:
            if og.visited_count == graph.node_count:
                halt = "exhausted"
                break
            if idle >= idle_cap:
                halt = "idle"
                break
        k = active[turn % len(active)]
        turn += 1
        target = rng.choice(og.neighbors(locations[k]))
        new = not og.visited[target]
        cost = 1 if (new or cfg.charge_revisits) else 0
        if cost > ledger.remaining:
            halt = "overdraw"
            break
        ledger.steps += 1
        ledger.steps_new += new
        ledger.spent += cost
        moves += 1
        if new:
            og.visit(target)
            idle = 0
        else:
            idle += 1
        log.walk_samples.append(_visit_record(graph, og, target, 0.0, "S"))
        locations[k] = target

    log.spent = ledger.spent
    log.diagnostics = {
        "walkers": n,
        "moves": moves,
        "jumps": 0,
        "jumps_new": 0,
        "steps": ledger.steps,
        "steps_new": ledger.steps_new,
        "forced_jumps": 0,
        "visited": og.visited_count,
        "halt": halt,
    }
    return log


METHODS = {
    "dufs": dufs_run,
    "fs": fs_run,
    "durw": durw_run,
    "single-rw": single_rw_run,
    "multi-rw": multi_rw_run,
    "uniform-node": uniform_node_run,
}


def run_method(method: str, graph: DirectedGraph, cfg: WalkConfig, seed: Optional[int] = None) -> SampleLog:
    try:
        fn = METHODS[method]
    except KeyError:
        raise ConfigError(f"unknown method {method!r}") from None
    return fn(graph, cfg, seed)


def audit_budget(log: SampleLog) -> Tuple[float, float]:
    """Recompute the spend of a (replayed) log from its records alone.

    Returns ``(recomputed, logged)``; first visits are re-derived by
    scanning placements then walk samples in order.
    """
    cfg = log.config
    seen = {v.node for v in log.placements}
    cost = cfg.uniform_cost * len(log.placements)
    for s in log.walk_samples:
        new = s.node not in seen
        seen.add(s.node)
        if s.move == "S":
            cost += 1 if (new or cfg.charge_revisits) else 0
        else:
            cost += cfg.uniform_cost if (new or cfg.charge_revisits) else 0
    return cost, log.spent
