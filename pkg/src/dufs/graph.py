"""Ground-truth directed graphs: loading, generation, SCCs and true label distributions."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

LABEL_KINDS = ("out-degree", "in-degree", "joint-degree", "degree", "attribute")


class GraphError(ValueError):
    """Invalid graph input."""


class ParseError(GraphError):
    def __init__(self, path, lineno: int, line: str):
        super().__init__(f"{path}:{lineno}: cannot parse edge line {line!r}")
        self.lineno = lineno


class GenerationError(RuntimeError):
    pass


class DirectedGraph:
    """Immutable directed graph over dense node indices ``0..n-1``.

    ``original_ids[i]`` is the id node ``i`` carried in its source file; this
    is the remap table persisted next to results.
    """

    def __init__(
        self,
        node_count: int,
        edges: Iterable[Tuple[int, int]],
        original_ids: Optional[Sequence] = None,
        node_labels: Optional[Sequence[Iterable[str]]] = None,
        allow_isolated: bool = False,
    ):
        if node_count <= 0:
            raise GraphError("empty graph")
        edge_set = sorted(set((int(u), int(v)) for u, v in edges))
        out_adj: List[List[int]] = [[] for _ in range(node_count)]
        in_adj: List[List[int]] = [[] for _ in range(node_count)]
        und: List[set] = [set() for _ in range(node_count)]
        for u, v in edge_set:
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise GraphError(f"edge ({u}, {v}) outside node range")
            out_adj[u].append(v)
            in_adj[v].append(u)
            und[u].add(v)
            und[v].add(u)
        for v in range(node_count):
            if not und[v] and not allow_isolated:
                raise GraphError(f"node {v} has no incident edge")

        self.node_count = node_count
        self.allow_isolated = allow_isolated
        self.edges: Tuple[Tuple[int, int], ...] = tuple(edge_set)
        self.out_adj: Tuple[Tuple[int, ...], ...] = tuple(tuple(a) for a in out_adj)
        self.in_adj: Tuple[Tuple[int, ...], ...] = tuple(tuple(a) for a in in_adj)
        self.und_adj: Tuple[Tuple[int, ...], ...] = tuple(tuple(sorted(s)) for s in und)
        self.out_degree = tuple(len(a) for a in self.out_adj)
        self.in_degree = tuple(len(a) for a in self.in_adj)
        self.degree = tuple(len(a) for a in self.und_adj)
        if original_ids is None:
            original_ids = range(node_count)
        self.original_ids = tuple(original_ids)
        if len(self.original_ids) != node_count:
            raise GraphError("remap table size differs from node count")
        if node_labels is not None:
            node_labels = tuple(frozenset(str(x) for x in ls) for ls in node_labels)
            if len(node_labels) != node_count:
                raise GraphError("label table size differs from node count")
        self.node_labels: Optional[Tuple[frozenset, ...]] = node_labels

    def __len__(self) -> int:
        return self.node_count

    def __repr__(self) -> str:
        return f"DirectedGraph(|V|={self.node_count}, |E_d|={len(self.edges)})"

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def volume(self, nodes: Optional[Iterable[int]] = None) -> int:
        if nodes is None:
            return sum(self.degree)
        return sum(self.degree[v] for v in nodes)

    def is_symmetric(self) -> bool:
        es = set(self.edges)
        return all((v, u) in es for u, v in es)

    def with_labels(self, node_labels: Sequence[Iterable[str]]) -> "DirectedGraph":
        return DirectedGraph(
            self.node_count, self.edges, self.original_ids, node_labels, self.allow_isolated
        )

    def induced(self, nodes: Sequence[int]) -> "DirectedGraph":
        """Subgraph induced on ``nodes`` (kept in the given order)."""
        index = {v: i for i, v in enumerate(nodes)}
        edges = [(index[u], index[v]) for u, v in self.edges if u in index and v in index]
        labels = None
        if self.node_labels is not None:
            labels = [self.node_labels[v] for v in nodes]
        return DirectedGraph(
            len(nodes), edges, [self.original_ids[v] for v in nodes], labels, allow_isolated=True
        )

    def digest(self) -> str:
        """Content hash of the edge set in original ids plus labels."""
        h = hashlib.sha256()
        for u, v in self.edges:
            h.update(f"{self.original_ids[u]} {self.original_ids[v]}\n".encode())
        if self.node_labels is not None:
            for i, ls in enumerate(self.node_labels):
                h.update(f"L {self.original_ids[i]} {','.join(sorted(ls))}\n".encode())
        return h.hexdigest()


def _parse_edge_lines(lines: Iterable[str], path) -> List[Tuple[int, int]]:
    pairs = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 2:
            raise ParseError(path, lineno, raw.rstrip("\r\n"))
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(path, lineno, raw.rstrip("\r\n")) from None
    return pairs


def from_edge_pairs(pairs: Iterable[Tuple[int, int]], symmetrize: bool = False) -> DirectedGraph:
    """Build a graph from edges given in arbitrary integer ids.

    Internal indices follow the sorted order of the original ids.
    """
    pairs = list(pairs)
    if not pairs:
        raise GraphError("empty graph")
    ids = sorted({x for e in pairs for x in e})
    index = {x: i for i, x in enumerate(ids)}
    edges = set()
    for u, v in pairs:
        edges.add((index[u], index[v]))
        if symmetrize:
            edges.add((index[v], index[u]))
    return DirectedGraph(len(ids), edges, ids)


def load_snap_edgelist(path, symmetrize: bool = False) -> DirectedGraph:
    """Read a SNAP-style edge list (``u v`` per line, ``#`` comments)."""
    with open(path, "r", newline=None) as fh:
        pairs = _parse_edge_lines(fh, path)
    return from_edge_pairs(pairs, symmetrize=symmetrize)


def load_attributes(graph: DirectedGraph, path) -> DirectedGraph:
    """Attach labels from a ``node_id<ws>label1,label2,...`` file.

    Node ids are original ids; nodes missing from the file get no labels.
    """
    index = {x: i for i, x in enumerate(graph.original_ids)}
    labels: List[set] = [set() for _ in range(graph.node_count)]
    with open(path, "r", newline=None) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(None, 1)
            try:
                node = int(parts[0])
            except ValueError:
                raise ParseError(path, lineno, raw.rstrip("\r\n")) from None
            if node not in index:
                continue
            if len(parts) > 1:
                labels[index[node]].update(x for x in parts[1].strip().split(",") if x)
    return graph.with_labels(labels)


def save_edgelist(graph: DirectedGraph, path, original_ids: bool = True) -> None:
    ids = graph.original_ids if original_ids else range(graph.node_count)
    with open(path, "w") as fh:
        fh.write(f"# nodes {graph.node_count} edges {graph.edge_count}\n")
        for u, v in graph.edges:
            fh.write(f"{ids[u]}\t{ids[v]}\n")


def save_remap(graph: DirectedGraph, path) -> None:
    with open(path, "w") as fh:
        fh.write("# internal\toriginal\n")
        for i, x in enumerate(graph.original_ids):
            fh.write(f"{i}\t{x}\n")


def save_attributes(graph: DirectedGraph, path) -> None:
    if graph.node_labels is None:
        raise GraphError("graph has no node labels")
    with open(path, "w") as fh:
        for i, ls in enumerate(graph.node_labels):
            fh.write(f"{graph.original_ids[i]}\t{','.join(sorted(ls))}\n")


def largest_scc(g: DirectedGraph) -> DirectedGraph:
    """Induced subgraph on the largest strongly connected component.

    Ties go to the component holding the smallest original id.
    """
    rows = np.fromiter((u for u, _ in g.edges), dtype=np.int64, count=g.edge_count)
    cols = np.fromiter((v for _, v in g.edges), dtype=np.int64, count=g.edge_count)
    adj = csr_matrix((np.ones(g.edge_count), (rows, cols)), shape=(g.node_count,) * 2)
    ncomp, comp = connected_components(adj, directed=True, connection="strong")
    sizes = np.bincount(comp, minlength=ncomp)
    min_id: Dict[int, object] = {}
    for v in range(g.node_count):
        c = int(comp[v])
        if c not in min_id or g.original_ids[v] < min_id[c]:
            min_id[c] = g.original_ids[v]
    best = min(range(ncomp), key=lambda c: (-sizes[c], min_id[c]))
    return g.induced([v for v in range(g.node_count) if comp[v] == best])


@dataclass(frozen=True)
class GroundTruth:
    """Exact label masses (fractions of |V|) for one label kind."""

    label_kind: str
    label_mass: Dict[object, float]
    out_degree_mass: Dict[int, float]
    in_degree_mass: Dict[int, float]
    joint_mass: Dict[Tuple[int, int], float]
    degree_mass: Dict[int, float]
    mean_undirected_degree: float
    node_count: int = 0
    edge_count: int = 0

    def mean_label(self) -> float:
        """Mean of a numeric label under ``label_mass`` (e.g. mean out-degree)."""
        return float(sum(float(k) * p for k, p in self.label_mass.items()))

    def edge_mass(self) -> Dict[int, float]:
        """Degree-biased masses ``d * theta_d / dbar`` of a degree-valued label."""
        mean = self.mean_label()
        return {d: d * p / mean for d, p in self.label_mass.items()}


def _mass(counter: Counter, n: int) -> Dict:
    return {k: c / n for k, c in sorted(counter.items())}


def node_label_values(g: DirectedGraph, v: int, label_kind: str) -> Tuple:
    if label_kind == "out-degree":
        return (g.out_degree[v],)
    if label_kind == "in-degree":
        return (g.in_degree[v],)
    if label_kind == "joint-degree":
        return ((g.in_degree[v], g.out_degree[v]),)
    if label_kind == "degree":
        return (g.degree[v],)
    if label_kind == "attribute":
        if g.node_labels is None:
            raise GraphError("attribute labels requested on an unlabeled graph")
        return tuple(sorted(g.node_labels[v]))
    raise ValueError(f"unknown label kind {label_kind!r}")


def ground_truth(g: DirectedGraph, label_kind: str = "out-degree", nodes: Optional[Iterable[int]] = None) -> GroundTruth:
    """Exact distributions by enumeration; ``nodes`` restricts the population."""
    if label_kind == "attribute" and g.node_labels is None:
        raise GraphError("attribute labels requested on an unlabeled graph")
    pop = list(range(g.node_count)) if nodes is None else list(nodes)
    n = len(pop)
    if n == 0:
        raise GraphError("empty node population")
    labels: Counter = Counter()
    for v in pop:
        labels.update(node_label_values(g, v, label_kind))
    mean_deg = sum(g.degree[v] for v in pop) / n
    return GroundTruth(
        label_kind=label_kind,
        label_mass=_mass(labels, n),
        out_degree_mass=_mass(Counter(g.out_degree[v] for v in pop), n),
        in_degree_mass=_mass(Counter(g.in_degree[v] for v in pop), n),
        joint_mass=_mass(Counter((g.in_degree[v], g.out_degree[v]) for v in pop), n),
        degree_mass=_mass(Counter(g.degree[v] for v in pop), n),
        mean_undirected_degree=mean_deg,
        node_count=n,
        edge_count=g.edge_count,
    )


def truncated_powerlaw_pmf(beta: float, max_degree: int) -> np.ndarray:
    """``p[d-1] = d**-beta / Z`` for ``d = 1..max_degree``."""
    d = np.arange(1, max_degree + 1, dtype=float)
    w = d ** -float(beta)
    return w / w.sum()


def generate_powerlaw_digraph(n: int, beta: float, max_degree: int, seed: int) -> DirectedGraph:
    """Directed configuration model with i.i.d. truncated power-law degrees.

    In-degrees are redrawn one node at a time until the stub totals match
    (any residual mismatch is dropped as dangling stubs). Self-loops and
    duplicate edges are repaired by swapping in-stub partners; a conflict
    that survives 100 swaps aborts generation.
    """
    if n < 2 or beta < 1 or max_degree < 1:
        raise GraphError("need n >= 2, beta >= 1, max_degree >= 1")
    rng = np.random.default_rng(seed)
    pmf = truncated_powerlaw_pmf(beta, max_degree)
    support = np.arange(1, max_degree + 1)
    out_deg = rng.choice(support, size=n, p=pmf)
    in_deg = rng.choice(support, size=n, p=pmf)

    diff = int(in_deg.sum() - out_deg.sum())
    for _ in range(100 * n):
        if diff == 0:
            break
        i = int(rng.integers(n))
        new = int(rng.choice(support, p=pmf))
        new_diff = diff + new - int(in_deg[i])
        if abs(new_diff) < abs(diff):
            in_deg[i] = new
            diff = new_diff

    out_stubs = np.repeat(np.arange(n), out_deg)
    in_stubs = np.repeat(np.arange(n), in_deg)
    rng.shuffle(out_stubs)
    rng.shuffle(in_stubs)
    k = min(len(out_stubs), len(in_stubs))

    edges: set = set()
    elist: List[Tuple[int, int]] = []
    conflicts = []
    for u, v in zip(out_stubs[:k].tolist(), in_stubs[:k].tolist()):
        if u != v and (u, v) not in edges:
            edges.add((u, v))
            elist.append((u, v))
        else:
            conflicts.append((u, v))
    for u, v in conflicts:
        for _ in range(100):
            if not elist:
                break
            p = int(rng.integers(len(elist)))
            x, y = elist[p]
            a, b = (u, y), (x, v)
            if u == y or x == v or a in edges or b in edges:
                continue
            edges.discard((x, y))
            edges.add(a)
            edges.add(b)
            elist[p] = a
            elist.append(b)
            break
        else:
            raise GenerationError(f"could not repair stub pair ({u}, {v}) after 100 attempts")

    touched = sorted({x for e in edges for x in e})
    if not touched:
        raise GenerationError("generated graph has no edges")
    index = {v: i for i, v in enumerate(touched)}
    return DirectedGraph(len(touched), [(index[u], index[v]) for u, v in edges], touched)


def degree_threshold_top_fraction(g: DirectedGraph, fraction: float) -> int:
    """Smallest present degree ``t`` with ``|{v: deg(v) >= t}| <= fraction * |V|``.

    Falls back to the maximum degree when even that selects too many nodes
    (e.g. a regular graph), in which case the selected set is all max-degree nodes.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    limit = fraction * g.node_count
    counts = Counter(g.degree)
    at_least = 0
    threshold = max(counts)
    for d in sorted(counts, reverse=True):
        at_least += counts[d]
        if at_least > limit + 1e-9:
            break
        threshold = d
    return threshold


def top_degree_nodes(g: DirectedGraph, threshold: int) -> List[int]:
    return [v for v in range(g.node_count) if g.degree[v] >= threshold]
