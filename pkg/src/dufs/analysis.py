"""Error analysis: empirical NRMSE over replications and closed-form baselines."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .estimate import Estimate, format_label, label_sort_key
from .graph import DirectedGraph, GroundTruth, ground_truth, top_degree_nodes


class AnalysisError(ValueError):
    pass


def _masses(truth) -> Dict:
    return dict(truth.label_mass if isinstance(truth, GroundTruth) else truth)


def _is_numeric(label) -> bool:
    return isinstance(label, (int, float, np.integer, np.floating)) and not isinstance(label, bool)


def head_tail(theta: Mapping, tail_fraction: float = 0.01) -> Tuple[List, List]:
    """Head: numeric labels below the mean label; tail: the largest 1% of labels present."""
    labels = sorted((k for k, p in theta.items() if p > 0 and _is_numeric(k)), key=float)
    if not labels:
        return [], []
    mean = sum(float(k) * theta[k] for k in labels)
    head = [k for k in labels if float(k) < mean]
    k = max(1, math.ceil(tail_fraction * len(labels)))
    return head, labels[-k:]


@dataclass
class NrmseReport:
    per_label_nrmse: Dict[object, float]
    run_count: int
    truth: Dict[object, float] = field(default_factory=dict)
    head_labels: List = field(default_factory=list)
    tail_labels: List = field(default_factory=list)
    estimator_id: str = ""
    excluded: List = field(default_factory=list)
    baseline: Dict[object, float] = field(default_factory=dict)

    def _mean(self, labels) -> float:
        vals = [self.per_label_nrmse[k] for k in labels if k in self.per_label_nrmse]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def head_mean(self) -> float:
        return self._mean(self.head_labels)

    @property
    def tail_mean(self) -> float:
        return self._mean(self.tail_labels)

    @property
    def mean(self) -> float:
        return self._mean(self.per_label_nrmse)

    def to_csv(self, fh) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        cols = ["label", "truth", "nrmse", "estimator_id", "R"]
        if self.baseline:
            cols.append("baseline_nrmse")
        writer.writerow(cols)
        for lab in sorted(self.per_label_nrmse, key=label_sort_key):
            row = [format_label(lab), repr(self.truth.get(lab, math.nan)), repr(self.per_label_nrmse[lab]),
                   self.estimator_id, self.run_count]
            if self.baseline:
                row.append(repr(self.baseline.get(lab, math.nan)))
            writer.writerow(row)


def nrmse_matrix(estimates: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Column-wise ``sqrt(mean_r (est[r] - theta)^2) / theta``."""
    estimates = np.asarray(estimates, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return np.sqrt(np.mean((estimates - theta) ** 2, axis=0)) / theta


def empirical_nrmse(
    estimates: Sequence[Estimate],
    truth,
    labels: Optional[Iterable] = None,
    estimator_id: Optional[str] = None,
) -> NrmseReport:
    """Per-label NRMSE over runs; labels missing from a run count as mass 0."""
    if len(estimates) < 2:
        raise AnalysisError("NRMSE needs at least two runs")
    theta = _masses(truth)
    wanted = list(theta) if labels is None else list(labels)
    excluded = [k for k in wanted if theta.get(k, 0.0) <= 0]
    if excluded:
        warnings.warn(f"{len(excluded)} labels with zero true mass excluded", stacklevel=2)
    keep = sorted((k for k in wanted if theta.get(k, 0.0) > 0), key=label_sort_key)
    mat = np.array([[e.mass.get(k, 0.0) for k in keep] for e in estimates], dtype=float)
    th = np.array([theta[k] for k in keep], dtype=float)
    values = nrmse_matrix(mat, th) if keep else np.array([])
    head, tail = head_tail({k: theta[k] for k in keep})
    if estimator_id is None:
        estimator_id = estimates[0].estimator_id
    return NrmseReport(
        per_label_nrmse={k: float(x) for k, x in zip(keep, values)},
        run_count=len(estimates),
        truth={k: theta[k] for k in keep},
        head_labels=head,
        tail_labels=tail,
        estimator_id=estimator_id,
        excluded=excluded,
    )


@dataclass
class AnalyticNrmse:
    model: str
    budget: float
    per_degree: Dict[object, float]
    sampling_mass: Dict[object, float] = field(default_factory=dict)
    powerlaw_params: Optional[Tuple[float, float, int]] = None


def _closed_form(p: float, budget: float) -> float:
    return math.sqrt(max(1.0 / p - 1.0, 0.0) / budget)


def analytic_node_sampling_nrmse(truth, budget: float) -> AnalyticNrmse:
    """Uniform node sampling: ``sqrt((1/theta - 1) / B)`` per label."""
    if budget < 1:
        raise AnalysisError("budget must be >= 1")
    theta = _masses(truth)
    per = {k: _closed_form(p, budget) for k, p in theta.items() if p > 0}
    return AnalyticNrmse("node-sampling", budget, per, {k: theta[k] for k in per})


def analytic_edge_sampling_nrmse(truth, budget: float, mean_degree: Optional[float] = None) -> AnalyticNrmse:
    """Uniform edge sampling: ``sqrt((1/pi_d - 1) / B)`` with ``pi_d = d theta_d / dbar``."""
    if budget < 1:
        raise AnalysisError("budget must be >= 1")
    theta = {k: p for k, p in _masses(truth).items() if p > 0}
    if not all(_is_numeric(k) for k in theta):
        raise AnalysisError("edge-sampling model needs degree-valued labels")
    if mean_degree is None:
        mean_degree = sum(float(k) * p for k, p in theta.items())
    pi = {k: float(k) * p / mean_degree for k, p in theta.items()}
    per = {k: _closed_form(p, budget) for k, p in pi.items() if p > 0}
    return AnalyticNrmse("edge-sampling", budget, per, pi)


def powerlaw_truth(beta: float, max_degree: int) -> Dict[int, float]:
    d = np.arange(1, max_degree + 1, dtype=float)
    w = d ** -beta
    return {int(k): float(x) for k, x in zip(d, w / w.sum())}


def fit_loglog_slope(per_label: Mapping, labels: Optional[Iterable] = None) -> float:
    """Least-squares slope of ``log NRMSE`` against ``log label``."""
    keys = list(per_label) if labels is None else [k for k in labels if k in per_label]
    keys = [k for k in keys if per_label[k] > 0 and float(k) > 0]
    if len(keys) < 2:
        raise AnalysisError("need at least two points to fit a slope")
    x = np.log([float(k) for k in keys])
    y = np.log([per_label[k] for k in keys])
    return float(np.polyfit(x, y, 1)[0])


def powerlaw_range(sampling_mass: Mapping, max_mass: float = 0.1, max_label: Optional[float] = None) -> List:
    """Labels in the small-mass regime where the log-log relation is linear."""
    return sorted(
        k for k, p in sampling_mass.items()
        if 0 < p <= max_mass and (max_label is None or float(k) <= max_label)
    )


def simulate_node_sampling(theta: Mapping, budget: int, runs: int, rng: np.random.Generator) -> Dict:
    """Exact-model uniform node sampling; frequencies as estimates; NRMSE per label."""
    keys = sorted(theta, key=label_sort_key)
    p = np.array([theta[k] for k in keys], dtype=float)
    counts = rng.multinomial(budget, p / p.sum(), size=runs)
    nrmse = nrmse_matrix(counts / budget, p)
    return dict(zip(keys, nrmse.tolist()))


def simulate_edge_sampling(
    theta: Mapping, budget: int, runs: int, rng: np.random.Generator, mean_degree: Optional[float] = None
) -> Dict:
    """Exact-model uniform edge sampling: draws land on degree ``d`` w.p. ``pi_d``.

    The NRMSE is that of the observed fraction as an estimate of ``pi_d``,
    the quantity the closed-form edge-sampling error describes.
    """
    keys = sorted(theta, key=label_sort_key)
    th = np.array([theta[k] for k in keys], dtype=float)
    d = np.array([float(k) for k in keys])
    if mean_degree is None:
        mean_degree = float(np.dot(d, th))
    pi = d * th / mean_degree
    counts = rng.multinomial(budget, pi / pi.sum(), size=runs)
    nrmse = nrmse_matrix(counts / budget, pi)
    return dict(zip(keys, nrmse.tolist()))


def simulate_hybrid_counts(
    theta: Mapping, node_samples: int, edge_samples: int, runs: int, rng: np.random.Generator
) -> Tuple[List, np.ndarray, np.ndarray]:
    """Exact-model counts ``n ~ Mult(N, theta)`` and ``m ~ Mult(M, pi)`` for degree labels."""
    keys = sorted(theta, key=label_sort_key)
    th = np.array([theta[k] for k in keys], dtype=float)
    d = np.array([float(k) for k in keys])
    pi = d * th / np.dot(d, th)
    n = rng.multinomial(node_samples, th / th.sum(), size=runs)
    m = rng.multinomial(edge_samples, pi / pi.sum(), size=runs)
    return keys, n, m


def joint_error_grid(estimates: Sequence[Estimate], truth: GroundTruth) -> Dict[Tuple[int, int], float]:
    """NRMSE per (in-degree, out-degree) cell."""
    if truth.label_kind != "joint-degree":
        raise AnalysisError("joint grid needs joint-degree ground truth")
    for e in estimates:
        if any(not (isinstance(k, tuple) and len(k) == 2) for k in e.mass):
            raise AnalysisError("estimate labels are not (in, out) pairs")
    return dict(empirical_nrmse(estimates, truth).per_label_nrmse)


def ratio_grid(numerator: Mapping, denominator: Mapping) -> Dict:
    """Cell-wise NRMSE ratio over cells present in both grids."""
    out = {}
    for k in numerator:
        if k in denominator:
            den = denominator[k]
            out[k] = numerator[k] / den if den > 0 else (1.0 if numerator[k] == 0 else math.inf)
    return out


def write_grid_csv(grid: Mapping, fh, estimator_id: str, runs: int, value_name: str = "nrmse") -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["in_degree", "out_degree", value_name, "estimator_id", "R"])
    for (i, o) in sorted(grid):
        writer.writerow([i, o, repr(float(grid[(i, o)])), estimator_id, runs])


def top_decile_truth(graph: DirectedGraph, threshold: int) -> GroundTruth:
    nodes = top_degree_nodes(graph, threshold)
    if not nodes:
        raise AnalysisError(f"no node has degree >= {threshold}")
    return ground_truth(graph, "attribute", nodes)


def top_decile_attribute_task(
    estimates: Sequence[Estimate], graph: DirectedGraph, threshold: int, budget: float
) -> NrmseReport:
    """NRMSE of attribute masses among nodes of degree >= ``threshold``.

    ``estimates`` are fractions of the top set (see
    :func:`dufs.estimate.restrict_to_top`). The node-sampling baseline uses
    the expected number of uniform samples landing in the top set.
    """
    truth = top_decile_truth(graph, threshold)
    report = empirical_nrmse(estimates, truth)
    effective = budget * truth.node_count / graph.node_count
    report.baseline = {
        k: _closed_form(p, effective) for k, p in truth.label_mass.items() if k in report.per_label_nrmse
    }
    return report


def plotspec(kind: str, estimator_ids: Sequence[str]) -> dict:
    """Axis metadata for external plotting of a result CSV."""
    if kind == "joint":
        return {"x": "in_degree", "y": "out_degree", "value": "nrmse", "xscale": "log", "yscale": "log",
                "type": "heatmap", "series": list(estimator_ids)}
    return {"x": "label", "y": "nrmse", "xscale": "log" if kind == "degree" else "linear",
            "yscale": "log", "type": "line", "series": list(estimator_ids)}


def write_plotspec(path, kind: str, estimator_ids: Sequence[str]) -> None:
    with open(path, "w") as fh:
        json.dump(plotspec(kind, estimator_ids), fh, indent=2, sort_keys=True)
        fh.write("\n")
