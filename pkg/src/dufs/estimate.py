"""Node-label distribution estimators over a :class:`~dufs.walk.SampleLog`.

Walk samples are weighted by the reciprocal of their bias ``deg + w``;
placements, when uniform, are plain node samples. The hybrid family
combines both through the counts collected in :class:`HybridSummary`.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .walk import SampleLog, Visit

TOP_SET = "__top__"


class NoDataError(ValueError):
    pass


class EstimatorWarning(UserWarning):
    pass


def visit_labels(v: Visit, label_kind: str, min_degree: Optional[int] = None) -> Tuple:
    """Labels a record contributes under ``label_kind``.

    With ``min_degree`` set, only nodes whose true undirected degree reaches
    it contribute, and they also carry the :data:`TOP_SET` marker label.
    """
    if min_degree is not None:
        if v.und_degree < min_degree:
            return ()
        return visit_labels(v, label_kind) + (TOP_SET,)
    if label_kind == "out-degree":
        return (v.out_degree,)
    if label_kind == "in-degree":
        return (v.in_degree,)
    if label_kind == "joint-degree":
        return ((v.in_degree, v.out_degree),)
    if label_kind == "degree":
        return (v.degree,)
    if label_kind == "attribute":
        return tuple(v.attrs)
    raise ValueError(f"unknown label kind {label_kind!r}")


def label_sort_key(label):
    """Numeric labels first (by value), then everything else as strings."""
    if isinstance(label, tuple):
        return (0, label, "")
    if isinstance(label, (int, float, np.integer, np.floating)):
        return (0, (float(label),), "")
    return (1, (), str(label))


@dataclass
class HybridSummary:
    """Sufficient statistics of a log for the hybrid estimators.

    ``mu`` accumulates ``1 / bias`` per walk sample of each label and
    ``mu_total`` over all walk samples, so ``mean_degree_hat = M / mu_total``
    also holds for multi-label kinds where labels overlap.
    """

    label_kind: str
    n: Dict[object, int] = field(default_factory=dict)
    m_bias: Dict[object, Dict[float, int]] = field(default_factory=dict)
    m: Dict[object, int] = field(default_factory=dict)
    mu: Dict[object, float] = field(default_factory=dict)
    N: int = 0
    M: int = 0
    mu_total: float = 0.0
    max_bias: float = 0.0

    @property
    def labels(self) -> List:
        return sorted(set(self.n) | set(self.m), key=label_sort_key)

    @property
    def mean_degree_hat(self) -> Optional[float]:
        if self.M == 0:
            return None
        return self.M / self.mu_total

    def ratio(self, label) -> float:
        """``m_i / mu_i``: estimated mean bias of label ``i`` (0 when unseen by walks)."""
        m = self.m.get(label, 0)
        return m / self.mu[label] if m else 0.0


def summarize(log: SampleLog, label_kind: str, min_degree: Optional[int] = None) -> HybridSummary:
    if not log.placements and not log.walk_samples:
        raise NoDataError("empty sample log")
    if label_kind == "attribute" and not any(v.attrs for v in log.placements + log.walk_samples):
        raise NoDataError("attribute labels requested on an unlabeled log")
    s = HybridSummary(label_kind)
    n: Dict = defaultdict(int)
    m_bias: Dict = defaultdict(lambda: defaultdict(int))
    mu: Dict = defaultdict(float)
    for v in log.initial_nodes:
        for lab in visit_labels(v, label_kind, min_degree):
            n[lab] += 1
    for v in log.walk_samples:
        inv = 1.0 / v.bias
        s.mu_total += inv
        s.max_bias = max(s.max_bias, v.bias)
        for lab in visit_labels(v, label_kind, min_degree):
            m_bias[lab][v.bias] += 1
            mu[lab] += inv
    s.N = len(log.initial_nodes)
    s.M = len(log.walk_samples)
    s.n = dict(n)
    s.m_bias = {k: dict(d) for k, d in m_bias.items()}
    s.m = {k: sum(d.values()) for k, d in s.m_bias.items()}
    s.mu = dict(mu)
    return s


@dataclass
class Estimate:
    mass: Dict[object, float]
    estimator_id: str
    diagnostics: Dict[str, object] = field(default_factory=dict)

    def get(self, label, default: float = 0.0) -> float:
        return self.mass.get(label, default)

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_estimates_csv([self], buf)
        return buf.getvalue()


def format_label(label) -> str:
    if isinstance(label, tuple):
        return "|".join(format_label(x) for x in label)
    return str(label)


def parse_label(text: str, label_kind: str):
    if label_kind == "joint-degree":
        a, b = text.split("|")
        return (int(a), int(b))
    if label_kind in ("out-degree", "in-degree", "degree"):
        return int(text)
    return text


DIAG_COLUMNS = ("iterations", "grad_norm", "residual", "start_gap", "converged", "zeroed")


def write_estimates_csv(estimates: Iterable[Estimate], fh, run_ids: Optional[Sequence[int]] = None) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    header = (["run"] if run_ids is not None else []) + ["label", "mass", "estimator_id", *DIAG_COLUMNS]
    writer.writerow(header)
    for idx, est in enumerate(estimates):
        diag = [_fmt(est.diagnostics.get(k, "")) for k in DIAG_COLUMNS]
        for lab in sorted(est.mass, key=label_sort_key):
            row = [format_label(lab), repr(float(est.mass[lab])), est.estimator_id, *diag]
            if run_ids is not None:
                row.insert(0, run_ids[idx])
            writer.writerow(row)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def edge_based_estimate(log: SampleLog, label_kind: str, min_degree: Optional[int] = None) -> Estimate:
    """Ratio of ``1/bias``-weighted label counts over walk samples only.

    Equivalent to averaging indicators divided by the estimated stationary
    probability ``bias * S`` with ``S`` the mean reciprocal bias.
    """
    if not log.walk_samples:
        raise NoDataError("edge-based estimate needs at least one walk sample")
    num: Dict = defaultdict(float)
    den = 0.0
    for v in log.walk_samples:
        inv = 1.0 / v.bias
        den += inv
        for lab in visit_labels(v, label_kind, min_degree):
            num[lab] += inv
    return Estimate({k: x / den for k, x in num.items()}, "edge", {"samples": len(log.walk_samples)})


def hybrid_nonrecursive(summary: HybridSummary) -> Estimate:
    """Closed-form hybrid estimate, label by label (no renormalisation).

    ``(n_i + m_i) / (N + M * (m_i / mu_i) / dhat)`` with ``dhat = M / sum(1/bias)``;
    labels without walk samples reduce to ``n_i / N``.
    """
    N, M = summary.N, summary.M
    diag: Dict[str, object] = {}
    if M == 0:
        if N == 0:
            raise NoDataError("no samples")
        warnings.warn("no walk samples; falling back to node-sample frequencies", EstimatorWarning, stacklevel=2)
        diag["warning"] = "no-walk-samples"
        return Estimate({k: c / N for k, c in summary.n.items()}, "hybrid", diag)
    dhat = summary.mean_degree_hat
    mass = {}
    for lab in summary.labels:
        n_i = summary.n.get(lab, 0)
        m_i = summary.m.get(lab, 0)
        denom = N + (M * summary.ratio(lab) / dhat if m_i else 0.0)
        mass[lab] = (n_i + m_i) / denom
    diag["dhat"] = dhat
    return Estimate(mass, "hybrid", diag)


def apply_variance_reduction(est: Estimate, summary: HybridSummary) -> Estimate:
    """Zero every label that no walk sample observed."""
    zeroed = [lab for lab in est.mass if summary.m.get(lab, 0) == 0 and est.mass[lab] != 0]
    mass = {lab: (0.0 if summary.m.get(lab, 0) == 0 else x) for lab, x in est.mass.items()}
    diag = dict(est.diagnostics)
    diag["zeroed"] = len(zeroed)
    return Estimate(mass, est.estimator_id + "+rule", diag)


def mvue_mass(n_i, m_i, N, M, degree, mean_degree):
    """``(n_i + m_i) / (N + M * degree / mean_degree)``; numpy-broadcastable."""
    return (np.asarray(n_i, dtype=float) + m_i) / (N + M * np.asarray(degree, dtype=float) / mean_degree)


def mvue_degree_estimate(summary: HybridSummary, mean_degree: float) -> Estimate:
    """Degree-label estimator with the true mean degree supplied."""
    if mean_degree <= 0:
        raise ValueError("mean degree must be positive")
    if summary.label_kind != "degree":
        raise ValueError("the MVUE applies to undirected-degree labels only")
    if summary.N + summary.M == 0:
        raise NoDataError("no samples")
    mass = {}
    for lab in summary.labels:
        t = summary.n.get(lab, 0) + summary.m.get(lab, 0)
        mass[lab] = float(mvue_mass(t, 0, summary.N, summary.M, lab, mean_degree))
    return Estimate(mass, "mvue", {"mean_degree": mean_degree})


# --- maximum likelihood (partition labels) ---------------------------------


def _partition(summary: HybridSummary):
    if summary.label_kind == "attribute":
        raise ValueError("the likelihood estimators assume one label per node")
    labels = [lab for lab in summary.labels if summary.n.get(lab, 0) + summary.m.get(lab, 0) > 0]
    counts = np.array([summary.n.get(lab, 0) + summary.m.get(lab, 0) for lab in labels], dtype=float)
    ratios = np.array([summary.ratio(lab) for lab in labels], dtype=float)
    return labels, counts, ratios


def _logsumexp(x: np.ndarray) -> float:
    mx = np.max(x)
    return float(mx + np.log(np.sum(np.exp(x - mx))))


def log_likelihood(beta: np.ndarray, counts: np.ndarray, ratios: np.ndarray, N: int, M: int) -> float:
    """Hybrid log-likelihood in softmax coordinates, up to a constant.

    ``counts[i] = n_i + m_i`` and ``ratios[i] = m_i / mu_i``.
    """
    ll = float(np.dot(counts, beta)) - N * _logsumexp(beta)
    if M:
        mask = ratios > 0
        ll -= M * _logsumexp(beta[mask] + np.log(ratios[mask]))
    return ll


def log_likelihood_gradient(beta: np.ndarray, counts: np.ndarray, ratios: np.ndarray, N: int, M: int) -> np.ndarray:
    e = np.exp(beta - np.max(beta))
    grad = counts - N * e / e.sum()
    if M:
        er = e * ratios
        grad = grad - M * er / er.sum()
    return grad


def fixed_point_residual(theta: np.ndarray, counts: np.ndarray, ratios: np.ndarray, N: int, M: int) -> float:
    """Max deviation from the stationarity equations of the likelihood."""
    denom = np.full_like(theta, float(N))
    if M:
        denom = denom + M * ratios / float(np.dot(theta, ratios))
    return float(np.max(np.abs(theta - counts / denom)))


def _pack(labels, theta, estimator_id, diag, summary) -> Estimate:
    mass = {lab: float(t) for lab, t in zip(labels, theta)}
    for lab in summary.labels:
        mass.setdefault(lab, 0.0)
    return Estimate(mass, estimator_id, diag)


def _ascend(beta, counts, ratios, N, M, free, tol, max_iter):
    """Scaled gradient ascent with Armijo backtracking; returns (beta, iterations, grad_norm, converged)."""
    scale = 1.0 / counts
    f = log_likelihood(beta, counts, ratios, N, M)
    step = 1.0
    converged = False
    it = 0
    gnorm = math.inf
    for it in range(1, max_iter + 1):
        g = log_likelihood_gradient(beta, counts, ratios, N, M)
        g[~free] = 0.0
        gnorm = float(np.max(np.abs(g)))
        if gnorm < tol:
            converged = True
            it -= 1
            break
        d = g * scale
        slope = float(np.dot(g, d))
        step = min(step * 2.0, 1.0)
        accepted = False
        while step >= 1e-16:
            cand = beta + step * d
            fc = log_likelihood(cand, counts, ratios, N, M)
            if fc >= f + 1e-4 * step * slope:
                accepted = True
            elif abs(fc - f) <= 1e-13 * max(1.0, abs(f)):
                # objective flat at machine precision: accept while the
                # directional derivative has not changed sign
                gc = log_likelihood_gradient(cand, counts, ratios, N, M)
                gc[~free] = 0.0
                accepted = float(np.dot(gc, d)) >= 0.0
            if accepted:
                break
            step *= 0.5
        if not accepted:
            break
        beta, f = cand, fc
    else:
        g = log_likelihood_gradient(beta, counts, ratios, N, M)
        g[~free] = 0.0
        gnorm = float(np.max(np.abs(g)))
        converged = gnorm < tol
    return beta, it, gnorm, converged


def _softmax(beta: np.ndarray) -> np.ndarray:
    theta = np.exp(beta - np.max(beta))
    return theta / theta.sum()


def hybrid_mle_gradient(
    summary: HybridSummary,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    pinned: int = -1,
    beta0: Optional[np.ndarray] = None,
    starts: int = 2,
) -> Estimate:
    """Maximum-likelihood hybrid estimate by gradient ascent over softmax logits.

    One logit (``pinned``, default the last label) is fixed at 1. Steps follow
    the gradient scaled by ``1 / (n_i + m_i)`` with Armijo backtracking
    (constant 1e-4, halving). Stops when the gradient's max-norm drops below
    ``tol``.

    Uniqueness of the maximiser is not guaranteed, so with ``starts=2`` a
    second ascent from uniform logits is run and the largest mass
    difference between the two is reported as ``start_gap``.
    """
    labels, counts, ratios = _partition(summary)
    N, M = summary.N, summary.M
    if N + M == 0:
        raise NoDataError("no samples")
    W = len(labels)
    if W == 1:
        diag = {"iterations": 0, "grad_norm": 0.0, "converged": True, "residual": 0.0, "start_gap": 0.0}
        return _pack(labels, np.ones(1), "hybrid-mle", diag, summary)
    pin = pinned % W
    free = np.ones(W, dtype=bool)
    free[pin] = False
    if beta0 is None:
        beta = np.log(counts / counts.sum())
        beta = beta - beta[pin] + 1.0
    else:
        beta = np.array(beta0, dtype=float)
        beta[pin] = 1.0
    beta, it, gnorm, converged = _ascend(beta, counts, ratios, N, M, free, tol, max_iter)
    theta = _softmax(beta)
    diag = {
        "iterations": it,
        "grad_norm": gnorm,
        "converged": converged,
        "residual": fixed_point_residual(theta, counts, ratios, N, M),
    }
    if starts > 1:
        other, _, _, _ = _ascend(np.ones(W), counts, ratios, N, M, free, tol, max_iter)
        diag["start_gap"] = float(np.max(np.abs(_softmax(other) - theta)))
    if not converged:
        warnings.warn(f"gradient ascent stopped at |grad|={gnorm:.3g}", EstimatorWarning, stacklevel=2)
    return _pack(labels, theta, "hybrid-mle", diag, summary)


def hybrid_mle_em(summary: HybridSummary, tol: float = 1e-12, max_iter: int = 100_000) -> Estimate:
    """Fixed-point (EM) iteration of the likelihood's stationarity equations.

    Each pass re-evaluates ``sum_s theta_s m_s / mu_s`` at the previous
    iterate, starting from ``(n_i + m_i) / (N + M)``. Iterates are
    renormalised, which leaves the fixed points unchanged.
    """
    labels, counts, ratios = _partition(summary)
    N, M = summary.N, summary.M
    if N + M == 0:
        raise NoDataError("no samples")
    theta = counts / (N + M)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if M:
            denom = N + M * ratios / float(np.dot(theta, ratios))
        else:
            denom = np.full_like(theta, float(N))
        new = counts / denom
        new /= new.sum()
        delta = float(np.max(np.abs(new - theta)))
        theta = new
        if delta < tol:
            converged = True
            break
    diag = {
        "iterations": it,
        "converged": converged,
        "residual": fixed_point_residual(theta, counts, ratios, N, M),
    }
    if not converged:
        warnings.warn("EM iteration hit max_iter", EstimatorWarning, stacklevel=2)
    return _pack(labels, theta, "hybrid-em", diag, summary)


ESTIMATORS = ("edge", "hybrid", "hybrid-norule", "hybrid-mle", "hybrid-em", "mvue")


def estimate(
    log: SampleLog,
    estimator: str,
    label_kind: str,
    mean_degree: Optional[float] = None,
    min_degree: Optional[int] = None,
) -> Estimate:
    """Dispatch by estimator name; ``hybrid`` includes the variance-reduction rule."""
    if estimator == "edge":
        return edge_based_estimate(log, label_kind, min_degree)
    summary = summarize(log, label_kind, min_degree)
    if estimator == "hybrid":
        return apply_variance_reduction(hybrid_nonrecursive(summary), summary)
    if estimator == "hybrid-norule":
        return hybrid_nonrecursive(summary)
    if estimator == "hybrid-mle":
        return hybrid_mle_gradient(summary)
    if estimator == "hybrid-em":
        return hybrid_mle_em(summary)
    if estimator == "mvue":
        if mean_degree is None:
            raise ValueError("mvue needs the true mean degree")
        return mvue_degree_estimate(summary, mean_degree)
    raise ValueError(f"unknown estimator {estimator!r}")


def restrict_to_top(est: Estimate) -> Estimate:
    """Turn masses estimated with a degree restriction into fractions of the top set."""
    top = est.mass.get(TOP_SET, 0.0)
    mass = {k: (x / top if top > 0 else 0.0) for k, x in est.mass.items() if k != TOP_SET}
    diag = dict(est.diagnostics)
    diag["top_mass"] = top
    return Estimate(mass, est.estimator_id, diag)
