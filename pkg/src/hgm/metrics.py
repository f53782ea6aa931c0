"""Estimator-vs-target correlation analysis over finished search trees.

The target for a node is its empirical clade-metaproductivity: the best own
success rate among its strict descendants. Two predictions are compared with
it: the clade estimator with leakage removed (own evaluations and the subtree
holding the target are dropped) and a node's own success rate, which is what
performance-greedy methods rank by.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from hgm.exceptions import ParameterError


def empirical_cmp(tree, node):
    """Best own success rate among strict descendants with at least one evaluation."""
    best = _best_descendant(tree, node)
    return None if best is None else best[0]


def _best_descendant(tree, node):
    # (mean, -id, id) maximised so ties resolve to the smallest id
    best = None
    for a in tree.clade_members(node):
        if a == node:
            continue
        mean = tree.nodes[a].empirical_mean()
        if mean is None:
            continue
        key = (mean, -a)
        if best is None or key > best[:2]:
            best = (mean, -a, a)
    return None if best is None else (best[0], best[2])


def _child_towards(tree, node, descendant):
    path = list(tree.ancestors(descendant))
    idx = path.index(node)
    return path[idx - 1]


def adjusted_cmp_prediction(tree, node):
    """Leakage-free clade estimate and its weight.

    Returns ``(prediction, weight)`` or ``(None, 0)``. The node's own counts
    and the whole subtree of the child leading to the target maximiser are
    removed from the clade counts; the weight is the number of evaluations
    that remain.
    """
    best = _best_descendant(tree, node)
    if best is None:
        return None, 0
    b_star = _child_towards(tree, node, best[1])
    n = tree.nodes[node]
    excluded = tree.nodes[b_star]
    succ = n.clade_success - n.n_success - excluded.clade_success
    fail = n.clade_failure - n.n_failure - excluded.clade_failure
    denom = succ + fail
    if denom == 0:
        return None, 0
    return succ / denom, denom


def baseline_cmp_prediction(tree, node):
    """Own success rate and own evaluation count, or ``(None, 0)``."""
    n = tree.nodes[node]
    mean = n.empirical_mean()
    return (None, 0) if mean is None else (mean, n.n_evaluated)


def pearson(xs, ys, weights=None):
    """Weighted Pearson correlation; ``None`` when either coordinate has zero variance."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError("xs and ys must be 1-d sequences of equal length")
    if len(x) < 2:
        raise ParameterError("need at least two points")
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != x.shape or (w < 0).any() or not w.any():
        raise ParameterError("weights must be nonnegative, not all zero, one per point")
    w = w / w.sum()
    dx = x - np.dot(w, x)
    dy = y - np.dot(w, y)
    vx = np.dot(w, dx * dx)
    vy = np.dot(w, dy * dy)
    # relative threshold: constant inputs leave only rounding noise in the variance
    scale_x = max(np.dot(w, x * x), 1e-300)
    scale_y = max(np.dot(w, y * y), 1e-300)
    if vx <= 1e-24 * scale_x or vy <= 1e-24 * scale_y:
        return None
    r = np.dot(w, dx * dy) / math.sqrt(vx * vy)
    return float(min(1.0, max(-1.0, r)))


PREDICTORS = {
    "adjusted_cmp": adjusted_cmp_prediction,
    "own_mean": baseline_cmp_prediction,
}


@dataclass
class CorrelationReport:
    estimator: str
    pairs: list = field(default_factory=list)
    weighted_r: float | None = None
    unweighted_r: float | None = None

    @property
    def n_used(self):
        return len(self.pairs)

    @property
    def degenerate(self):
        return self.weighted_r is None or self.unweighted_r is None


def correlation_report(tree, estimator="adjusted_cmp"):
    """Pair each node's prediction with its empirical CMP and correlate.

    Nodes where either side is undefined are dropped from both the weighted and
    the unweighted coefficient.
    """
    try:
        predict = PREDICTORS[estimator]
    except KeyError:
        raise ParameterError(f"unknown estimator {estimator!r}") from None
    report = CorrelationReport(estimator)
    for node in tree.nodes:
        target = empirical_cmp(tree, node)
        if target is None:
            continue
        pred, weight = predict(tree, node)
        if pred is None or weight <= 0:
            continue
        report.pairs.append((node, pred, target, weight))
    if report.n_used >= 2:
        _, p, t, w = zip(*report.pairs)
        report.weighted_r = pearson(p, t, w)
        report.unweighted_r = pearson(p, t)
    return report


def estimator_for_policy(policy_kind):
    """The selection criterion each method ranks agents by."""
    return "adjusted_cmp" if policy_kind == "hgm" else "own_mean"
