"""Multi-seed experiment helpers: run summaries, sweeps, bootstrap intervals."""

import dataclasses
from dataclasses import dataclass

import numpy as np

from hgm.metrics import correlation_report, estimator_for_policy
from hgm.runtime import run


@dataclass
class RunSummary:
    run_id: str
    policy_kind: str
    seed: int
    best_agent: int
    best_true_utility: float | None
    best_empirical_mean: float | None
    tree_size: int
    evaluations: int
    status: str
    wall_time: float = 0.0

    def row(self):
        """CSV/JSON row without the wall-clock field, which is not reproducible."""
        d = dataclasses.asdict(self)
        d.pop("wall_time")
        return d


SUMMARY_COLUMNS = [f.name for f in dataclasses.fields(RunSummary) if f.name != "wall_time"]


def summarize(result, run_id=None):
    cfg = result.config
    node = result.tree.nodes[result.best_agent]
    return RunSummary(
        run_id=run_id or f"{cfg.policy_kind}-{cfg.seed}",
        policy_kind=cfg.policy_kind,
        seed=cfg.seed,
        best_agent=result.best_agent,
        best_true_utility=result.utility_of(result.best_agent),
        best_empirical_mean=node.empirical_mean(),
        tree_size=len(result.tree),
        evaluations=result.tree.n_evaluations,
        status=result.status,
        wall_time=result.wall_time,
    )


def run_seed(config, seed, policy_kind=None):
    cfg = dataclasses.replace(config, seed=seed, policy_kind=policy_kind or config.policy_kind)
    return run(cfg)


def bootstrap_ci(values, level=0.95, n_boot=2000, seed=0):
    """Percentile bootstrap interval for the mean of ``values``."""
    x = np.asarray(values, dtype=float)
    if len(x) == 0:
        return (float("nan"), float("nan"))
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(x), size=(n_boot, len(x)))
    means = x[idx].mean(axis=1)
    tail = (1.0 - level) / 2.0
    return float(np.quantile(means, tail)), float(np.quantile(means, 1.0 - tail))


def paired_difference(rows, policy_a, policy_b, field="best_true_utility"):
    """Mean of ``a - b`` over seeds present for both policies, with a bootstrap CI."""
    by_seed = {}
    for r in rows:
        by_seed.setdefault(r.seed, {})[r.policy_kind] = getattr(r, field)
    diffs = [
        v[policy_a] - v[policy_b]
        for _, v in sorted(by_seed.items())
        if v.get(policy_a) is not None and v.get(policy_b) is not None
    ]
    lo, hi = bootstrap_ci(diffs)
    return {"mean": float(np.mean(diffs)) if diffs else float("nan"), "ci_low": lo, "ci_high": hi, "n": len(diffs)}


def aggregate(rows, field="best_true_utility"):
    """Per-policy mean and bootstrap CI of ``field``."""
    out = {}
    for kind in dict.fromkeys(r.policy_kind for r in rows):
        vals = [getattr(r, field) for r in rows if r.policy_kind == kind and getattr(r, field) is not None]
        lo, hi = bootstrap_ci(vals)
        out[kind] = {"mean": float(np.mean(vals)) if vals else float("nan"), "ci_low": lo, "ci_high": hi, "n": len(vals)}
    return out


def sweep(config, seeds, policies=None):
    rows = []
    for kind in policies or [config.policy_kind]:
        for seed in seeds:
            rows.append(summarize(run_seed(config, seed, kind)))
    return rows


def mismatch_correlations(config, seeds, baseline="dgm_like"):
    """Per-seed weighted/unweighted correlations of each method's own criterion.

    HGM trees are scored with the leakage-adjusted clade estimator, baseline
    trees with the agents' own success rate.
    """
    records = []
    for seed in seeds:
        for kind in ("hgm", baseline):
            res = run_seed(config, seed, kind)
            rep = correlation_report(res.tree, estimator_for_policy(kind))
            records.append({
                "seed": seed,
                "policy_kind": kind,
                "estimator": rep.estimator,
                "n_used": rep.n_used,
                "weighted_r": rep.weighted_r,
                "unweighted_r": rep.unweighted_r,
            })
    return records
