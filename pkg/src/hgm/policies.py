"""Search policies: the clade-guided compound policy and two comparison baselines.

A policy looks at the current tree and budget and returns the next action, or
``None`` when nothing useful can be dispatched until outstanding work commits.
Policies never mutate the tree; the runtime owns all state changes.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from hgm.bandit import BetaParams, beta_quantile, scheduler_tau, thompson_select_arrays
from hgm.exceptions import EvaluationStarved, ParameterError, UsageError
from hgm.validation import check_positive_int, check_real

# relative slack for N**alpha >= size; float pow misses exact integer powers (32**0.6 < 8)
WIDENING_RTOL = 1e-12


class ActionKind(str, enum.Enum):
    EXPAND = "expand"
    EVALUATE = "evaluate"


@dataclass(frozen=True)
class Expand:
    parent: int
    kind = ActionKind.EXPAND


@dataclass(frozen=True)
class Evaluate:
    agent: int
    task: int
    kind = ActionKind.EVALUATE


@dataclass
class PolicyConfig:
    """Knobs of the compound policy.

    ``scheduler`` is ``"b_over_b"`` (tau = B / b) or ``"constant"`` (tau = ``tau0``).
    ``epsilon_percentile`` is on a 0-100 scale; the final pick maximises the
    ``epsilon_percentile / 100`` lower quantile of each agent's posterior.
    """

    alpha_widening: float = 0.6
    epsilon_percentile: float = 1.0
    scheduler: str = "b_over_b"
    tau0: float = 1.0
    dgm_stage_size: int = 10
    dgm_stage_threshold: float = 0.4

    def __post_init__(self):
        self.alpha_widening = check_real(self.alpha_widening, "alpha_widening", 0.0, 1.0)
        self.epsilon_percentile = check_real(
            self.epsilon_percentile, "epsilon_percentile", 0.0, 100.0, low_open=True
        )
        if self.scheduler not in ("b_over_b", "constant"):
            raise ParameterError(f"scheduler must be 'b_over_b' or 'constant', got {self.scheduler!r}")
        self.tau0 = check_real(self.tau0, "tau0", 0.0, low_open=True)
        self.dgm_stage_size = check_positive_int(self.dgm_stage_size, "dgm_stage_size")
        self.dgm_stage_threshold = check_real(self.dgm_stage_threshold, "dgm_stage_threshold", 0.0, 1.0)

    def tau(self, budget):
        if self.scheduler == "constant":
            return self.tau0
        return scheduler_tau(budget.total_budget, budget.total_budget - budget.committed_evals)


@dataclass
class BudgetState:
    total_budget: int
    committed_evals: int = 0
    inflight_evals: int = 0
    inflight_expansions: int = 0

    @property
    def n_evals(self):
        """Evaluations counted by the widening rule: committed plus in flight."""
        return self.committed_evals + self.inflight_evals

    @property
    def remaining(self):
        return self.total_budget - self.committed_evals

    @property
    def can_dispatch_eval(self):
        return self.n_evals < self.total_budget

    @property
    def exhausted(self):
        return self.committed_evals >= self.total_budget

    def as_dict(self):
        return {
            "B": self.total_budget,
            "committed": self.committed_evals,
            "inflight_evals": self.inflight_evals,
            "inflight_expansions": self.inflight_expansions,
        }


def widening_allows_expand(n_evals, tree_size_effective, alpha):
    return n_evals ** alpha >= tree_size_effective * (1.0 - WIDENING_RTOL)


def decide_action_kind(budget, tree_size_effective, cfg):
    """Expand iff ``N**alpha >= |T|`` with in-flight work counted on both sides."""
    if budget.exhausted:
        raise UsageError("budget exhausted; no further decisions")
    if widening_allows_expand(budget.n_evals, tree_size_effective, cfg.alpha_widening):
        return ActionKind.EXPAND
    return ActionKind.EVALUATE


def select_expansion_parent(tree, tau, rng):
    ids = list(tree.nodes)
    nodes = tree.nodes.values()
    alphas = [tau * (1 + n.clade_success) for n in nodes]
    betas = [tau * (1 + n.clade_failure) for n in nodes]
    return thompson_select_arrays(ids, alphas, betas, rng)


def evaluation_candidates(tree):
    return [n for n in tree.nodes.values() if n.remaining_tasks]


def select_evaluation_agent(tree, tau, rng):
    """Thompson draw over agents that still have unassigned tasks (own counters)."""
    eligible = evaluation_candidates(tree)
    if not eligible:
        raise EvaluationStarved("no agent has remaining tasks")
    ids = [n.id for n in eligible]
    alphas = [tau * (1 + n.n_success) for n in eligible]
    betas = [tau * (1 + n.n_failure) for n in eligible]
    return thompson_select_arrays(ids, alphas, betas, rng)


def select_task(node, rng):
    """Uniform draw from the node's unassigned tasks; one ``integers`` call."""
    if not node.remaining_tasks:
        raise UsageError(f"agent {node.id} has no remaining tasks")
    pool = sorted(node.remaining_tasks)
    return pool[int(rng.integers(len(pool)))]


def posterior_percentile(n_success, n_failure, epsilon_percentile):
    if epsilon_percentile >= 100.0:
        return 1.0
    return beta_quantile(epsilon_percentile / 100.0, BetaParams(1 + n_success, 1 + n_failure))


def best_belief_agent(tree, epsilon_percentile):
    """Agent whose posterior has the highest lower ``epsilon_percentile`` percentile.

    Ties go to the agent with more evaluations, then to the smaller id.
    """
    cache = {}
    best, best_key = None, None
    for node in tree.nodes.values():
        counts = (node.n_success, node.n_failure)
        if counts not in cache:
            cache[counts] = posterior_percentile(*counts, epsilon_percentile)
        key = (cache[counts], node.n_evaluated, -node.id)
        if best_key is None or key > best_key:
            best, best_key = node.id, key
    return best


class HGMPolicy:
    """Clade-metaproductivity guided policy with UCB-Air style widening."""

    name = "hgm"

    def __init__(self, config=None):
        self.config = config or PolicyConfig()

    def decide(self, tree, budget, rng):
        """Return ``(action, info)``; ``action`` is None if the worker should wait."""
        cfg = self.config
        tau = cfg.tau(budget)
        size_eff = len(tree) + budget.inflight_expansions
        kind = decide_action_kind(budget, size_eff, cfg)
        info = {"rule": kind.value, "tau": tau, "N": budget.n_evals, "size_eff": size_eff}
        if kind is ActionKind.EVALUATE:
            if not budget.can_dispatch_eval:
                return None, info
            try:
                agent = select_evaluation_agent(tree, tau, rng)
            except EvaluationStarved:
                info["starved"] = True
            else:
                return Evaluate(agent, select_task(tree.nodes[agent], rng)), info
        elif not budget.can_dispatch_eval:
            # every remaining evaluation is already in flight; a new child could never be scored
            return None, info
        return Expand(select_expansion_parent(tree, tau, rng)), info


def _newest_child(tree):
    newest = len(tree) - 1
    return tree.nodes[newest] if newest != tree.root else None


class GreedyPolicy:
    """SICA-like baseline: expand the best fully evaluated agent, then score its child on every task."""

    name = "greedy"

    def __init__(self, config=None):
        self.config = config or PolicyConfig()

    def expansion_parent(self, tree):
        done = [n for n in tree.nodes.values() if n.fully_evaluated]
        if not done:
            return tree.root
        # ties go to the most recently created agent
        return max(done, key=lambda n: (n.empirical_mean(), n.id)).id

    def decide(self, tree, budget, rng):
        info = {"rule": "phase"}
        if budget.inflight_expansions:
            return None, info
        child = _newest_child(tree)
        if child is not None and not child.fully_evaluated:
            if child.remaining_tasks and budget.can_dispatch_eval:
                return Evaluate(child.id, select_task(child, rng)), info
            return None, info
        if not budget.can_dispatch_eval:
            return None, info
        return Expand(self.expansion_parent(tree)), info


class DGMLikePolicy:
    """DGM-like baseline (approximation; the original weighting is not published).

    Parent weight is the Laplace-smoothed success rate divided by one plus the
    number of children. A new child is first scored on ``dgm_stage_size``
    tasks and only continues to the full task set when at least
    ``dgm_stage_threshold`` of that stage succeeded.
    """

    name = "dgm_like"
    approximation = True

    def __init__(self, config=None):
        self.config = config or PolicyConfig()

    def passed_stage(self, node):
        return node.n_success >= math.ceil(self.config.dgm_stage_threshold * self.config.dgm_stage_size - 1e-12)

    def is_active(self, node):
        """Whether ``node`` still takes evaluations in its staged schedule."""
        if not node.remaining_tasks and not node.pending_tasks:
            return False
        stage = min(self.config.dgm_stage_size, node.task_count)
        if node.n_evaluated >= stage and not self.passed_stage(node):
            return False
        return True

    def parent_weights(self, tree, exclude=None):
        ids, weights = [], []
        for node in tree.nodes.values():
            if node.id == exclude:
                continue
            smoothed = (node.n_success + 1) / (node.n_evaluated + 2)
            ids.append(node.id)
            weights.append(smoothed / (1 + len(node.children)))
        w = np.asarray(weights)
        return ids, w / w.sum()

    def sample_parent(self, tree, rng, exclude=None):
        ids, p = self.parent_weights(tree, exclude)
        # one uniform draw per selection
        u = rng.random()
        idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
        return ids[min(idx, len(ids) - 1)]

    def decide(self, tree, budget, rng):
        info = {"rule": "staged", "approximation": True}
        if budget.inflight_expansions:
            return None, info
        child = _newest_child(tree)
        if child is not None and self.is_active(child):
            stage = min(self.config.dgm_stage_size, child.task_count)
            in_stage = child.n_evaluated + child.pending_evals < stage
            may_eval = in_stage or (child.n_evaluated >= stage and self.passed_stage(child))
            if may_eval and child.remaining_tasks and budget.can_dispatch_eval:
                return Evaluate(child.id, select_task(child, rng)), info
            return None, info
        if not budget.can_dispatch_eval:
            return None, info
        return Expand(self.sample_parent(tree, rng)), info


POLICIES = {"hgm": HGMPolicy, "greedy": GreedyPolicy, "dgm_like": DGMLikePolicy}


def make_policy(kind, config=None):
    try:
        return POLICIES[kind](config)
    except KeyError:
        raise ParameterError(f"unknown policy kind {kind!r}; choose from {sorted(POLICIES)}") from None
