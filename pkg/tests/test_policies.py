import math
from collections import Counter

import mpmath
import numpy as np
import pytest
from scipy import special

from hgm.exceptions import EvaluationStarved, ParameterError, UsageError
from hgm.policies import (
    ActionKind,
    BudgetState,
    DGMLikePolicy,
    Evaluate,
    Expand,
    GreedyPolicy,
    HGMPolicy,
    PolicyConfig,
    best_belief_agent,
    decide_action_kind,
    make_policy,
    select_evaluation_agent,
    select_expansion_parent,
    select_task,
    widening_allows_expand,
)
from hgm.tree import SearchTree


def tree_with_counts(counts, task_count=60):
    """Star tree whose node i carries own counts ``counts[i]`` (clades kept consistent)."""
    t = SearchTree(task_count)
    for _ in counts[1:]:
        t.add_child(0)
    for i, (s, f) in enumerate(counts):
        tasks = iter(range(task_count))
        for _ in range(s):
            t.record_evaluation(i, next(tasks), True)
        for _ in range(f):
            t.record_evaluation(i, next(tasks), False)
    return t


# -- widening ---------------------------------------------------------------

def test_widening_fixtures():
    cfg = PolicyConfig(alpha_widening=0.6)
    assert decide_action_kind(BudgetState(800, committed_evals=32), 8, cfg) is ActionKind.EXPAND
    assert decide_action_kind(BudgetState(800, committed_evals=10), 5, cfg) is ActionKind.EVALUATE
    assert decide_action_kind(BudgetState(800), 1, cfg) is ActionKind.EVALUATE
    assert float(mpmath.mpf(10) ** mpmath.mpf("0.6")) < 5


def test_widening_matches_integer_oracle():
    # alpha = 3/5: N**0.6 >= s  <=>  N**3 >= s**5, decided in exact integers
    for n in range(0, 3000):
        for s in range(1, 40):
            assert widening_allows_expand(n, s, 0.6) == (n ** 3 >= s ** 5), (n, s)


def test_widening_half_integer_oracle():
    for n in range(0, 2000):
        for s in range(1, 50):
            assert widening_allows_expand(n, s, 0.5) == (n >= s * s)


def test_in_flight_work_counts_on_both_sides():
    cfg = PolicyConfig()
    pol = HGMPolicy(cfg)
    t = tree_with_counts([(0, 0)] * 8)
    # 31 committed + 1 in flight = 32 evaluations; 7 nodes + 1 pending expansion = 8
    t7 = tree_with_counts([(0, 0)] * 7)
    budget = BudgetState(800, committed_evals=31, inflight_evals=1, inflight_expansions=1)
    _, info = pol.decide(t7, budget, np.random.default_rng(0))
    assert (info["N"], info["size_eff"], info["rule"]) == (32, 8, "expand")
    budget = BudgetState(800, committed_evals=31, inflight_evals=0, inflight_expansions=1)
    _, info = pol.decide(t7, budget, np.random.default_rng(0))
    assert info["rule"] == "evaluate"
    _, info = pol.decide(t, BudgetState(800, committed_evals=31), np.random.default_rng(0))
    assert info["size_eff"] == 8 and info["rule"] == "evaluate"


def test_decide_after_exhaustion_is_usage_error():
    with pytest.raises(UsageError):
        decide_action_kind(BudgetState(5, committed_evals=5), 1, PolicyConfig())


def test_policy_config_validation():
    with pytest.raises(ParameterError):
        PolicyConfig(alpha_widening=1.5)
    with pytest.raises(ParameterError):
        PolicyConfig(epsilon_percentile=0)
    with pytest.raises(ParameterError):
        PolicyConfig(scheduler="linear")
    with pytest.raises(ParameterError):
        make_policy("random")


def test_constant_scheduler():
    cfg = PolicyConfig(scheduler="constant", tau0=3.0)
    assert cfg.tau(BudgetState(100, committed_evals=50)) == 3.0
    assert PolicyConfig().tau(BudgetState(100, committed_evals=50)) == 2.0


# -- expansion / evaluation selection ---------------------------------------

def test_expansion_singleton_and_dominance():
    rng = np.random.default_rng(0)
    t = SearchTree(5)
    assert all(select_expansion_parent(t, 1.0, rng) == 0 for _ in range(20))

    # siblings with clade counts (50, 0) and (0, 50); the root's clade mixes both
    t = tree_with_counts([(0, 0), (50, 0), (0, 50)], task_count=100)
    picks = Counter(select_expansion_parent(t, 1.0, rng) for _ in range(10_000))
    assert picks[1] / (picks[1] + picks[2]) >= 0.999


def test_expansion_exchangeable():
    rng = np.random.default_rng(1)
    t = tree_with_counts([(0, 0), (3, 3), (3, 3)])
    t.nodes[0].clade_success = t.nodes[0].clade_failure = 3  # decouple root from its clade
    picks = Counter(select_expansion_parent(t, 1.0, rng) for _ in range(10_000))
    share = picks[1] / (picks[1] + picks[2])
    assert abs(share - 0.5) <= 0.015


def test_expansion_concentrates_as_tau_grows():
    rng = np.random.default_rng(2)
    t = tree_with_counts([(0, 0), (7, 3), (5, 5), (2, 8)])
    # the root's clade mean 14/30 is below node 1's (8/12 prior-augmented)
    freqs = []
    for tau in (1, 10, 100):
        picks = Counter(select_expansion_parent(t, float(tau), rng) for _ in range(4000))
        freqs.append(picks[1] / 4000)
    assert freqs[0] < freqs[1] < freqs[2]
    assert freqs[2] > 0.95


def test_evaluation_frequency_matches_monte_carlo_oracle():
    n = 20_000
    t = tree_with_counts([(9, 1), (1, 9)])
    rng = np.random.default_rng(3)
    hits = sum(select_evaluation_agent(t, 1.0, rng) == 0 for _ in range(n))
    oracle_rng = np.random.default_rng(987654)  # disjoint stream
    p = float(np.mean(oracle_rng.beta(10, 2, 10**6) > oracle_rng.beta(2, 10, 10**6)))
    se = math.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) <= 3 * se + 1e-3


def test_evaluation_eligibility_and_starvation():
    t = tree_with_counts([(0, 0), (2, 0)], task_count=2)
    rng = np.random.default_rng(4)
    assert all(select_evaluation_agent(t, 1.0, rng) == 0 for _ in range(200))
    t.record_evaluation(0, 0, True)
    t.record_evaluation(0, 1, True)
    with pytest.raises(EvaluationStarved):
        select_evaluation_agent(t, 1.0, rng)


def test_starved_hgm_falls_back_to_expand():
    t = tree_with_counts([(1, 0), (0, 1)], task_count=1)
    action, info = HGMPolicy().decide(t, BudgetState(10, committed_evals=2), np.random.default_rng(0))
    assert info["rule"] == "evaluate" and info["starved"]
    assert isinstance(action, Expand)


def test_select_task():
    rng = np.random.default_rng(5)
    t = SearchTree(8)
    node = t.nodes[0]
    node.remaining_tasks = {7}
    assert select_task(node, rng) == 7
    node.remaining_tasks = {1, 2, 3, 4}
    freq = Counter(select_task(node, rng) for _ in range(10_000))
    assert all(abs(freq[k] / 10_000 - 0.25) <= 0.02 for k in (1, 2, 3, 4))
    t = SearchTree(12)
    drawn = []
    while t.nodes[0].remaining_tasks:
        k = select_task(t.nodes[0], rng)
        drawn.append(k)
        t.record_evaluation(0, k, True)
    assert sorted(drawn) == list(range(12))
    with pytest.raises(UsageError):
        select_task(t.nodes[0], rng)


# -- best belief --------------------------------------------------------------

def test_best_belief_examples():
    assert best_belief_agent(SearchTree(3), 1.0) == 0
    t = tree_with_counts([(3, 0), (30, 3)])
    assert best_belief_agent(t, 1.0) == 1
    assert best_belief_agent(tree_with_counts([(0, 0)] * 4), 1.0) == 0


def test_best_belief_prefers_more_evidence_on_exact_tie():
    # at the 100th percentile every posterior ties at 1; more evaluations win, then the smaller id
    t = tree_with_counts([(1, 0), (2, 3), (2, 3), (0, 0)])
    assert best_belief_agent(t, 100.0) == 1


def grid_quantile(q, a, b, levels=3, points=2001):
    """Nested dense-grid inversion of the Beta CDF (SciPy's betainc as the CDF)."""
    lo, hi = 0.0, 1.0
    for _ in range(levels):
        xs = np.linspace(lo, hi, points)
        cdf = special.betainc(a, b, xs)
        k = int(np.searchsorted(cdf, q, side="left"))
        lo, hi = xs[max(k - 1, 0)], xs[min(k, points - 1)]
    return 0.5 * (lo + hi)


def test_best_belief_against_grid_inversion_sample():
    rng = np.random.default_rng(6)
    for _ in range(100):
        counts = [(int(rng.integers(0, 8)), int(rng.integers(0, 8))) for _ in range(int(rng.integers(1, 7)))]
        t = tree_with_counts(counts)
        qs = [grid_quantile(0.01, 1 + s, 1 + f) for s, f in counts]
        keys = [(round(q, 8), s + f, -i) for i, (q, (s, f)) in enumerate(zip(qs, counts))]
        assert best_belief_agent(t, 1.0) == -max(keys)[2]


# -- baselines -------------------------------------------------------------

def test_greedy_examples():
    pol = GreedyPolicy()
    rng = np.random.default_rng(7)
    t = SearchTree(20)
    assert pol.decide(t, BudgetState(100), rng)[0] == Expand(0)
    c = t.add_child(0)
    for k in range(10):
        t.record_evaluation(c, k, k % 2 == 0)
    action, _ = pol.decide(t, BudgetState(100, committed_evals=10), rng)
    assert isinstance(action, Evaluate) and action.agent == c and action.task >= 10

    t = SearchTree(10)
    a, b = t.add_child(0), t.add_child(0)
    for k in range(10):
        t.record_evaluation(a, k, k < 6)
        t.record_evaluation(b, k, k < 4)
    assert pol.decide(t, BudgetState(100, committed_evals=20), rng)[0] == Expand(a)


def test_greedy_waits_for_expansion():
    t = SearchTree(4)
    t.start_expansion(0)
    action, _ = GreedyPolicy().decide(t, BudgetState(10, inflight_expansions=1), np.random.default_rng(0))
    assert action is None


def test_dgm_single_parent_and_weights():
    pol = DGMLikePolicy()
    rng = np.random.default_rng(8)
    assert pol.sample_parent(SearchTree(5), rng) == 0
    t = SearchTree(10)
    a, b = t.add_child(0), t.add_child(0)
    for _ in range(3):
        t.add_child(b)
    for k in range(10):
        t.record_evaluation(a, k, k < 5)
        t.record_evaluation(b, k, k < 5)
    ids, p = pol.parent_weights(t)
    w = dict(zip(ids, p))
    assert w[a] / w[b] == pytest.approx(4.0)
    picks = Counter(pol.sample_parent(t, rng) for _ in range(10_000))
    ratio = picks[a] / picks[b]
    assert 3.4 < ratio < 4.7


def test_dgm_stage_gate():
    cfg = PolicyConfig(dgm_stage_size=10, dgm_stage_threshold=0.4)
    pol = DGMLikePolicy(cfg)
    rng = np.random.default_rng(9)
    t = SearchTree(30)
    c = t.add_child(0)
    for k in range(10):
        t.record_evaluation(c, k, k < 3)  # 3/10 < 0.4
    action, _ = pol.decide(t, BudgetState(100, committed_evals=10), rng)
    assert isinstance(action, Expand)
    t2 = SearchTree(30)
    c2 = t2.add_child(0)
    for k in range(10):
        t2.record_evaluation(c2, k, k < 4)
    action, _ = pol.decide(t2, BudgetState(100, committed_evals=10), rng)
    assert isinstance(action, Evaluate) and action.agent == c2
