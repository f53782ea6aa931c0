"""Clade-guided search over trees of self-modifying agents."""

from hgm.bandit import BetaParams, beta_quantile, reg_inc_beta, sample_beta, thompson_select
from hgm.environment import EnvConfig, Executor, LatentAgent, SyntheticExecutor, mismatch_env_config, true_cmp
from hgm.estimator import HuxleyGodelSearch
from hgm.exceptions import (
    CapacityError,
    EvaluationStarved,
    HGMError,
    LogFormatError,
    ParameterError,
    UsageError,
)
from hgm.godel import MicroMDP, cmp_exact, q_value, verify_theorem
from hgm.metrics import adjusted_cmp_prediction, correlation_report, empirical_cmp, pearson
from hgm.policies import DGMLikePolicy, GreedyPolicy, HGMPolicy, PolicyConfig, best_belief_agent, make_policy
from hgm.runtime import RunConfig, SearchRun, replay, run, run_async, run_sequential
from hgm.tree import AgentNode, SearchTree

__version__ = "0.1.0"

__all__ = [
    "AgentNode", "BetaParams", "CapacityError", "DGMLikePolicy", "EnvConfig", "EvaluationStarved",
    "Executor", "GreedyPolicy", "HGMError", "HGMPolicy", "HuxleyGodelSearch", "LatentAgent",
    "LogFormatError", "MicroMDP", "ParameterError", "PolicyConfig", "RunConfig", "SearchRun",
    "SearchTree", "SyntheticExecutor", "UsageError", "adjusted_cmp_prediction", "best_belief_agent",
    "beta_quantile", "cmp_exact", "correlation_report", "empirical_cmp", "make_policy",
    "mismatch_env_config", "pearson", "q_value", "reg_inc_beta", "replay", "run", "run_async",
    "run_sequential", "sample_beta", "thompson_select", "true_cmp", "verify_theorem",
]
