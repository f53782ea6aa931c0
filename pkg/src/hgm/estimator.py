"""scikit-learn style front end for the search."""

import dataclasses

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from hgm.environment import EnvConfig, Executor, MISMATCH_ENV
from hgm.metrics import correlation_report, estimator_for_policy
from hgm.policies import PolicyConfig
from hgm.runtime import RunConfig, run, run_async, run_sequential


class HuxleyGodelSearch(BaseEstimator):
    """Budgeted search over self-modifying agents.

    ``fit`` takes the environment: an :class:`EnvConfig`, a mapping of its
    fields, an :class:`Executor`, or ``None`` for the built-in mismatch
    environment. After fitting, ``best_agent_`` is the best-belief agent and
    ``tree_`` the final archive.

    Examples
    --------
    >>> search = HuxleyGodelSearch(budget=50, random_state=0).fit()
    >>> search.tree_.n_evaluations
    50
    """

    def __init__(
        self,
        budget=800,
        alpha_widening=0.6,
        epsilon_percentile=1.0,
        scheduler="b_over_b",
        tau0=1.0,
        policy_kind="hgm",
        init_expansions=5,
        workers=1,
        clock="simulated",
        random_state=0,
    ):
        self.budget = budget
        self.alpha_widening = alpha_widening
        self.epsilon_percentile = epsilon_percentile
        self.scheduler = scheduler
        self.tau0 = tau0
        self.policy_kind = policy_kind
        self.init_expansions = init_expansions
        self.workers = workers
        self.clock = clock
        self.random_state = random_state

    def _run_config(self, env):
        policy = PolicyConfig(
            alpha_widening=self.alpha_widening,
            epsilon_percentile=self.epsilon_percentile,
            scheduler=self.scheduler,
            tau0=self.tau0,
        )
        return RunConfig(
            seed=self.random_state,
            budget=self.budget,
            workers=self.workers,
            policy_kind=self.policy_kind,
            init_expansions=self.init_expansions,
            clock=self.clock,
            policy=policy,
            env=env,
        )

    def fit(self, X=None, y=None):
        executor = None
        if X is None:
            env = EnvConfig(**MISMATCH_ENV)
        elif isinstance(X, EnvConfig):
            env = X
        elif isinstance(X, dict):
            env = EnvConfig(**X)
        elif isinstance(X, Executor):
            executor = X
            env = getattr(X, "cfg", None) or EnvConfig()
        else:
            raise TypeError(f"cannot build an environment from {type(X).__name__}")
        config = self._run_config(env)
        if self.workers == 1 and self.clock == "simulated":
            result = run_sequential(config, executor)
        elif executor is not None:
            result = run_async(config, executor)
        else:
            result = run(config)
        self.result_ = result
        self.tree_ = result.tree
        self.best_agent_ = result.best_agent
        self.events_ = result.events
        self.n_evaluations_ = result.tree.n_evaluations
        return self

    def predict(self, X=None):
        """Id of the best-belief agent of the fitted run."""
        check_is_fitted(self, "best_agent_")
        return self.best_agent_

    def score(self, X=None, y=None):
        """True utility of the best-belief agent (synthetic environments only)."""
        check_is_fitted(self, "best_agent_")
        return self.result_.utility_of(self.best_agent_)

    def correlation_report(self, estimator=None):
        check_is_fitted(self, "tree_")
        return correlation_report(self.tree_, estimator or estimator_for_policy(self.policy_kind))

    def run_config(self):
        check_is_fitted(self, "result_")
        return dataclasses.replace(self.result_.config)
