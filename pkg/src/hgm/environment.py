"""Synthetic self-improvement environment.

Each agent carries a hidden utility ``u`` (per-task success probability) and a
hidden metaproductivity ``m`` that shifts the expected utility of its
children. A negative ``u_m_coupling`` makes lucky utility jumps come with a
loss of metaproductivity, so a high-scoring agent can have a poor lineage.
"""

import abc
import math
from dataclasses import dataclass, field

import numpy as np

from hgm.exceptions import HGMError, ParameterError
from hgm.validation import check_positive_int, check_real, check_unit_interval


class WorkerFailure(HGMError):
    """Raised by an executor when an action could not be carried out."""


def clip01(x):
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class LatentAgent:
    u: float
    m: float

    def __post_init__(self):
        check_unit_interval(self.u, "u")
        check_unit_interval(self.m, "m")


@dataclass
class EnvConfig:
    """Parameters of the lineage model.

    ``task_difficulty`` is ``"uniform"`` (no per-task offset) or one additive
    offset per task. Latency and failure settings only matter for the
    asynchronous driver.
    """

    task_count: int = 60
    root_u: float = 0.4
    root_m: float = 0.5
    drift_gain: float = 0.0
    sigma_u: float = 0.05
    sigma_m: float = 0.05
    u_m_coupling: float = 0.0
    task_difficulty: object = "uniform"
    latency_constant: float = 0.0
    latency_exp_mean: float = 0.0
    failure_rate: float = 0.0

    def __post_init__(self):
        self.task_count = check_positive_int(self.task_count, "task_count")
        self.root_u = check_unit_interval(self.root_u, "root_u")
        self.root_m = check_unit_interval(self.root_m, "root_m")
        self.drift_gain = check_real(self.drift_gain, "drift_gain")
        self.sigma_u = check_real(self.sigma_u, "sigma_u", 0.0)
        self.sigma_m = check_real(self.sigma_m, "sigma_m", 0.0)
        self.u_m_coupling = check_real(self.u_m_coupling, "u_m_coupling", -1.0, 1.0)
        self.latency_constant = check_real(self.latency_constant, "latency_constant", 0.0)
        self.latency_exp_mean = check_real(self.latency_exp_mean, "latency_exp_mean", 0.0)
        self.failure_rate = check_real(self.failure_rate, "failure_rate", 0.0, 1.0, high_open=True)
        if isinstance(self.task_difficulty, str):
            if self.task_difficulty != "uniform":
                raise ParameterError("task_difficulty must be 'uniform' or a list of offsets")
        else:
            offsets = [check_real(v, "task_difficulty[i]") for v in self.task_difficulty]
            if len(offsets) != self.task_count:
                raise ParameterError(
                    f"task_difficulty has {len(offsets)} entries, expected {self.task_count}"
                )
            self.task_difficulty = offsets

    def difficulty_offset(self, task):
        if self.task_difficulty == "uniform":
            return 0.0
        return self.task_difficulty[task]


# Default lineage model in which own score is a weak guide to lineage quality.
MISMATCH_ENV = dict(
    task_count=60,
    root_u=0.4,
    root_m=0.5,
    drift_gain=0.3,
    sigma_u=0.08,
    sigma_m=0.25,
    u_m_coupling=-0.9,
)


def mismatch_env_config(**overrides):
    return EnvConfig(**{**MISMATCH_ENV, **overrides})


def load_difficulty_file(path):
    """Read one real offset per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ParameterError(f"{path}:{lineno}: not a number: {line!r}") from None
    return values


def spawn_root(cfg):
    return LatentAgent(cfg.root_u, cfg.root_m)


def mutate(parent, cfg, rng):
    """Child of ``parent``; consumes exactly two standard normal draws."""
    g1, g2 = (float(g) for g in rng.standard_normal(2))
    rho = cfg.u_m_coupling
    u = clip01(parent.u + cfg.drift_gain * (parent.m - 0.5) + cfg.sigma_u * g1)
    m = clip01(parent.m + cfg.sigma_m * (rho * g1 + math.sqrt(1.0 - rho * rho) * g2))
    return LatentAgent(u, m)


def success_probability(agent, task, cfg):
    return clip01(agent.u + cfg.difficulty_offset(task))


def evaluate_task(agent, task, cfg, rng):
    """One Bernoulli trial; consumes exactly one uniform draw."""
    if not 0 <= task < cfg.task_count:
        raise ParameterError(f"task {task} outside [0, {cfg.task_count})")
    return bool(rng.random() < success_probability(agent, task, cfg))


class Executor(abc.ABC):
    """Backend that creates and scores agents behind opaque handles.

    Outcomes must be stationary per (agent, task): the success probability of
    an evaluation may not depend on when it runs or on earlier calls.
    """

    @abc.abstractmethod
    def root(self):
        """Handle of the initial agent."""

    @abc.abstractmethod
    def expand(self, parent_handle, rng):
        """Produce a self-modification of ``parent_handle`` and return its handle."""

    @abc.abstractmethod
    def evaluate(self, handle, task, rng):
        """Run ``task`` with the agent behind ``handle``; return success as bool."""

    def latency(self, rng):
        """Simulated duration of one action (used only by the simulated clock)."""
        return 0.0

    def describe(self, handle):
        """JSON-friendly description of a handle for the run log."""
        return None


@dataclass
class SyntheticExecutor(Executor):
    cfg: EnvConfig = field(default_factory=EnvConfig)

    def root(self):
        return spawn_root(self.cfg)

    def _maybe_fail(self, rng):
        if self.cfg.failure_rate and rng.random() < self.cfg.failure_rate:
            raise WorkerFailure("injected worker failure")

    def expand(self, parent_handle, rng):
        child = mutate(parent_handle, self.cfg, rng)
        self._maybe_fail(rng)
        return child

    def evaluate(self, handle, task, rng):
        outcome = evaluate_task(handle, task, self.cfg, rng)
        self._maybe_fail(rng)
        return outcome

    def latency(self, rng):
        extra = rng.exponential(self.cfg.latency_exp_mean) if self.cfg.latency_exp_mean else 0.0
        return self.cfg.latency_constant + float(extra)

    def describe(self, handle):
        return {"u": handle.u, "m": handle.m}


def true_cmp(node, rollout, rollouts, rng, utility=None):
    """Monte-Carlo clade-metaproductivity of ``node``.

    ``rollout(rng)`` continues the search from the current state until the
    budget is spent and returns ``(tree, handles)``, where ``handles`` maps node
    id to the agent behind it. Each rollout contributes the best true utility in
    the clade of ``node``. Returns ``(mean, standard_error)``.
    """
    return true_cmp_many([node], rollout, rollouts, rng, utility)[node]


def true_cmp_many(nodes, rollout, rollouts, rng, utility=None):
    """:func:`true_cmp` for several nodes from one shared set of rollouts."""
    rollouts = check_positive_int(rollouts, "rollouts")
    utility = utility or (lambda h: h.u)
    values = np.empty((len(nodes), rollouts))
    for i in range(rollouts):
        tree, handles = rollout(rng)
        for k, node in enumerate(nodes):
            values[k, i] = max(utility(handles[a]) for a in tree.clade_members(node))
    out = {}
    for k, node in enumerate(nodes):
        se = float(values[k].std(ddof=1) / math.sqrt(rollouts)) if rollouts > 1 else 0.0
        out[node] = (float(values[k].mean()), se)
    return out
