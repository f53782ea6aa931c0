"""Exact checks of the CMP / Q-value equivalence on tiny accept-reject MDPs.

Agents are reduced to a finite set of types. Each step the controller keeps
the current parent or accepts the current child as the new parent; the new
parent then produces a child whose type is drawn from the transition kernel,
consuming one unit of budget. When the budget reaches zero the better of the
final parent and child is returned.

Two independent routes compute action values:

* :func:`q_value` solves the optimal values by backward induction;
* :func:`cmp_exact` enumerates every trajectory of an explicit agent tree
  under the CMP-greedy controller and averages the utility of the final pick
  inside the clade of the chosen agent.

They agree exactly when following the CMP oracle is optimal.
"""

import enum
import functools
import json
import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from hgm.exceptions import CapacityError, ParameterError

ROW_TOL = 1e-12
TIE_TOL = 1e-12
MAX_TRAJECTORIES = 10**6


class GodelAction(str, enum.Enum):
    KEEP_PARENT = "keep_parent"
    ACCEPT_CHILD = "accept_child"


@dataclass(frozen=True)
class GodelState:
    parent_type: int
    child_type: int
    remaining_budget: int


@dataclass(frozen=True, eq=False)
class MicroMDP:
    utilities: tuple
    transition: tuple
    budget: int
    root_type: int = 0
    name: str = ""

    def __post_init__(self):
        u = tuple(float(x) for x in self.utilities)
        k = len(u)
        if not 1 <= k <= 5:
            raise ParameterError(f"need 1..5 agent types, got {k}")
        if any(not (0.0 <= x <= 1.0) for x in u):
            raise ParameterError("utilities must lie in [0, 1]")
        rows = tuple(tuple(float(p) for p in row) for row in self.transition)
        if len(rows) != k or any(len(r) != k for r in rows):
            raise ParameterError(f"transition must be a {k}x{k} matrix")
        for i, r in enumerate(rows):
            if any(p < 0 for p in r) or abs(math.fsum(r) - 1.0) > ROW_TOL:
                raise ParameterError(f"transition row {i} is not a probability distribution")
        if isinstance(self.budget, bool) or not isinstance(self.budget, int) or self.budget < 0:
            raise ParameterError("budget must be a nonnegative integer")
        if not 0 <= self.root_type < k:
            raise ParameterError("root_type out of range")
        object.__setattr__(self, "utilities", u)
        object.__setattr__(self, "transition", rows)

    @property
    def n_types(self):
        return len(self.utilities)

    def initial_state(self):
        # the root is observed as both parent and child before any modification
        return GodelState(self.root_type, self.root_type, self.budget)

    def successors(self, agent_type):
        return [(j, p) for j, p in enumerate(self.transition[agent_type]) if p > 0.0]

    def to_dict(self):
        return {
            "name": self.name,
            "utilities": list(self.utilities),
            "transition": [list(r) for r in self.transition],
            "budget": self.budget,
            "root_type": self.root_type,
        }


# -- route 1: backward induction -------------------------------------------

class _Solver:
    def __init__(self, mdp):
        self.mdp = mdp
        self.value = functools.lru_cache(maxsize=None)(self._value)
        self.q = functools.lru_cache(maxsize=None)(self._q)

    def _value(self, p, c, b):
        if b == 0:
            u = self.mdp.utilities
            return max(u[p], u[c])
        return max(self.q(p, c, b, a) for a in GodelAction)

    def _q(self, p, c, b, action):
        if b == 0:
            return self._value(p, c, 0)
        new_p = p if action is GodelAction.KEEP_PARENT else c
        return math.fsum(prob * self.value(new_p, j, b - 1) for j, prob in self.mdp.successors(new_p))


_solvers = weakref.WeakKeyDictionary()


def _solver(mdp):
    if mdp not in _solvers:
        _solvers[mdp] = _Solver(mdp)
    return _solvers[mdp]


def q_value(mdp, state, action):
    """Optimal action value by dynamic programming."""
    action = GodelAction(action)
    return _solver(mdp).q(state.parent_type, state.child_type, state.remaining_budget, action)


def state_value(mdp, state):
    return _solver(mdp).value(state.parent_type, state.child_type, state.remaining_budget)


def dp_decision(mdp, state):
    """DP-optimal action; ties keep the parent."""
    keep = q_value(mdp, state, GodelAction.KEEP_PARENT)
    accept = q_value(mdp, state, GodelAction.ACCEPT_CHILD)
    return GodelAction.ACCEPT_CHILD if accept > keep + TIE_TOL else GodelAction.KEEP_PARENT


# -- route 2: trajectory enumeration under the CMP-greedy controller --------

@dataclass
class _Lineage:
    """Explicit agent tree grown along one trajectory."""

    types: list = field(default_factory=list)
    parents: list = field(default_factory=list)

    def add(self, agent_type, parent):
        self.types.append(agent_type)
        self.parents.append(parent)
        return len(self.types) - 1

    def in_clade(self, node, root):
        while node is not None:
            if node == root:
                return True
            node = self.parents[node]
        return False

    def copy(self):
        return _Lineage(list(self.types), list(self.parents))


class CMPOracle:
    """Exact clade-metaproductivity of each action under the CMP-greedy controller.

    ``perturbation`` adds a constant to every accept-child value and exists to
    exercise the violation path of :func:`verify_theorem`.
    """

    def __init__(self, mdp, max_trajectories=MAX_TRAJECTORIES, perturbation=0.0):
        self.mdp = mdp
        self.max_trajectories = max_trajectories
        self.perturbation = perturbation
        self._decisions = {}
        self._values = {}
        self.trajectories = 0
        self.mass_errors = []

    def decision(self, state):
        """Controller choice from the observation alone; ties keep the parent."""
        if state not in self._decisions:
            keep = self.cmp(state, GodelAction.KEEP_PARENT)
            accept = self.cmp(state, GodelAction.ACCEPT_CHILD)
            choice = GodelAction.ACCEPT_CHILD if accept > keep + TIE_TOL else GodelAction.KEEP_PARENT
            self._decisions[state] = choice
        return self._decisions[state]

    def cmp(self, state, action):
        action = GodelAction(action)
        key = (state, action)
        if key not in self._values:
            value = self._enumerate(state, action)
            if action is GodelAction.ACCEPT_CHILD:
                value += self.perturbation
            self._values[key] = value
        return self._values[key]

    def _terminal_pick(self, lineage, parent, child):
        u = self.mdp.utilities
        # indicator score on the better of the two observed agents; ties keep the parent
        return child if u[lineage.types[child]] > u[lineage.types[parent]] else parent

    def _enumerate(self, state, action):
        lineage = _Lineage()
        parent = lineage.add(state.parent_type, None)
        child = lineage.add(state.child_type, parent)
        if state.remaining_budget == 0:
            pick = self._terminal_pick(lineage, parent, child)
            return self.mdp.utilities[lineage.types[pick]]
        anchor = parent if action is GodelAction.KEEP_PARENT else child

        total, mass = [], []
        stack = [(lineage, anchor, state.remaining_budget, 1.0)]
        count = 0
        while stack:
            lin, new_parent, budget, prob = stack.pop()
            for j, p in self.mdp.successors(lin.types[new_parent]):
                nxt = lin.copy()
                c = nxt.add(j, new_parent)
                b = budget - 1
                pr = prob * p
                if b == 0:
                    count += 1
                    if count > self.max_trajectories:
                        raise CapacityError(f"more than {self.max_trajectories} trajectories")
                    pick = self._terminal_pick(nxt, new_parent, c)
                    if not nxt.in_clade(pick, anchor):
                        raise AssertionError("final pick left the clade of the chosen agent")
                    total.append(pr * self.mdp.utilities[nxt.types[pick]])
                    mass.append(pr)
                    continue
                obs = GodelState(nxt.types[new_parent], j, b)
                chosen = new_parent if self.decision(obs) is GodelAction.KEEP_PARENT else c
                stack.append((nxt, chosen, b, pr))
        self.trajectories += count
        self.mass_errors.append(abs(math.fsum(mass) - 1.0))
        return math.fsum(total)


def cmp_exact(mdp, state, action, max_trajectories=MAX_TRAJECTORIES):
    """CMP of ``action`` at ``state`` under the CMP-greedy controller, by enumeration."""
    return CMPOracle(mdp, max_trajectories).cmp(state, action)


def reachable_states(mdp):
    """All observations reachable from the initial state, in BFS order."""
    start = mdp.initial_state()
    seen = {start}
    order = [start]
    i = 0
    while i < len(order):
        s = order[i]
        i += 1
        if s.remaining_budget == 0:
            continue
        for p in {s.parent_type, s.child_type}:
            for j, _ in mdp.successors(p):
                nxt = GodelState(p, j, s.remaining_budget - 1)
                if nxt not in seen:
                    seen.add(nxt)
                    order.append(nxt)
    return order


@dataclass
class OracleReport:
    name: str
    n_states: int = 0
    n_pairs: int = 0
    max_abs_diff: float = 0.0
    max_mass_error: float = 0.0
    n_trajectories: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def as_dict(self):
        return {
            "name": self.name,
            "ok": self.ok,
            "states": self.n_states,
            "pairs": self.n_pairs,
            "max_abs_diff": self.max_abs_diff,
            "max_mass_error": self.max_mass_error,
            "trajectories": self.n_trajectories,
            "violations": self.violations,
        }


def verify_theorem(mdp, tol=1e-9, perturbation=0.0, max_trajectories=MAX_TRAJECTORIES):
    """Compare enumerated CMP with DP Q-values at every reachable observation.

    Checks (a) |CMP - Q| <= ``tol`` for both actions wherever budget remains
    (terminal observations compare the single terminal value) and (b) that
    the CMP-greedy action equals the DP-optimal action.
    """
    oracle = CMPOracle(mdp, max_trajectories, perturbation)
    report = OracleReport(mdp.name)
    for state in reachable_states(mdp):
        report.n_states += 1
        actions = list(GodelAction) if state.remaining_budget > 0 else [GodelAction.KEEP_PARENT]
        for action in actions:
            report.n_pairs += 1
            c = oracle.cmp(state, action)
            q = q_value(mdp, state, action)
            diff = abs(c - q)
            report.max_abs_diff = max(report.max_abs_diff, diff)
            if diff > tol:
                report.violations.append(
                    {"state": _state_dict(state), "action": action.value, "cmp": c, "q": q}
                )
        if state.remaining_budget > 0:
            mine, best = oracle.decision(state), dp_decision(mdp, state)
            if mine is not best:
                report.violations.append(
                    {"state": _state_dict(state), "cmp_decision": mine.value, "dp_decision": best.value}
                )
    report.n_trajectories = oracle.trajectories
    report.max_mass_error = max(oracle.mass_errors, default=0.0)
    if report.max_mass_error > ROW_TOL:
        report.violations.append({"mass_error": report.max_mass_error})
    return report


def _state_dict(state):
    return {"parent": state.parent_type, "child": state.child_type, "budget": state.remaining_budget}


def random_mdp(rng, max_types=4, max_budget=4, name=""):
    """Random instance with 2..max_types types and budget 1..max_budget.

    Rows are Dirichlet draws with a random subset of entries zeroed so that
    sparse kernels and exact ties show up.
    """
    k = int(rng.integers(2, max_types + 1))
    budget = int(rng.integers(1, max_budget + 1))
    utilities = rng.random(k)
    if rng.random() < 0.2:
        utilities = np.round(utilities * 4) / 4
    rows = []
    for _ in range(k):
        row = rng.dirichlet(np.ones(k))
        mask = rng.random(k) < 0.3
        if mask.all():
            mask[int(rng.integers(k))] = False
        row[mask] = 0.0
        row = row / row.sum()
        rows.append(row.tolist())
    return MicroMDP(tuple(utilities.tolist()), tuple(map(tuple, rows)), budget,
                    int(rng.integers(k)), name=name)


def identity_mdp(utilities, budget, root_type=0):
    k = len(utilities)
    eye = tuple(tuple(1.0 if i == j else 0.0 for j in range(k)) for i in range(k))
    return MicroMDP(tuple(utilities), eye, budget, root_type, name="identity")


def load_instances(path):
    """Instances from JSON: one object or ``{"instances": [...]}``.

    Each object needs ``utilities``, ``transition`` and ``budget``; optional
    keys are ``root_type``, ``name`` and ``cmp_perturbation`` (fault injection).
    """
    with open(path) as fh:
        data = json.load(fh)
    items = data["instances"] if isinstance(data, dict) and "instances" in data else data
    if isinstance(items, dict):
        items = [items]
    out = []
    for i, item in enumerate(items):
        mdp = MicroMDP(
            tuple(item["utilities"]),
            tuple(tuple(r) for r in item["transition"]),
            int(item["budget"]),
            int(item.get("root_type", 0)),
            name=item.get("name", f"instance-{i}"),
        )
        out.append((mdp, float(item.get("cmp_perturbation", 0.0))))
    return out
