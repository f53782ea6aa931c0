"""Budgeted execution engine.

A single coordinator (:class:`SearchRun`) owns the tree and the budget. Every
action goes through decide -> dispatch -> commit, and each step is appended to
an event log that is sufficient to replay and verify the run.

Randomness is keyed, never shared: the draws behind decision ``d`` come from
``default_rng([seed, 0, d])`` and the outcome of action ``k`` from
``default_rng([seed, 1, k])`` (latency from ``[seed, 2, k]``). Action outcomes
therefore do not depend on how actions interleave across workers.
"""

import concurrent.futures
import copy
import dataclasses
import heapq
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from hgm.environment import EnvConfig, SyntheticExecutor, WorkerFailure, LatentAgent
from hgm.exceptions import LogFormatError, ParameterError, UsageError
from hgm.policies import (
    BudgetState,
    Evaluate,
    Expand,
    PolicyConfig,
    best_belief_agent,
    make_policy,
    widening_allows_expand,
)
from hgm.tree import SearchTree
from hgm.validation import check_positive_int

logger = logging.getLogger(__name__)

SCHEMA = "hgm-runlog/1"

DECISION = "Decision"
EXPAND_START = "ExpandStart"
EXPAND_COMMIT = "ExpandCommit"
EXPAND_CANCEL = "ExpandCancel"
EVAL_START = "EvalStart"
EVAL_COMMIT = "EvalCommit"
EVAL_CANCEL = "EvalCancel"
ACTION_FAILED = "ActionFailed"
FINAL_SELECTION = "FinalSelection"
EVENT_KINDS = {
    DECISION, EXPAND_START, EXPAND_COMMIT, EXPAND_CANCEL, EVAL_START,
    EVAL_COMMIT, EVAL_CANCEL, ACTION_FAILED, FINAL_SELECTION,
}

_DECISION_STREAM, _OUTCOME_STREAM, _LATENCY_STREAM = 0, 1, 2
_MAX_CONSECUTIVE_FAILURES = 1000


@dataclass
class RunConfig:
    seed: int = 0
    budget: int = 800
    workers: int = 1
    policy_kind: str = "hgm"
    init_expansions: int = 5
    clock: str = "simulated"
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    env: EnvConfig = field(default_factory=EnvConfig)

    def __post_init__(self):
        if isinstance(self.policy, dict):
            self.policy = PolicyConfig(**self.policy)
        if isinstance(self.env, dict):
            self.env = EnvConfig(**self.env)
        self.seed = check_positive_int(self.seed, "seed", minimum=0)
        if self.seed >= 2**64:
            raise ParameterError("seed must fit in 64 bits")
        self.budget = check_positive_int(self.budget, "budget")
        self.workers = check_positive_int(self.workers, "workers")
        self.init_expansions = check_positive_int(self.init_expansions, "init_expansions", minimum=0)
        make_policy(self.policy_kind)
        if self.clock not in ("simulated", "threads"):
            raise ParameterError(f"clock must be 'simulated' or 'threads', got {self.clock!r}")

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def decision_rng(seed, index):
    return np.random.default_rng([seed, _DECISION_STREAM, index])


def outcome_rng(seed, index):
    return np.random.default_rng([seed, _OUTCOME_STREAM, index])


def latency_rng(seed, index):
    return np.random.default_rng([seed, _LATENCY_STREAM, index])


def action_to_dict(action):
    if isinstance(action, Expand):
        return {"kind": "expand", "parent": action.parent}
    return {"kind": "evaluate", "agent": action.agent, "task": action.task}


def action_from_dict(data):
    if data["kind"] == "expand":
        return Expand(data["parent"])
    return Evaluate(data["agent"], data["task"])


@dataclass
class Ticket:
    index: int
    decision: int
    action: object


@dataclass
class RunResult:
    config: RunConfig
    tree: SearchTree
    handles: dict
    best_agent: int
    events: list
    status: str
    wall_time: float = 0.0
    simulated_time: float = 0.0

    def utility_of(self, agent):
        handle = self.handles[agent]
        return handle.u if isinstance(handle, LatentAgent) else None

    def log_lines(self):
        return format_log(self.config, self.events, self.handles.get(0))


class SearchRun:
    """Mutable search state plus the event log; all mutations go through here."""

    def __init__(self, config, executor=None):
        self.config = config
        self.executor = executor or SyntheticExecutor(config.env)
        self.policy = make_policy(config.policy_kind, config.policy)
        self.tree = SearchTree(config.env.task_count)
        self.handles = {0: self.executor.root()}
        self.budget = BudgetState(config.budget)
        self.events = []
        self.seq_offset = 0
        self.n_decisions = 0
        self.n_actions = 0
        self.logical_time = 0
        self.pending_init = config.init_expansions if config.policy_kind == "hgm" else 0
        self.in_flight = {}
        self.status = "running"

    # -- logging -------------------------------------------------------
    def _log(self, kind, **payload):
        self.events.append(
            {"seq": self.seq_offset + len(self.events), "t": self.logical_time, "kind": kind, **payload}
        )

    # -- decide / dispatch / commit -------------------------------------
    def decide(self):
        """Pick the next action and log the decision, or return None to wait."""
        if self.budget.exhausted:
            return None
        info = {}
        if self.pending_init:
            if not self.budget.can_dispatch_eval:
                return None
            action, reason = Expand(self.tree.root), "init"
            self.pending_init -= 1
        else:
            rng = decision_rng(self.config.seed, self.n_decisions)
            action, info = self.policy.decide(self.tree, self.budget, rng)
            if action is None:
                return None
            reason = "policy"
        self._log(
            DECISION,
            decision=self.n_decisions,
            reason=reason,
            action=action_to_dict(action),
            budget=self.budget.as_dict(),
            tree_size=len(self.tree),
            info=info,
        )
        self.n_decisions += 1
        return action

    def dispatch(self, action):
        ticket = Ticket(self.n_actions, self.n_decisions - 1, action)
        self.n_actions += 1
        if isinstance(action, Expand):
            self.tree.start_expansion(action.parent)
            self.budget.inflight_expansions += 1
            self._log(EXPAND_START, action=ticket.index, decision=ticket.decision, parent=action.parent)
        else:
            self.tree.start_evaluation(action.agent, action.task)
            self.budget.inflight_evals += 1
            self._log(EVAL_START, action=ticket.index, decision=ticket.decision,
                      agent=action.agent, task=action.task)
        self.in_flight[ticket.index] = ticket
        return ticket

    def execute(self, ticket):
        """Run the action on the executor. Pure with respect to the search state."""
        rng = outcome_rng(self.config.seed, ticket.index)
        action = ticket.action
        if isinstance(action, Expand):
            return self.executor.expand(self.handles[action.parent], rng)
        return self.executor.evaluate(self.handles[action.agent], action.task, rng)

    def latency(self, ticket):
        return self.executor.latency(latency_rng(self.config.seed, ticket.index))

    def commit(self, ticket, result):
        del self.in_flight[ticket.index]
        self.logical_time += 1
        action = ticket.action
        if isinstance(action, Expand):
            self.tree.end_expansion(action.parent)
            self.budget.inflight_expansions -= 1
            child = self.tree.add_child(action.parent)
            self.handles[child] = result
            self._log(EXPAND_COMMIT, action=ticket.index, parent=action.parent, child=child,
                      latent=self.executor.describe(result))
        else:
            success = bool(result)
            self.tree.record_evaluation(action.agent, action.task, success)
            self.budget.inflight_evals -= 1
            self.budget.committed_evals += 1
            node = self.tree.nodes[action.agent]
            self._log(EVAL_COMMIT, action=ticket.index, agent=action.agent, task=action.task,
                      success=success, committed=self.budget.committed_evals,
                      counts=[node.n_success, node.n_failure, node.clade_success, node.clade_failure])

    def fail(self, ticket, error):
        """Drop a failed action without touching any counter."""
        del self.in_flight[ticket.index]
        self.logical_time += 1
        self._release(ticket)
        self._log(ACTION_FAILED, action=ticket.index, error=str(error))
        logger.warning("action %d failed: %s", ticket.index, error)

    def cancel(self, ticket):
        del self.in_flight[ticket.index]
        self._release(ticket)
        kind = EXPAND_CANCEL if isinstance(ticket.action, Expand) else EVAL_CANCEL
        self._log(kind, action=ticket.index)

    def _release(self, ticket):
        action = ticket.action
        if isinstance(action, Expand):
            self.tree.end_expansion(action.parent)
            self.budget.inflight_expansions -= 1
        else:
            self.tree.cancel_evaluation(action.agent, action.task)
            self.budget.inflight_evals -= 1

    def cancel_all(self):
        for index in sorted(self.in_flight):
            self.cancel(self.in_flight[index])

    def finalize(self, status=None):
        self.status = status or ("complete" if self.budget.exhausted else "starved")
        best = best_belief_agent(self.tree, self.config.policy.epsilon_percentile)
        self._log(
            FINAL_SELECTION,
            agent=best,
            status=self.status,
            evaluations=self.budget.committed_evals,
            tree_size=len(self.tree),
            epsilon=self.config.policy.epsilon_percentile,
        )
        return best

    def result(self, best, wall_time=0.0, simulated_time=0.0):
        return RunResult(self.config, self.tree, self.handles, best, self.events, self.status,
                         wall_time, simulated_time)

    # -- resumability ---------------------------------------------------
    def snapshot(self):
        """Quiescent state (no work in flight) as plain data."""
        if self.in_flight:
            raise UsageError("cannot snapshot while actions are in flight")
        return {
            "schema": SCHEMA,
            "config": self.config.to_dict(),
            "tree": self.tree.snapshot(),
            "handles": {str(k): self.executor.describe(h) for k, h in self.handles.items()},
            "counters": {
                "decisions": self.n_decisions,
                "actions": self.n_actions,
                "logical_time": self.logical_time,
                "pending_init": self.pending_init,
                "committed": self.budget.committed_evals,
                "events": self.seq_offset + len(self.events),
            },
        }

    @classmethod
    def from_snapshot(cls, data, executor=None):
        """Rebuild a run from :meth:`snapshot` output (synthetic handles only)."""
        run = cls(RunConfig.from_dict(data["config"]), executor)
        run.tree = SearchTree.from_snapshot(data["tree"])
        run.handles = {int(k): LatentAgent(**v) for k, v in data["handles"].items()}
        c = data["counters"]
        run.n_decisions = c["decisions"]
        run.n_actions = c["actions"]
        run.logical_time = c["logical_time"]
        run.pending_init = c["pending_init"]
        run.budget.committed_evals = c["committed"]
        run.seq_offset = c.get("events", 0)
        return run

    def fork(self, seed):
        """Independent copy of a quiescent run that continues under a new seed."""
        if self.in_flight:
            raise UsageError("cannot fork while actions are in flight")
        other = copy.copy(self)
        other.config = dataclasses.replace(self.config, seed=seed)
        other.tree = copy.deepcopy(self.tree)
        other.handles = dict(self.handles)
        other.budget = dataclasses.replace(self.budget)
        other.seq_offset = self.seq_offset + len(self.events)
        other.events = []
        other.in_flight = {}
        return other


def _drive_sequential(run):
    failures = 0
    while not run.budget.exhausted:
        action = run.decide()
        if action is None:
            return "starved"
        ticket = run.dispatch(action)
        try:
            result = run.execute(ticket)
        except WorkerFailure as exc:
            run.fail(ticket, exc)
            failures += 1
            if failures >= _MAX_CONSECUTIVE_FAILURES:
                return "failed"
            continue
        failures = 0
        run.commit(ticket, result)
    return "complete"


def run_sequential(config, executor=None, resume=None):
    """Run to budget exhaustion with one action at a time.

    ``resume`` may be a :meth:`SearchRun.snapshot` dictionary to continue from.
    """
    start = time.perf_counter()
    run = SearchRun.from_snapshot(resume, executor) if resume else SearchRun(config, executor)
    status = _drive_sequential(run)
    best = run.finalize(status)
    return run.result(best, wall_time=time.perf_counter() - start)


class _SimulatedPool:
    """Discrete-event worker pool; completions are ordered by (finish time, action index)."""

    def __init__(self, run):
        self.run = run
        self.now = 0.0
        self.heap = []

    def submit(self, ticket):
        try:
            outcome = (True, self.run.execute(ticket))
        except WorkerFailure as exc:
            outcome = (False, exc)
        finish = self.now + self.run.latency(ticket)
        heapq.heappush(self.heap, (finish, ticket.index, ticket, outcome))

    def __len__(self):
        return len(self.heap)

    def next_completed(self):
        finish, _, ticket, outcome = heapq.heappop(self.heap)
        self.now = finish
        return ticket, outcome

    def close(self):
        pass


class _ThreadPool:
    """Real concurrent workers; commit order follows completion order."""

    def __init__(self, run, workers, time_scale):
        self.run = run
        self.pool = concurrent.futures.ThreadPoolExecutor(max_workers=workers)
        self.futures = {}
        self.done = []
        self.time_scale = time_scale
        self.start = time.perf_counter()

    def _work(self, ticket):
        if self.time_scale:
            time.sleep(self.run.latency(ticket) * self.time_scale)
        return self.run.execute(ticket)

    def submit(self, ticket):
        self.futures[self.pool.submit(self._work, ticket)] = ticket

    def __len__(self):
        return len(self.futures) + len(self.done)

    def next_completed(self):
        if not self.done:
            finished, _ = concurrent.futures.wait(
                self.futures, return_when=concurrent.futures.FIRST_COMPLETED
            )
            self.done = sorted(finished, key=lambda f: self.futures[f].index)
        fut = self.done.pop(0)
        ticket = self.futures.pop(fut)
        try:
            return ticket, (True, fut.result())
        except WorkerFailure as exc:
            return ticket, (False, exc)

    @property
    def now(self):
        return time.perf_counter() - self.start

    def close(self):
        self.pool.shutdown(wait=True, cancel_futures=True)


def run_async(config, executor=None, time_scale=0.0):
    """Keep ``config.workers`` actions in flight until the budget is spent.

    Decisions see in-flight work: ``N`` counts dispatched evaluations and the
    tree size counts dispatched expansions. Work still running when the last
    evaluation commits is cancelled and logged.
    """
    start = time.perf_counter()
    run = SearchRun(config, executor)
    if config.clock == "threads":
        pool = _ThreadPool(run, config.workers, time_scale)
    else:
        pool = _SimulatedPool(run)
    status = "complete"
    failures = 0
    try:
        while not run.budget.exhausted:
            while len(pool) < config.workers:
                action = run.decide()
                if action is None:
                    break
                pool.submit(run.dispatch(action))
            if not len(pool):
                status = "starved"
                break
            ticket, (ok, value) = pool.next_completed()
            if ok:
                failures = 0
                run.commit(ticket, value)
            else:
                run.fail(ticket, value)
                failures += 1
                if failures >= _MAX_CONSECUTIVE_FAILURES:
                    status = "failed"
                    break
        sim_time = pool.now
    finally:
        pool.close()
    run.cancel_all()
    best = run.finalize(status)
    return run.result(best, wall_time=time.perf_counter() - start,
                      simulated_time=sim_time if config.clock == "simulated" else 0.0)


def run(config, executor=None):
    """Sequential driver for one worker, asynchronous otherwise."""
    if config.workers == 1 and config.clock == "simulated":
        return run_sequential(config, executor)
    return run_async(config, executor)


# -- log format ------------------------------------------------------------

def _dumps(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def format_log(config, events, root_handle=None):
    header = {"schema": SCHEMA, "config": config.to_dict()}
    if isinstance(root_handle, LatentAgent):
        header["root"] = {"u": root_handle.u, "m": root_handle.m}
    return [_dumps(header)] + [_dumps(e) for e in events]


def write_log(path, result):
    with open(path, "w") as fh:
        for line in result.log_lines():
            fh.write(line + "\n")


def parse_log(lines):
    """Return ``(header, events)`` from log lines; raises LogFormatError."""
    header, events = None, []
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise LogFormatError(f"invalid JSON: {exc.msg}", lineno) from None
        if not isinstance(obj, dict):
            raise LogFormatError("record is not an object", lineno)
        if header is None:
            if obj.get("schema") != SCHEMA:
                raise LogFormatError(
                    f"unsupported schema {obj.get('schema')!r}; expected {SCHEMA!r}", lineno
                )
            header = obj
            continue
        for key in ("seq", "t", "kind"):
            if key not in obj:
                raise LogFormatError(f"missing field {key!r}", lineno)
        if obj["kind"] not in EVENT_KINDS:
            raise LogFormatError(f"unknown event kind {obj['kind']!r}", lineno)
        obj["_line"] = lineno
        events.append(obj)
    if header is None:
        raise LogFormatError("empty log", 1)
    return header, events


def read_log(path):
    with open(path) as fh:
        return parse_log(fh)


# -- replay ------------------------------------------------------------------

@dataclass
class ReplayReport:
    n_events: int = 0
    n_decisions: int = 0
    n_eval_commits: int = 0
    status: str = ""
    divergences: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.divergences

    @property
    def first_divergence(self):
        return self.divergences[0][0] if self.divergences else None

    def add(self, seq, message):
        self.divergences.append((seq, message))


def replay(lines, verify_outcomes=True):
    """Re-derive a logged run and report every disagreement with the log.

    Counters are rebuilt from EvalCommit events, each Decision is recomputed
    from the reconstructed state with its keyed random stream, and (for the
    synthetic environment) every outcome is regenerated from the logged
    latent agents.
    """
    header, events = parse_log(lines)
    config = RunConfig.from_dict(header["config"])
    policy = make_policy(config.policy_kind, config.policy)
    executor = SyntheticExecutor(config.env)
    tree = SearchTree(config.env.task_count)
    handles = {0: LatentAgent(**header["root"])} if "root" in header else {}
    budget = BudgetState(config.budget)
    report = ReplayReport(n_events=len(events))
    open_actions = {}
    seen_pairs = set()
    n_decisions = 0
    pending_init = config.init_expansions if config.policy_kind == "hgm" else 0
    last_decision = None

    for i, ev in enumerate(events):
        seq, kind = ev["seq"], ev["kind"]
        if seq != i:
            report.add(seq, f"sequence number {seq} where {i} expected")
        try:
            if kind == DECISION:
                n_decisions = _replay_decision(ev, config, policy, tree, budget, n_decisions,
                                               pending_init, report)
                if ev.get("reason") == "init":
                    pending_init -= 1
                last_decision = ev
            elif kind in (EXPAND_START, EVAL_START):
                if last_decision is None or ev.get("decision") != last_decision["decision"]:
                    report.add(seq, "start event without its decision")
                else:
                    logged = action_from_dict(last_decision["action"])
                    started = (Expand(ev["parent"]) if kind == EXPAND_START
                               else Evaluate(ev["agent"], ev["task"]))
                    if logged != started:
                        report.add(seq, f"started {started} but decision chose {logged}")
                last_decision = None
                if ev["action"] in open_actions:
                    report.add(seq, f"action {ev['action']} started twice")
                if kind == EXPAND_START:
                    tree.start_expansion(ev["parent"])
                    budget.inflight_expansions += 1
                    open_actions[ev["action"]] = Expand(ev["parent"])
                else:
                    tree.start_evaluation(ev["agent"], ev["task"])
                    budget.inflight_evals += 1
                    open_actions[ev["action"]] = Evaluate(ev["agent"], ev["task"])
                if budget.n_evals > budget.total_budget:
                    report.add(seq, "committed + in-flight evaluations exceed the budget")
            elif kind == EXPAND_COMMIT:
                action = open_actions.pop(ev["action"], None)
                if not isinstance(action, Expand) or action.parent != ev["parent"]:
                    report.add(seq, f"commit of unknown expansion {ev['action']}")
                    continue
                tree.end_expansion(action.parent)
                budget.inflight_expansions -= 1
                child = tree.add_child(action.parent)
                if child != ev["child"]:
                    report.add(seq, f"child id {ev['child']} where {child} expected")
                if ev.get("latent") is not None:
                    handles[child] = LatentAgent(**ev["latent"])
                    if verify_outcomes and action.parent in handles:
                        expect = executor.expand(handles[action.parent], outcome_rng(config.seed, ev["action"]))
                        if expect != handles[child]:
                            report.add(seq, "expansion outcome differs from its keyed stream")
            elif kind == EVAL_COMMIT:
                action = open_actions.pop(ev["action"], None)
                if action != Evaluate(ev["agent"], ev["task"]):
                    report.add(seq, f"commit of unknown evaluation {ev['action']}")
                    continue
                pair = (ev["agent"], ev["task"])
                if pair in seen_pairs:
                    report.add(seq, f"agent {pair[0]} evaluated twice on task {pair[1]}")
                seen_pairs.add(pair)
                tree.record_evaluation(ev["agent"], ev["task"], ev["success"])
                budget.inflight_evals -= 1
                budget.committed_evals += 1
                report.n_eval_commits += 1
                node = tree.nodes[ev["agent"]]
                counts = [node.n_success, node.n_failure, node.clade_success, node.clade_failure]
                if counts != ev["counts"] or budget.committed_evals != ev["committed"]:
                    report.add(seq, f"counters {counts} differ from logged {ev['counts']}")
                if verify_outcomes and ev["agent"] in handles:
                    expect = executor.evaluate(handles[ev["agent"]], ev["task"],
                                               outcome_rng(config.seed, ev["action"]))
                    if expect != ev["success"]:
                        report.add(seq, "evaluation outcome differs from its keyed stream")
                if budget.committed_evals > budget.total_budget:
                    report.add(seq, "more evaluations committed than the budget allows")
            elif kind in (EXPAND_CANCEL, EVAL_CANCEL, ACTION_FAILED):
                action = open_actions.pop(ev["action"], None)
                if action is None:
                    report.add(seq, f"{kind} for unknown action {ev['action']}")
                    continue
                if isinstance(action, Expand):
                    tree.end_expansion(action.parent)
                    budget.inflight_expansions -= 1
                else:
                    tree.cancel_evaluation(action.agent, action.task)
                    budget.inflight_evals -= 1
            elif kind == FINAL_SELECTION:
                report.status = ev["status"]
                if open_actions:
                    report.add(seq, f"{len(open_actions)} actions never resolved")
                best = best_belief_agent(tree, config.policy.epsilon_percentile)
                if best != ev["agent"]:
                    report.add(seq, f"final selection {ev['agent']} but {best} recomputed")
                if ev["status"] == "complete" and budget.committed_evals != config.budget:
                    report.add(seq, f"{budget.committed_evals} evaluations in a completed run")
        except (UsageError, KeyError, TypeError) as exc:
            report.add(seq, f"inconsistent event: {exc}")
    report.n_decisions = n_decisions
    return report


def _replay_decision(ev, config, policy, tree, budget, n_decisions, pending_init, report):
    seq = ev["seq"]
    if ev["decision"] != n_decisions:
        report.add(seq, f"decision index {ev['decision']} where {n_decisions} expected")
    if ev["budget"] != budget.as_dict():
        report.add(seq, f"budget snapshot {ev['budget']} differs from replayed {budget.as_dict()}")
    if ev["tree_size"] != len(tree):
        report.add(seq, f"tree size {ev['tree_size']} differs from replayed {len(tree)}")
    logged = action_from_dict(ev["action"])
    if ev["reason"] == "init":
        if pending_init <= 0 or logged != Expand(tree.root):
            report.add(seq, "unexpected initialisation decision")
        return n_decisions + 1
    info = ev.get("info", {})
    if config.policy_kind == "hgm":
        size_eff = len(tree) + budget.inflight_expansions
        rule = "expand" if widening_allows_expand(budget.n_evals, size_eff, config.policy.alpha_widening) else "evaluate"
        if info.get("rule") != rule or info.get("N") != budget.n_evals or info.get("size_eff") != size_eff:
            report.add(seq, f"widening rule gives {rule} (N={budget.n_evals}, size={size_eff}), log says {info}")
        if config.policy.scheduler == "b_over_b":
            tau = config.budget / (config.budget - budget.committed_evals)
            if info.get("tau") != tau:
                report.add(seq, f"tau {info.get('tau')} differs from B/b = {tau}")
    action, _ = policy.decide(tree, budget, decision_rng(config.seed, ev["decision"]))
    if action != logged:
        report.add(seq, f"decision re-derived as {action}, log says {logged}")
    return n_decisions + 1


def rebuild_from_log(lines):
    """Final ``(config, tree, handles, final_event)`` of a logged run."""
    header, events = parse_log(lines)
    config = RunConfig.from_dict(header["config"])
    tree = SearchTree(config.env.task_count)
    handles = {0: LatentAgent(**header["root"])} if "root" in header else {}
    final = None
    for ev in events:
        try:
            if ev["kind"] == EXPAND_COMMIT:
                child = tree.add_child(ev["parent"])
                if ev.get("latent") is not None:
                    handles[child] = LatentAgent(**ev["latent"])
            elif ev["kind"] == EVAL_COMMIT:
                tree.record_evaluation(ev["agent"], ev["task"], ev["success"])
            elif ev["kind"] == FINAL_SELECTION:
                final = ev
        except (KeyError, UsageError) as exc:
            raise LogFormatError(f"inconsistent event: {exc}", ev["_line"]) from None
    return config, tree, handles, final
