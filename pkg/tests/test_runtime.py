import dataclasses
import json
from collections import Counter

import pytest

from conftest import mismatch_config
from hgm.exceptions import LogFormatError
from hgm.runtime import (
    RunConfig,
    SearchRun,
    format_log,
    parse_log,
    read_log,
    rebuild_from_log,
    replay,
    run,
    run_async,
    run_sequential,
    write_log,
)
from test_tree import check_invariants


def kinds(result):
    return Counter(e["kind"] for e in result.events)


def widening_recurrence(budget, init, task_count=60):
    """Final tree size from N**3 >= s**5 in exact integers (alpha = 0.6, sequential)."""
    size, n = 1 + init, 0
    while n < budget:
        if n ** 3 >= size ** 5:
            size += 1
        else:
            n += 1
    return size


def check_log_invariants(result):
    cfg = result.config
    ev = result.events
    assert kinds(result)["EvalCommit"] == (cfg.budget if result.status == "complete" else result.tree.n_evaluations)
    pairs = [(e["agent"], e["task"]) for e in ev if e["kind"] == "EvalCommit"]
    assert len(pairs) == len(set(pairs))
    started = {e["action"] for e in ev if e["kind"] in ("EvalStart", "ExpandStart")}
    closed = [e["action"] for e in ev if e["kind"] in ("EvalCommit", "ExpandCommit", "EvalCancel",
                                                        "ExpandCancel", "ActionFailed")]
    assert sorted(closed) == sorted(started)
    assert [e["seq"] for e in ev] == list(range(len(ev)))
    ts = [e["t"] for e in ev]
    assert ts == sorted(ts)
    for e in ev:
        if e["kind"] == "Decision":
            b = e["budget"]
            assert b["committed"] + b["inflight_evals"] <= cfg.budget
    assert ev[-1]["kind"] == "FinalSelection"
    check_invariants(result.tree)
    _, rebuilt, _, final = rebuild_from_log(result.log_lines())
    assert rebuilt.snapshot() == result.tree.snapshot()
    assert final["agent"] == result.best_agent


def test_budget_one_without_init():
    res = run_sequential(RunConfig(budget=1, init_expansions=0))
    k = kinds(res)
    assert k["EvalCommit"] == 1 and k["FinalSelection"] == 1
    assert res.status == "complete"


def test_sequential_determinism():
    cfg = mismatch_config(budget=300, seed=4)
    assert run_sequential(cfg).log_lines() == run_sequential(cfg).log_lines()
    other = run_sequential(dataclasses.replace(cfg, seed=5)).log_lines()
    assert other != run_sequential(cfg).log_lines()


@pytest.mark.parametrize("seed", [0, 3, 11])
def test_tree_size_follows_widening_recurrence(seed):
    cfg = mismatch_config(budget=800, seed=seed)
    res = run_sequential(cfg)
    assert len(res.tree) == widening_recurrence(800, cfg.init_expansions)
    for e in res.events:
        if e["kind"] == "Decision" and e["reason"] == "policy":
            n, s = e["info"]["N"], e["info"]["size_eff"]
            assert (e["info"]["rule"] == "expand") == (n ** 3 >= s ** 5)


@pytest.mark.parametrize("kind", ["hgm", "greedy", "dgm_like"])
def test_policies_complete_with_clean_logs(kind):
    res = run_sequential(mismatch_config(budget=400, seed=1, policy_kind=kind))
    assert res.status == "complete"
    check_log_invariants(res)
    assert replay(res.log_lines()).ok


def test_async_single_worker_matches_sequential():
    cfg = mismatch_config(budget=300, seed=9)
    assert run_async(cfg).log_lines() == run_sequential(cfg).log_lines()


@pytest.mark.parametrize("latency", [0.0, 1.0])
def test_async_eight_workers(latency):
    cfg = mismatch_config(budget=500, seed=2, workers=8, latency_constant=0.5 * latency, latency_exp_mean=latency)
    res = run_async(cfg)
    assert res.status == "complete"
    check_log_invariants(res)
    report = replay(res.log_lines())
    assert report.ok, report.divergences[:3]
    inflight = [e for e in res.events if e["kind"] == "Decision" and e["budget"]["inflight_expansions"]]
    assert inflight
    for e in inflight:
        if e["reason"] == "policy":
            assert e["info"]["size_eff"] == e["tree_size"] + e["budget"]["inflight_expansions"]
    if latency:
        assert res.simulated_time > 0


def test_async_is_reproducible():
    cfg = mismatch_config(budget=300, seed=6, workers=8, latency_exp_mean=1.0)
    assert run_async(cfg).log_lines() == run_async(cfg).log_lines()


def test_thread_pool_run_replays():
    cfg = mismatch_config(budget=200, seed=7, workers=4, clock="threads")
    res = run(cfg)
    check_log_invariants(res)
    assert replay(res.log_lines()).ok


def test_worker_failures_leave_counters_untouched():
    cfg = mismatch_config(budget=300, seed=8, failure_rate=0.2)
    for workers in (1, 4):
        res = run(dataclasses.replace(cfg, workers=workers))
        assert res.status == "complete"
        assert kinds(res)["ActionFailed"] > 0
        check_log_invariants(res)
        assert replay(res.log_lines()).ok


def _tamper(lines, predicate, edit):
    out = list(lines)
    for i, line in enumerate(out[1:], 1):
        ev = json.loads(line)
        if predicate(ev):
            edit(ev)
            out[i] = json.dumps(ev, sort_keys=True, separators=(",", ":"))
            return out, ev["seq"]
    raise AssertionError("nothing to tamper with")


def test_replay_detects_flipped_outcome():
    lines = run_sequential(mismatch_config(budget=200, seed=1)).log_lines()
    bad, seq = _tamper(lines, lambda e: e["kind"] == "EvalCommit" and e["seq"] > 100,
                       lambda e: e.update(success=not e["success"]))
    report = replay(bad)
    assert not report.ok
    assert report.first_divergence == seq


def test_replay_detects_altered_decision_and_counts():
    lines = run_async(mismatch_config(budget=200, seed=1, workers=8, latency_exp_mean=1.0)).log_lines()

    def retarget(e):
        e["action"]["agent"] = (e["action"]["agent"] + 1) % 3

    bad, seq = _tamper(lines, lambda e: e["kind"] == "Decision" and e["action"]["kind"] == "evaluate", retarget)
    assert not replay(bad).ok
    bad, seq = _tamper(lines, lambda e: e["kind"] == "EvalCommit",
                       lambda e: e.update(counts=[e["counts"][0] + 1] + e["counts"][1:]))
    assert replay(bad).first_divergence == seq
    # dropping an event breaks the sequence
    assert not replay(lines[:50] + lines[51:]).ok


def test_replay_detects_wrong_tau_and_final_pick():
    lines = run_sequential(mismatch_config(budget=100, seed=2)).log_lines()
    bad, _ = _tamper(lines, lambda e: e["kind"] == "Decision" and e["reason"] == "policy",
                     lambda e: e["info"].update(tau=e["info"]["tau"] * 2))
    assert not replay(bad).ok
    bad, _ = _tamper(lines, lambda e: e["kind"] == "FinalSelection", lambda e: e.update(agent=e["agent"] + 1))
    assert not replay(bad).ok


def test_parse_errors_carry_line_numbers(tmp_path):
    lines = run_sequential(mismatch_config(budget=20, seed=0)).log_lines()
    with pytest.raises(LogFormatError, match="line 4"):
        parse_log(lines[:3] + ["{not json"] + lines[4:])
    with pytest.raises(LogFormatError, match="schema"):
        parse_log([json.dumps({"schema": "other/9", "config": {}})] + lines[1:])
    path = tmp_path / "log.jsonl"
    path.write_text("\n".join(lines) + "\n")
    header, events = read_log(path)
    assert header["schema"] == "hgm-runlog/1" and len(events) == len(lines) - 1


def test_write_log_round_trip(tmp_path):
    res = run_sequential(mismatch_config(budget=50, seed=3))
    path = tmp_path / "run.log.jsonl"
    write_log(path, res)
    assert path.read_text().splitlines() == res.log_lines()
    assert format_log(res.config, res.events, res.handles[0]) == res.log_lines()
    assert replay(path.read_text().splitlines()).ok


def test_resume_from_snapshot_matches_uninterrupted():
    cfg = mismatch_config(budget=300, seed=12)
    full = run_sequential(cfg)
    part = SearchRun(cfg)
    while part.budget.committed_evals < 137:
        ticket = part.dispatch(part.decide())
        part.commit(ticket, part.execute(ticket))
    snap = json.loads(json.dumps(part.snapshot()))
    resumed = run_sequential(cfg, resume=snap)
    assert resumed.tree.snapshot() == full.tree.snapshot()
    assert resumed.best_agent == full.best_agent
    assert resumed.events == full.events[len(part.events):]


def test_config_round_trip():
    cfg = mismatch_config(budget=123, seed=4, workers=3, alpha_widening=0.5)
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
