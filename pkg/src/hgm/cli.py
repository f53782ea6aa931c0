"""Command line interface.

Subcommands: ``run``, ``sweep``, ``analyze``, ``replay`` and ``oracle-check``.
Exit codes: 0 ok, 1 usage or configuration error, 2 verification failure,
3 capacity exceeded.
"""

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time

import numpy as np

from hgm import godel
from hgm.config import load_config, parse_value
from hgm.exceptions import CapacityError, HGMError, LogFormatError
from hgm.experiments import SUMMARY_COLUMNS, aggregate, paired_difference, run_seed, summarize
from hgm.metrics import correlation_report, estimator_for_policy, pearson
from hgm.runtime import SCHEMA, rebuild_from_log, replay, run, write_log

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_CAPACITY = 0, 1, 2, 3

CORRELATION_COLUMNS = ["run", "policy_kind", "seed", "estimator", "n_used", "weighted_r", "unweighted_r", "flag"]
SWEEP_COLUMNS = ["row_type"] + SUMMARY_COLUMNS + ["mean", "ci_low", "ci_high", "n"]

log = logging.getLogger("hgm")


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_csv(path_or_buffer, columns, rows):
    """Write dict rows; floats use ``repr`` and ``None`` becomes an empty cell."""
    own = isinstance(path_or_buffer, (str, os.PathLike))
    fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])
    finally:
        if own:
            fh.close()


def read_csv(path_or_buffer):
    """Rows as lists of strings, header first."""
    own = isinstance(path_or_buffer, (str, os.PathLike))
    fh = open(path_or_buffer, newline="") if own else path_or_buffer
    try:
        return [row for row in csv.reader(fh)]
    finally:
        if own:
            fh.close()


def rewrite_csv(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def parse_overrides(tokens):
    """``--key value`` pairs into a dict; raises ValueError on a dangling key."""
    out = {}
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if not tok.startswith("--") or i + 1 >= len(tokens):
            raise ValueError(f"expected '--key value' pairs, got {tokens[i:]}")
        key = tok[2:].replace("-", "_")
        out[key] = parse_value(tokens[i + 1])
        i += 2
    return out


def parse_seed_range(text):
    """``"0:200"`` -> range(0, 200); ``"3"`` -> range(0, 3); ``"1,5,9"`` -> [1, 5, 9]."""
    if ":" in text:
        a, b = text.split(":", 1)
        return range(int(a), int(b))
    if "," in text:
        return [int(s) for s in text.split(",")]
    return range(int(text))


def _describe(handle):
    if dataclasses.is_dataclass(handle):
        return dataclasses.asdict(handle)
    return None


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


# -- run -------------------------------------------------------------------

def cmd_run(args, overrides):
    config = load_config(args.config, overrides)
    os.makedirs(args.out, exist_ok=True)
    started = time.time()
    result = run(config)
    summary = summarize(result, run_id=args.run_id or f"{config.policy_kind}-{config.seed}")
    write_log(os.path.join(args.out, "run.log.jsonl"), result)
    tree_doc = {
        "tree": result.tree.snapshot(),
        "latents": {str(k): _describe(h) for k, h in result.handles.items()},
        "best_agent": result.best_agent,
    }
    _write_json(os.path.join(args.out, "tree.json"), tree_doc)
    _write_json(os.path.join(args.out, "summary.json"), summary.row())
    meta = {
        "started_at": started,
        "wall_time": result.wall_time,
        "simulated_time": result.simulated_time,
        "approximation": config.policy_kind == "dgm_like",
    }
    _write_json(os.path.join(args.out, "metadata.json"), meta)
    print(_table([summary.row()], SUMMARY_COLUMNS))
    return EXIT_OK if result.status == "complete" else EXIT_VERIFY


# -- sweep -----------------------------------------------------------------

def cmd_sweep(args, overrides):
    config = load_config(args.config, overrides)
    seeds = list(parse_seed_range(args.seeds))
    policies = args.policies.split(",") if args.policies else [config.policy_kind]
    rows, out_rows = [], []
    for kind in policies:
        for seed in seeds:
            try:
                s = summarize(run_seed(config, seed, kind))
            except HGMError as exc:
                out_rows.append({"row_type": "error", "policy_kind": kind, "seed": seed, "status": str(exc)})
                continue
            rows.append(s)
            out_rows.append({"row_type": "run", **s.row()})
    for kind, agg in aggregate(rows).items():
        out_rows.append({"row_type": "aggregate", "policy_kind": kind, **agg})
    for other in policies[1:]:
        diff = paired_difference(rows, policies[0], other)
        out_rows.append({"row_type": f"paired_diff:{policies[0]}-{other}", "policy_kind": policies[0], **diff})
    target = args.out or sys.stdout
    if args.out:
        os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    write_csv(target, SWEEP_COLUMNS, out_rows)
    if args.out:
        print(_table([r for r in out_rows if r["row_type"] != "run"], ["row_type", "policy_kind", "mean", "ci_low", "ci_high", "n"]))
    return EXIT_OK


# -- analyze ---------------------------------------------------------------

def cmd_analyze(args, overrides):
    rows = []
    pooled = {}
    for path in args.logs:
        with open(path) as fh:
            config, tree, _, _ = rebuild_from_log(fh)
        estimator = args.estimator or estimator_for_policy(config.policy_kind)
        rep = correlation_report(tree, estimator)
        rows.append({
            "run": os.path.basename(os.path.dirname(os.path.abspath(path))) or path,
            "policy_kind": config.policy_kind,
            "seed": config.seed,
            "estimator": estimator,
            "n_used": rep.n_used,
            "weighted_r": rep.weighted_r,
            "unweighted_r": rep.unweighted_r,
            "flag": "degenerate" if rep.degenerate else "",
        })
        pooled.setdefault((config.policy_kind, estimator), []).extend(rep.pairs)
    for (kind, estimator), pairs in pooled.items():
        w = u = None
        if len(pairs) >= 2:
            _, p, t, wt = zip(*pairs)
            w, u = pearson(p, t, wt), pearson(p, t)
        rows.append({
            "run": "pooled", "policy_kind": kind, "seed": "", "estimator": estimator,
            "n_used": len(pairs), "weighted_r": w, "unweighted_r": u,
            "flag": "degenerate" if w is None or u is None else "",
        })
    write_csv(args.out or sys.stdout, CORRELATION_COLUMNS, rows)
    if args.out:
        print(_table(rows, CORRELATION_COLUMNS))
    return EXIT_OK


# -- replay ----------------------------------------------------------------

def cmd_replay(args, overrides):
    with open(args.log) as fh:
        report = replay(fh)
    print(f"events={report.n_events} decisions={report.n_decisions} "
          f"eval_commits={report.n_eval_commits} status={report.status} divergences={len(report.divergences)}")
    for seq, msg in report.divergences[:20]:
        print(f"  seq {seq}: {msg}")
    return EXIT_OK if report.ok else EXIT_VERIFY


# -- oracle-check ----------------------------------------------------------

def cmd_oracle_check(args, overrides):
    instances = []
    if args.instances:
        instances.extend(godel.load_instances(args.instances))
    if args.random:
        rng = np.random.default_rng(args.seed)
        for i in range(args.random):
            instances.append((godel.random_mdp(rng, args.max_types, args.max_budget, name=f"random-{i}"), 0.0))
    if not instances:
        print("no instances given (use a file or --random N)", file=sys.stderr)
        return EXIT_USAGE
    started = time.perf_counter()
    failed = skipped = 0
    for mdp, perturbation in instances:
        try:
            report = godel.verify_theorem(mdp, perturbation=perturbation, max_trajectories=args.max_trajectories)
        except CapacityError as exc:
            skipped += 1
            print(f"{mdp.name}: skipped ({exc})")
            continue
        if not report.ok:
            failed += 1
            print(f"{mdp.name}: FAIL {len(report.violations)} violations; first: {report.violations[0]}")
        elif args.verbose:
            print(f"{mdp.name}: ok states={report.n_states} max|cmp-q|={report.max_abs_diff:.3e}")
    elapsed = time.perf_counter() - started
    checked = len(instances) - skipped
    print(f"checked={checked} failed={failed} skipped={skipped} seconds={elapsed:.2f}")
    if failed:
        return EXIT_VERIFY
    if skipped and not checked:
        return EXIT_CAPACITY
    return EXIT_OK


def _table(rows, columns):
    cells = [[_short(r.get(c)) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    line = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    body = ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join([line, "-" * len(line)] + body)


def _short(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def build_parser():
    parser = argparse.ArgumentParser(prog="hgm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one run; extra '--key value' pairs override the config")
    p.add_argument("config")
    p.add_argument("--out", default="hgm-run")
    p.add_argument("--run-id", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run many seeds and aggregate")
    p.add_argument("config")
    p.add_argument("--seeds", required=True, help="'a:b', 'n' or a comma list")
    p.add_argument("--policies", default=None, help="comma list, e.g. hgm,greedy")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="correlate estimators with empirical CMP from run logs")
    p.add_argument("logs", nargs="+")
    p.add_argument("--estimator", choices=["adjusted_cmp", "own_mean"], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("replay", help="re-derive a run log and report divergences")
    p.add_argument("log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("oracle-check", help="check CMP == Q on micro MDPs")
    p.add_argument("instances", nargs="?")
    p.add_argument("--random", type=int, default=0)
    p.add_argument("--max-types", type=int, default=4)
    p.add_argument("--max-budget", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-trajectories", type=int, default=godel.MAX_TRAJECTORIES)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None):
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        overrides = parse_overrides(extra)
        if overrides and args.command not in ("run", "sweep"):
            raise ValueError(f"unexpected arguments {extra}")
        return args.func(args, overrides)
    except (ValueError, HGMError, OSError) as exc:
        code = EXIT_CAPACITY if isinstance(exc, CapacityError) else EXIT_USAGE
        if isinstance(exc, LogFormatError) and "schema" in str(exc):
            print(f"error: incompatible log ({exc}); this tool reads {SCHEMA}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
