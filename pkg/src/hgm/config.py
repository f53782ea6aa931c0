"""Run configuration files and flat ``--key value`` overrides.

A config file is a JSON object with optional ``run``, ``policy`` and ``env``
sections. Field names are unique across sections, so overrides are flat::

    {"run": {"seed": 1, "budget": 800, "policy_kind": "hgm"},
     "policy": {"alpha_widening": 0.6, "epsilon_percentile": 1},
     "env": {"preset": "mismatch", "difficulty_file": "offsets.txt"}}

``env.preset`` may be ``"mismatch"`` to start from the built-in lineage model
in which own score is a weak guide to lineage quality.
"""

import dataclasses
import json
import os

from hgm.environment import MISMATCH_ENV, EnvConfig, load_difficulty_file
from hgm.exceptions import ParameterError
from hgm.policies import PolicyConfig
from hgm.runtime import RunConfig

RUN_KEYS = {f.name for f in dataclasses.fields(RunConfig)} - {"policy", "env"}
POLICY_KEYS = {f.name for f in dataclasses.fields(PolicyConfig)}
ENV_KEYS = {f.name for f in dataclasses.fields(EnvConfig)} | {"preset", "difficulty_file"}
ALIASES = {"policy": "policy_kind", "B": "budget", "alpha": "alpha_widening", "epsilon": "epsilon_percentile"}


def _section_of(key):
    if key in RUN_KEYS:
        return "run"
    if key in POLICY_KEYS:
        return "policy"
    if key in ENV_KEYS:
        return "env"
    raise ParameterError(f"unknown configuration key {key!r}")


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides):
    """Return a copy of ``data`` with ``{key: value}`` overrides placed in their sections."""
    out = {s: dict(data.get(s, {})) for s in ("run", "policy", "env")}
    for key, value in overrides.items():
        key = ALIASES.get(key, key)
        out[_section_of(key)][key] = value
    return out


def build_run_config(data, base_dir="."):
    """Validate a config mapping into a :class:`RunConfig` (field-level errors)."""
    unknown = set(data) - {"run", "policy", "env"}
    if unknown:
        raise ParameterError(f"unknown config sections {sorted(unknown)}")
    for section, keys in (("run", RUN_KEYS), ("policy", POLICY_KEYS), ("env", ENV_KEYS)):
        bad = set(data.get(section, {})) - keys
        if bad:
            raise ParameterError(f"unknown keys in [{section}]: {sorted(bad)}")
    env = dict(data.get("env", {}))
    preset = env.pop("preset", None)
    if preset == "mismatch":
        env = {**MISMATCH_ENV, **env}
    elif preset is not None:
        raise ParameterError(f"env.preset: unknown preset {preset!r}")
    diff_file = env.pop("difficulty_file", None)
    if diff_file is not None:
        env["task_difficulty"] = load_difficulty_file(os.path.join(base_dir, diff_file))
    try:
        return RunConfig(
            policy=PolicyConfig(**data.get("policy", {})),
            env=EnvConfig(**env),
            **data.get("run", {}),
        )
    except TypeError as exc:
        raise ParameterError(str(exc)) from None


def load_config(path, overrides=None):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ParameterError(f"{path}: top level must be an object")
    return build_run_config(apply_overrides(data, overrides or {}), os.path.dirname(path) or ".")
