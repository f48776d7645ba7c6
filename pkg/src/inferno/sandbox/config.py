"""Scenario configuration files (``inferno-config/1``).

A config is a JSON object::

    {
      "schema": "inferno-config/1",
      "scenario": "bandit",          # see SCENARIOS
      "seed": 0,
      "steps": 100,
      "params":   {...},             # scenario-specific, see DEFAULT_PARAMS
      "schedule": {...},             # ScheduleConfig fields
      "search":   {...},             # see SEARCH_KEYS
      "baseline": false,             # also run a paired random-policy baseline
      "data": "path/to/data.json"    # structure_learn only: a model file of kind data
    }

Only ``schema`` and ``scenario`` are required. Unknown keys anywhere are
errors, as are values of the wrong type.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from inferno.errors import ConfigurationError

CONFIG_SCHEMA = "inferno-config/1"

_RESCUE = {
    "p_fall": 0.2,
    "p_rescue": 0.9,
    "p_recover": 0.05,
    "command_accuracy": 0.8,
    "decay": 1.0,
    "target_temperature": 1.0,
    "empath_temperature": 0.0,
    "horizon": 1,
    "policy": "first_law",
}

DEFAULT_PARAMS = {
    "bandit": {"p_reward": [0.8, 0.2], "reward_pref": 3.0},
    "tmaze": {"cue_validity": 0.95, "reward_validity": 0.8, "reward_pref": 0.0},
    "structure_recovery": {"accuracy": 0.9, "stay": [0.9, 0.8]},
    "switching": {"accuracy": 0.9, "stay": [0.9, 0.8], "switch_step": 150},
    "rescue": dict(_RESCUE),
    "obedience": {**_RESCUE, "policy": "random", "rate": 1.0, "episodes": 1},
    "phenotype": {**_RESCUE, "policy": "random", "wrong_prefs": [-3.0, 0.0]},
    "structure_learn": {},
}
SCENARIOS = tuple(DEFAULT_PARAMS)

SCHEDULE_KEYS = {
    "param_every": int, "structure_every": (int, type(None)), "reduce_every": (int, type(None)),
    "horizon": int, "action_temperature": (int, float), "weight_threshold": (int, float),
    "learning_rate": (int, float),
}
SEARCH_KEYS = {
    "n_particles": int, "max_factors": int, "max_card": int, "restart_prob": (int, float),
    "min_data_for_bmr": int, "kappa": (int, float), "restarts": int, "concentration": (int, float),
    "search_steps": int,
}
TOP_KEYS = {
    "schema": str, "scenario": str, "seed": int, "steps": int, "params": dict,
    "schedule": dict, "search": dict, "baseline": bool, "data": str,
}


@dataclass
class Scenario:
    name: str
    seed: int = 0
    steps: int = 100
    params: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    baseline: bool = False
    data: str = None
    base_dir: str = "."

    def param(self, key):
        return self.params.get(key, DEFAULT_PARAMS[self.name].get(key))


def _check_types(doc, allowed, where, problems):
    for key, value in doc.items():
        if key not in allowed:
            problems.append(f"{where}{key}: unknown key")
            continue
        kind = allowed[key]
        kinds = kind if isinstance(kind, tuple) else (kind,)
        if isinstance(value, bool) and bool not in kinds:
            problems.append(f"{where}{key}: expected {kind}, got a boolean")
        elif not isinstance(value, kinds):
            problems.append(f"{where}{key}: expected {getattr(kind, '__name__', kind)}")


def _param_type_ok(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if isinstance(default, list):
        return isinstance(value, list) and all(isinstance(v, (int, float)) for v in value)
    return isinstance(value, type(default))


def check_config(doc):
    """Return every problem with a config document (empty when valid)."""
    problems = []
    if not isinstance(doc, dict):
        return ["config must be a JSON object"]
    _check_types(doc, TOP_KEYS, "", problems)
    if doc.get("schema") != CONFIG_SCHEMA:
        problems.append(f"schema: expected {CONFIG_SCHEMA!r}")
    name = doc.get("scenario")
    if name not in DEFAULT_PARAMS:
        problems.append(f"scenario: unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
        return problems
    defaults = DEFAULT_PARAMS[name]
    for key, value in (doc.get("params") or {}).items():
        if key not in defaults:
            problems.append(f"params.{key}: unknown key for scenario {name}")
        elif not _param_type_ok(defaults[key], value):
            problems.append(f"params.{key}: wrong type")
        elif isinstance(value, list) and len(value) != len(defaults[key]):
            # list parameters are per arm, per factor or per outcome: their length is a cardinality
            problems.append(f"params.{key}: expected {len(defaults[key])} entries, got {len(value)}")
    _check_types(doc.get("schedule") or {}, SCHEDULE_KEYS, "schedule.", problems)
    _check_types(doc.get("search") or {}, SEARCH_KEYS, "search.", problems)
    if name == "structure_learn" and "data" not in doc:
        problems.append("data: structure_learn needs a data file")
    if name != "structure_learn" and "data" in doc:
        problems.append("data: only structure_learn reads a data file")
    if isinstance(doc.get("steps"), int) and doc["steps"] < 0:
        problems.append("steps: must be nonnegative")
    if isinstance(doc.get("seed"), int) and doc["seed"] < 0:
        problems.append("seed: must be nonnegative")
    return problems


def parse_config(doc, base_dir="."):
    problems = check_config(doc)
    if problems:
        raise ConfigurationError("; ".join(problems))
    return Scenario(
        name=doc["scenario"],
        seed=doc.get("seed", 0),
        steps=doc.get("steps", 100),
        params=copy.deepcopy(doc.get("params") or {}),
        schedule=dict(doc.get("schedule") or {}),
        search=dict(doc.get("search") or {}),
        baseline=doc.get("baseline", False),
        data=doc.get("data"),
        base_dir=str(base_dir),
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(doc, path.parent)
