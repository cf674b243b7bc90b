"""Experiment configuration: schema, defaults, validation and hashing.

A config has three sections::

    env:   {name: deep_sea, size: 10, ...}
    agent: {kind: auto, planner: ids, n_ids: 40, ...}
    run:   {episodes: 1000, seeds: [0], ...}

Keys may also be written flat at the top level (``{env: deep_sea, size: 10}``)
and are routed to the section that owns them. ``env`` given as a string is
shorthand for ``env: {name: ...}``. Unknown keys are rejected.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field

import yaml

from ..core import ContractViolation
from ..envs import ENVIRONMENTS


class ConfigError(ContractViolation):
    """Invalid configuration; the message names the offending key."""


# key -> (type, default). Types: int, float, str, bool, list, "num_list".
ENV_SCHEMA = {
    "name": (str, "deep_sea"),
    "size": (int, None),
    "num_arms": (int, None),
    "probs": ("num_list", None),
    "dim": (int, None),
    "num_actions": (int, None),
    "num_components": (int, None),
    "scale": (float, None),
    "noise": (float, None),
    "tau": (int, None),
    "exit_rewards": ("num_list", None),
    "terminal_reward": (int, None),
    "locations": (int, None),
    "seed": (int, None),
}

AGENT_KINDS = ("auto", "ensemble_q", "hypothesis", "logistic", "beta_ts", "satisficing_ts",
               "exact_ids", "linear_ts", "psrl", "chain_value_ids", "uniform")

AGENT_SCHEMA = {
    "kind": (str, "auto"),
    "planner": (str, "ids"),
    "epsilon": (float, 0.05),
    "n_ids": (int, 40),
    "granularity": (float, 0.01),
    "eps_pess": (float, 0.0),
    "noise_std": (float, 0.0),
    "target": (str, "optimal_action"),
    "tau": (int, 1),
    "num_members": (int, 20),
    "hidden": ("int_list", [50, 50]),
    "prior_scale": (float, None),
    "n_batch": (int, None),
    "n_index": (int, 20),
    "gamma": (float, 0.99),
    "optimizer": (str, None),
    "lr": (float, None),
    "buffer_size": (int, 10_000),
    "sgd_steps": (int, None),
    "bootstrap": (bool, False),
    "k": (int, 1),
    "satisficing_epsilon": (float, 0.0),
}

RUN_SCHEMA = {
    "episodes": (int, 1000),
    "seeds": ("int_list", [0]),
    "stop_on_learning": (bool, False),
    "threshold": (float, 0.9),
    "max_steps": (int, None),
    "out": (str, "results"),
    "diagnostics": (bool, True),
}

SECTIONS = {"env": ENV_SCHEMA, "agent": AGENT_SCHEMA, "run": RUN_SCHEMA}


def _owner(key: str):
    # ``tau`` and ``seed`` are environment keys when written flat
    for name in ("env", "agent", "run"):
        if key in SECTIONS[name]:
            return name
    return None


def _coerce(section: str, key: str, kind, value):
    where = f"{section}.{key}"
    if value is None:
        return None
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise TypeError
            return value
        if kind in ("num_list", "int_list"):
            if isinstance(value, str) and kind == "int_list":
                return parse_range(value)
            if not isinstance(value, (list, tuple)):
                raise TypeError
            cast = int if kind == "int_list" else float
            return [cast(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected {getattr(kind, '__name__', kind)}, got {value!r}") from None
    raise ConfigError(f"{where}: unsupported type")


def parse_range(text: str) -> list[int]:
    """``"3"`` -> [3]; ``"0..4"`` -> [0, 1, 2, 3, 4]; ``"1,5,7"`` -> [1, 5, 7]."""
    text = str(text).strip()
    if ".." in text:
        a, b = text.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ConfigError(f"seeds: empty range {text!r}")
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split(",") if t.strip()]


@dataclass
class ExperimentConfig:
    env: dict = field(default_factory=dict)
    agent: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"env": dict(self.env), "agent": dict(self.agent), "run": dict(self.run)}

    def cell_dict(self) -> dict:
        """Everything that determines a run's output except seeds and output location."""
        d = self.as_dict()
        d["run"] = {k: v for k, v in d["run"].items() if k not in ("seeds", "out", "diagnostics")}
        return d

    def config_hash(self, seed: int | None = None) -> str:
        payload = self.cell_dict()
        if seed is not None:
            payload["seed"] = int(seed)
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _validate(cfg: ExperimentConfig) -> None:
    env, agent, run = cfg.env, cfg.agent, cfg.run
    if env["name"] not in ENVIRONMENTS:
        raise ConfigError(f"env.name: unknown environment {env['name']!r}")
    if agent["kind"] not in AGENT_KINDS:
        raise ConfigError(f"agent.kind: unknown agent {agent['kind']!r}")
    if agent["planner"] not in ("ids", "ts", "egreedy", "greedy"):
        raise ConfigError(f"agent.planner: unknown planner {agent['planner']!r}")
    if agent["target"] not in ("optimal_action", "gvf"):
        raise ConfigError(f"agent.target: unknown target {agent['target']!r}")
    if agent["n_ids"] < 2:
        raise ConfigError("agent.n_ids: must be >= 2")
    if not 0.0 <= agent["epsilon"] <= 1.0:
        raise ConfigError("agent.epsilon: must lie in [0, 1]")
    g = agent["granularity"]
    if not 0 < g <= 1 or abs(round(1 / g) * g - 1) > 1e-9:
        raise ConfigError("agent.granularity: must divide 1 evenly")
    for key in ("eps_pess", "noise_std", "satisficing_epsilon"):
        if agent[key] < 0:
            raise ConfigError(f"agent.{key}: must be >= 0")
    for key in ("num_members", "n_index", "buffer_size", "k", "tau"):
        if agent[key] < 1:
            raise ConfigError(f"agent.{key}: must be >= 1")
    if not 0.0 <= agent["gamma"] <= 1.0:
        raise ConfigError("agent.gamma: must lie in [0, 1]")
    for key in ("n_batch", "sgd_steps"):
        if agent[key] is not None and agent[key] < (1 if key == "n_batch" else 0):
            raise ConfigError(f"agent.{key}: out of range")
    if agent["lr"] is not None and agent["lr"] < 0:
        raise ConfigError("agent.lr: must be >= 0")
    if agent["optimizer"] not in (None, "adam", "sgd"):
        raise ConfigError(f"agent.optimizer: unknown optimizer {agent['optimizer']!r}")
    if run["episodes"] < 1:
        raise ConfigError("run.episodes: must be >= 1")
    if not run["seeds"]:
        raise ConfigError("run.seeds: need at least one seed")
    if not 0.0 < run["threshold"] <= 1.0:
        raise ConfigError("run.threshold: must lie in (0, 1]")
    for key in ("size", "num_arms", "dim", "num_actions", "num_components", "tau", "locations"):
        if env[key] is not None and env[key] < 1:
            raise ConfigError(f"env.{key}: must be >= 1")


def build_config(data: dict | None) -> ExperimentConfig:
    """Route, coerce, default and validate a parsed mapping."""
    data = {} if data is None else copy.deepcopy(data)
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    sections = {"env": {}, "agent": {}, "run": {}}
    env_val = data.pop("env", None)
    if isinstance(env_val, str):
        sections["env"]["name"] = env_val
    elif isinstance(env_val, dict):
        sections["env"].update(env_val)
    elif env_val is not None:
        raise ConfigError("env: expected a name or a mapping")
    for name in ("agent", "run"):
        val = data.pop(name, None)
        if isinstance(val, dict):
            sections[name].update(val)
        elif val is not None:
            raise ConfigError(f"{name}: expected a mapping")
    for key, val in data.items():
        owner = _owner(key)
        if owner is None:
            raise ConfigError(f"{key}: unknown key")
        sections[owner][key] = val
    out = {}
    for name, schema in SECTIONS.items():
        given = sections[name]
        for key in given:
            if key not in schema:
                raise ConfigError(f"{name}.{key}: unknown key")
        out[name] = {key: _coerce(name, key, kind, given.get(key, default))
                     for key, (kind, default) in schema.items()}
    cfg = ExperimentConfig(out["env"], out["agent"], out["run"])
    _validate(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """Parse YAML (or JSON) text into a validated :class:`ExperimentConfig`."""
    try:
        data = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML ({exc})") from None
    return build_config(data)


def with_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """New config with ``overrides`` (flat or ``section.key``) applied on top."""
    data = cfg.as_dict()
    for key, val in overrides.items():
        section, _, name = key.rpartition(".")
        section = section or _owner(name)
        if section not in SECTIONS:
            raise ConfigError(f"{key}: unknown key")
        data[section][name] = val
    return build_config(data)
