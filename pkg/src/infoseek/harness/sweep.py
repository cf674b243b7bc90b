"""Seeded parameter sweeps with a config-hash result cache.

Every (config, seed) cell runs independently in a worker process and writes
``runs/<hash>.csv`` (per-step regret trace) and ``runs/<hash>.json`` (summary,
including wall-clock). A finished cell is never re-run: its JSON sidecar is
the cache. The aggregate CSV is assembled afterwards in a fixed order and has
no timing columns, so it is byte-identical whatever the parallelism.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..agents import (HYPOTHESIS_TRAINING, LOGISTIC_TRAINING, EnsembleQAgent, HypothesisEnsembleAgent,
                      LogisticEnsembleAgent, TrainingConfig)
from ..core import UniformAgent
from ..envs import make_env
from ..exact_bayes import (BetaTSAgent, ChainValueIDSAgent, ExactIDSAgent, LinearTSAgent, PSRLAgent,
                           SatisficingTSAgent)
from ..ids import PlannerConfig
from .config import ConfigError, ExperimentConfig, build_config, parse_range, with_overrides
from .runner import run_learning

DEFAULT_CAP = 2000

AUTO_AGENT = {
    "bernoulli_bandit": "beta_ts",
    "many_armed_bandit": "beta_ts",
    "linear_gaussian_bandit": "linear_ts",
    "sparse_bandit": "hypothesis",
    "informative_bandit": "hypothesis",
    "informative_chain": "hypothesis",
    "logistic_bandit": "logistic",
    "deep_sea": "ensemble_q",
    "reward_chain": "chain_value_ids",
    "ring_mdp": "psrl",
}

_TRAINING_KEYS = ("num_members", "hidden", "prior_scale", "n_batch", "n_index", "gamma", "optimizer",
                  "lr", "buffer_size", "sgd_steps", "bootstrap")


def agent_kind(cfg: ExperimentConfig) -> str:
    kind = cfg.agent["kind"]
    return AUTO_AGENT[cfg.env["name"]] if kind == "auto" else kind


def agent_label(cfg: ExperimentConfig) -> str:
    """Short name used to group runs in plots, e.g. ``ids_gvf`` or ``ts``."""
    kind = agent_kind(cfg)
    a = cfg.agent
    if kind in ("ensemble_q", "hypothesis", "logistic"):
        label = a["planner"]
        if a["planner"] == "ids" and a["target"] == "gvf":
            label += "_gvf"
        return label
    return kind


def _training(cfg: ExperimentConfig, defaults: dict) -> TrainingConfig:
    merged = dict(defaults)
    for key in _TRAINING_KEYS:
        if cfg.agent.get(key) is not None:
            merged[key] = tuple(cfg.agent[key]) if key == "hidden" else cfg.agent[key]
    return TrainingConfig(**merged)


def make_planner(cfg: ExperimentConfig) -> PlannerConfig:
    a = cfg.agent
    return PlannerConfig(kind=a["planner"], epsilon=a["epsilon"], n_ids=a["n_ids"],
                         granularity=a["granularity"], eps_pess=a["eps_pess"], noise_std=a["noise_std"],
                         target=a["target"], tau=a["tau"])


def make_agent(cfg: ExperimentConfig, env):
    """Instantiate the agent described by ``cfg`` for ``env``."""
    kind = agent_kind(cfg)
    a = cfg.agent
    if kind == "beta_ts":
        return ExactIDSAgent(env.num_actions, a["granularity"]) if a["planner"] == "ids" \
            else BetaTSAgent(env.num_actions)
    if kind == "exact_ids":
        return ExactIDSAgent(env.num_actions, a["granularity"])
    if kind == "satisficing_ts":
        return SatisficingTSAgent(env.num_actions, a["satisficing_epsilon"])
    if kind == "linear_ts":
        return LinearTSAgent(env.actions, noise_var=env.noise_std ** 2)
    if kind == "psrl":
        return PSRLAgent(env)
    if kind == "chain_value_ids":
        return ChainValueIDSAgent(env.tau, env.exit_rewards, a["granularity"])
    if kind == "uniform":
        return UniformAgent(env.num_actions)
    planner = make_planner(cfg)
    if kind == "ensemble_q":
        return EnsembleQAgent(env, planner, _training(cfg, {}))
    if kind == "hypothesis":
        return HypothesisEnsembleAgent(env, planner, _training(cfg, HYPOTHESIS_TRAINING))
    if kind == "logistic":
        return LogisticEnsembleAgent(env, a["k"], planner, _training(cfg, LOGISTIC_TRAINING))
    raise ConfigError(f"agent.kind: unknown agent {kind!r}")


# ---------------------------------------------------------------------------


@dataclass
class SweepSpec:
    """A base config, one or two swept keys and the seeds to run each cell with.

    Swept keys are written ``section.key`` (or flat). The special key
    ``variant`` takes mappings that are applied as a group, which is how
    planner/target combinations are swept together.
    """

    base: ExperimentConfig
    axes: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    cap: int = DEFAULT_CAP
    name: str = "sweep"
    description: str = ""

    def __post_init__(self):
        if len(self.axes) > 2:
            raise ConfigError("sweep: at most two swept parameters")
        for key, values in self.axes.items():
            if not isinstance(values, (list, tuple)) or not values:
                raise ConfigError(f"sweep.{key}: expected a non-empty list of values")
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")
        n = len(self.cells()) * len(self.seeds)
        if n > self.cap:
            raise ConfigError(f"cap: sweep has {n} runs, more than the cap of {self.cap}")

    def cells(self) -> list[tuple[dict, ExperimentConfig]]:
        """Cartesian product of the swept values, in declaration order."""
        keys = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[k] for k in keys)):
            overrides, point = {}, {}
            for key, val in zip(keys, combo):
                if key == "variant":
                    if not isinstance(val, dict):
                        raise ConfigError("sweep.variant: values must be mappings")
                    overrides.update(val)
                else:
                    overrides[key] = val
                point[key] = val
            out.append((point, with_overrides(self.base, overrides)))
        return out

    @classmethod
    def from_dict(cls, data: dict, name: str = "sweep") -> "SweepSpec":
        data = dict(data or {})
        unknown = set(data) - {"base", "sweep", "seeds", "cap", "name", "description"}
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
        base = build_config(data.get("base"))
        seeds = data.get("seeds", base.run["seeds"])
        if isinstance(seeds, str):
            seeds = parse_range(seeds)
        return cls(base, dict(data.get("sweep") or {}), list(seeds), int(data.get("cap", DEFAULT_CAP)),
                   data.get("name", name), data.get("description", ""))

    @classmethod
    def from_yaml(cls, text: str, name: str = "sweep") -> "SweepSpec":
        try:
            data = yaml.safe_load(text) if text.strip() else {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"sweep: not valid YAML ({exc})") from None
        return cls.from_dict(data, name)


@dataclass
class RunResult:
    config_hash: str
    seed: int
    label: str
    point: dict
    status: str = "ok"
    learning_time: int | None = None
    episodes: int = 0
    steps: int = 0
    cumulative_regret: float = 0.0
    optimal_fraction: float = 0.0
    reveals: int = 0
    wall_clock: float = 0.0


def _point_text(val) -> str:
    if isinstance(val, dict):
        return ",".join(f"{k}={v}" for k, v in sorted(val.items()))
    return str(val)


def execute_cell(cfg_dict: dict, seed: int, run_dir: str, point: dict, label: str) -> RunResult:
    """Run one (config, seed) cell and write its CSV and JSON sidecar."""
    cfg = build_config(cfg_dict)
    h = cfg.config_hash(seed)
    result = RunResult(h, int(seed), label, point)
    start = time.perf_counter()
    try:
        env_params = {k: v for k, v in cfg.env.items() if v is not None}
        env_params.setdefault("seed", seed)
        env = make_env(env_params)
        agent = make_agent(cfg, env)
        rec = run_learning(agent, env, cfg.run["episodes"], seed,
                           stop_on_learning=cfg.run["stop_on_learning"], threshold=cfg.run["threshold"],
                           max_steps=cfg.run["max_steps"])
        rec.trace.write_csv(Path(run_dir) / f"{h}.csv")
        result.learning_time = rec.learning_time
        result.episodes = len(rec.suboptimal)
        result.steps = rec.steps
        result.cumulative_regret = float(rec.trace.cumulative_regret[-1]) if rec.steps else 0.0
        result.optimal_fraction = float((~rec.suboptimal).mean()) if len(rec.suboptimal) else 0.0
        result.reveals = rec.reveals
    except Exception as exc:  # recorded, the sweep carries on
        result.status = f"error: {type(exc).__name__}: {exc}"
        result.point = dict(point, traceback=traceback.format_exc(limit=5))
    result.wall_clock = time.perf_counter() - start
    if result.status == "ok":
        _write_json(Path(run_dir) / f"{h}.json", result)
    return result


def _write_json(path: Path, result: RunResult) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(asdict(result), sort_keys=True, indent=1))
    os.replace(tmp, path)


def _load_cached(path: Path):
    try:
        data = json.loads(path.read_text())
        return RunResult(**data)
    except (OSError, ValueError, TypeError):
        return None


AGGREGATE_COLUMNS = ("label", "seed", "config_hash", "status", "learning_time", "episodes", "steps",
                     "cumulative_regret", "optimal_fraction", "reveals")


def run_sweep(spec: SweepSpec, out_dir, parallelism: int = 1) -> list[RunResult]:
    """Run every cell of ``spec``; return results in (cell, seed) order.

    Writes ``<out_dir>/runs/`` per-run files and ``<out_dir>/aggregate.csv``.
    """
    out = Path(out_dir)
    run_dir = out / "runs"
    run_dir.mkdir(parents=True, exist_ok=True)
    jobs = []
    for point, cfg in spec.cells():
        label = agent_label(cfg)
        for seed in spec.seeds:
            jobs.append((cfg, seed, point, label))
    results: list[RunResult | None] = [None] * len(jobs)
    pending = []
    for i, (cfg, seed, point, label) in enumerate(jobs):
        cached = _load_cached(run_dir / f"{cfg.config_hash(seed)}.json")
        if cached is not None and cached.status == "ok":
            results[i] = cached
        else:
            pending.append(i)
    args = [(jobs[i][0].as_dict(), jobs[i][1], str(run_dir), jobs[i][2], jobs[i][3]) for i in pending]
    if parallelism <= 1 or len(pending) <= 1:
        done = [execute_cell(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            done = list(pool.map(execute_cell, *zip(*args)))
    for i, res in zip(pending, done):
        results[i] = res
    write_aggregate(results, list(spec.axes), out / "aggregate.csv")
    return results


def write_aggregate(results, axes, path) -> None:
    columns = list(axes) + list(AGGREGATE_COLUMNS)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in results:
            row = [_point_text(r.point.get(k)) for k in axes]
            lt = "" if r.learning_time is None else r.learning_time
            row += [r.label, r.seed, r.config_hash, r.status, lt, r.episodes, r.steps,
                    repr(float(r.cumulative_regret)), repr(float(r.optimal_fraction)), r.reveals]
            w.writerow(row)


# ---------------------------------------------------------------------------
# presets

PRESET_DIR = Path(__file__).with_name("presets")


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def load_preset(name: str) -> SweepSpec:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.exists():
        raise ConfigError(f"preset: unknown preset {name!r}")
    return SweepSpec.from_yaml(path.read_text(), name)
