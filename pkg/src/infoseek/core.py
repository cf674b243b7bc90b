"""Agent/environment interface, transitions, random streams and the simulation loop.

Rewards are always computed from the aleatoric state, the action and the
resulting observation. Reward functions defined on whole histories are not
supported.
"""
from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

ActionId = int
Observation = int | np.ndarray


class ContractViolation(ValueError):
    """A precondition of a public operation was not met."""


class NumericalDegeneracy(ArithmeticError):
    """A numerical routine produced an invalid object (e.g. a non-PD covariance)."""


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class RandomSource:
    """Seeded, splittable random stream.

    Draws come from a PCG64 generator seeded by ``SeedSequence(seed, spawn_key)``.
    Children are derived either by name (``child("env")``, stable across runs
    because names are hashed with CRC32) or by position (``spawn(n)``). Two
    sources built from the same seed and key path produce bit-identical draws
    for the same call sequence.
    """

    def __init__(self, seed: int = 0, key: tuple[int, ...] = ()):
        if seed < 0 or seed >= 2**64:
            raise ContractViolation("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))
        self._spawned = 0

    def child(self, name: str | int) -> "RandomSource":
        k = name if isinstance(name, int) else _name_key(name)
        return RandomSource(self.seed, self.key + (k,))

    def spawn(self, n: int) -> list["RandomSource"]:
        out = [RandomSource(self.seed, self.key + (2**32 + self._spawned + i,)) for i in range(n)]
        self._spawned += n
        return out

    @property
    def position(self) -> dict:
        """Generator state, enough to resume the stream exactly."""
        return self.generator.bit_generator.state

    # thin conveniences so call sites read naturally
    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def beta(self, a, b, size=None):
        return self.generator.beta(a, b, size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def choice(self, a, size=None, replace=True, p=None):
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, key={self.key})"


def as_random_source(rng: RandomSource | int | None) -> RandomSource:
    if isinstance(rng, RandomSource):
        return rng
    return RandomSource(0 if rng is None else int(rng))


@dataclass(frozen=True)
class Transition:
    """One agent-environment interaction step.

    ``state`` and ``next_state`` are aleatoric states as seen by the agent.
    """

    state: Any
    action: ActionId
    observation: Observation
    reward: float
    next_state: Any
    terminal: bool


@dataclass
class AgentState:
    algorithmic: Any = None
    aleatoric: Any = None
    epistemic: Any = None


class Environment:
    """Base class for environments.

    Subclasses define ``num_actions`` and implement ``reset``, ``step``,
    ``observe``, ``reward`` and ``is_terminal``. ``step`` returns
    ``(observation, reward, next_env_state)``.
    """

    num_actions: int = 0
    episodic: bool = True

    def reset(self, rng: RandomSource):
        raise NotImplementedError

    def step(self, state, action: ActionId, rng: RandomSource):
        raise NotImplementedError

    def observe(self, state):
        """Aleatoric state the agent sees in env state ``state``."""
        return 0

    def reward(self, state, action: ActionId, observation: Observation) -> float:
        raise NotImplementedError

    def is_terminal(self, state) -> bool:
        return True

    def start_state(self):
        """Aleatoric state at the start of every episode."""
        return 0

    def features(self, aleatoric) -> np.ndarray:
        """Network input for aleatoric state ``aleatoric``."""
        return np.ones(1)

    def optimal_value(self) -> float:
        raise NotImplementedError

    def q_values(self, aleatoric, phase: int = 0) -> np.ndarray:
        """Optimal action values at an aleatoric state (realized environment)."""
        raise NotImplementedError

    def is_optimal_episode(self, episode_return: float) -> bool:
        return episode_return >= self.optimal_value() - 1e-9

    def check_action(self, action) -> int:
        a = int(action)
        if a != action or not 0 <= a < self.num_actions:
            raise ContractViolation(
                f"action {action!r} invalid for {type(self).__name__} with {self.num_actions} actions"
            )
        return a


class Agent:
    """Agent interface.

    ``update`` is fixed: it calls the three component updates in turn and
    assembles the new :class:`AgentState`. Subclasses provide
    ``update_epistemic``, ``update_aleatoric`` and ``update_algorithmic``.
    Each receives the previous state and the transition; the algorithmic
    update also receives the already-updated epistemic and aleatoric parts.
    """

    def reset(self, rng: RandomSource) -> AgentState:
        raise NotImplementedError

    def act(self, state: AgentState, rng: RandomSource) -> ActionId:
        raise NotImplementedError

    def update_epistemic(self, state: AgentState, transition: Transition, rng: RandomSource):
        return state.epistemic

    def update_aleatoric(self, state: AgentState, transition: Transition, rng: RandomSource):
        return transition.next_state

    def update_algorithmic(self, state: AgentState, transition: Transition, rng: RandomSource,
                           epistemic=None, aleatoric=None):
        return state.algorithmic

    def update(self, state: AgentState, transition: Transition, rng: RandomSource) -> AgentState:
        epistemic = self.update_epistemic(state, transition, rng)
        aleatoric = self.update_aleatoric(state, transition, rng)
        algorithmic = self.update_algorithmic(state, transition, rng, epistemic, aleatoric)
        return AgentState(algorithmic=algorithmic, aleatoric=aleatoric, epistemic=epistemic)


class UniformAgent(Agent):
    """Selects actions uniformly at random and learns nothing."""

    def __init__(self, num_actions: int):
        self.num_actions = num_actions

    def reset(self, rng):
        return AgentState()

    def act(self, state, rng):
        return int(rng.integers(self.num_actions))


def step_env(env: Environment, state, action: ActionId, rng: RandomSource):
    """Advance ``env`` by one step; returns ``(observation, reward, next_state)``."""
    a = env.check_action(action)
    return env.step(state, a, rng)


def run_loop(agent: Agent, env: Environment, horizon: int, rng: RandomSource | int,
             callback=None) -> list[Transition]:
    """Simulate ``horizon`` steps, updating the agent after every step.

    Three independent streams are split off ``rng``: one for the environment,
    one for action selection and one for agent updates. Keeping updates on
    their own stream lets a recorded trace be replayed through ``update`` to
    reproduce the final agent state. ``callback(t, agent_state, transition)``
    is invoked after each update when given.
    """
    if horizon < 1:
        raise ContractViolation("horizon must be >= 1")
    rng = as_random_source(rng)
    env_rng, act_rng, upd_rng = rng.child("env"), rng.child("act"), rng.child("update")
    agent_state = agent.reset(upd_rng)
    env_state = env.reset(env_rng)
    trace = []
    for t in range(horizon):
        s = env.observe(env_state)
        a = env.check_action(agent.act(agent_state, act_rng))
        obs, r, env_state = env.step(env_state, a, env_rng)
        done = env.is_terminal(env_state)
        if done:
            env_state = env.reset(env_rng)
        tr = Transition(s, a, obs, float(r), env.observe(env_state), bool(done))
        agent_state = agent.update(agent_state, tr, upd_rng)
        trace.append(tr)
        if callback is not None:
            callback(t, agent_state, tr)
    return trace


def run_episodes(agent: Agent, env: Environment, num_episodes: int, rng: RandomSource | int,
                 stop=None, callback=None, max_steps: int | None = None):
    """Run whole episodes; returns the list of episode returns.

    ``stop(returns)`` may end the run early (checked after every episode).
    Uses the same stream layout as :func:`run_loop`.
    """
    if num_episodes < 1:
        raise ContractViolation("num_episodes must be >= 1")
    rng = as_random_source(rng)
    env_rng, act_rng, upd_rng = rng.child("env"), rng.child("act"), rng.child("update")
    agent_state = agent.reset(upd_rng)
    env_state = env.reset(env_rng)
    returns, total, steps = [], 0.0, 0
    while len(returns) < num_episodes:
        s = env.observe(env_state)
        a = env.check_action(agent.act(agent_state, act_rng))
        obs, r, env_state = env.step(env_state, a, env_rng)
        done = env.is_terminal(env_state)
        if done:
            env_state = env.reset(env_rng)
        tr = Transition(s, a, obs, float(r), env.observe(env_state), bool(done))
        agent_state = agent.update(agent_state, tr, upd_rng)
        if callback is not None:
            callback(steps, agent_state, tr)
        steps += 1
        total += r
        if done:
            returns.append(total)
            total = 0.0
            if stop is not None and stop(returns):
                break
        if max_steps is not None and steps >= max_steps:
            break
    return returns, agent_state


def replay_updates(agent: Agent, trace: Sequence[Transition], rng: RandomSource | int) -> AgentState:
    """Rebuild the final agent state from a trace using the update stream of ``rng``."""
    upd_rng = as_random_source(rng).child("update")
    state = agent.reset(upd_rng)
    for tr in trace:
        state = agent.update(state, tr, upd_rng)
    return state


def episode_starts(trace: Sequence[Transition]) -> list[int]:
    starts = [0] if trace else []
    starts += [i + 1 for i, tr in enumerate(trace[:-1]) if tr.terminal]
    return starts


def episode_return(trace: Sequence[Transition], start: int = 0) -> float:
    """Sum of rewards from ``start`` up to and including the next terminal step."""
    if start not in set(episode_starts(trace)):
        raise ContractViolation(f"index {start} is not an episode boundary")
    total = 0.0
    for tr in trace[start:]:
        total += tr.reward
        if tr.terminal:
            break
    return total


def episode_returns(trace: Sequence[Transition]) -> list[float]:
    """Returns of all completed episodes in ``trace``."""
    out, total = [], 0.0
    for tr in trace:
        total += tr.reward
        if tr.terminal:
            out.append(total)
            total = 0.0
    return out


def encode_observation(obs) -> str:
    if isinstance(obs, (int, np.integer)):
        return str(int(obs))
    arr = np.asarray(obs, dtype=float).ravel()
    return ";".join(repr(float(v)) for v in arr)


def decode_observation(text: str) -> Observation:
    if ";" in text or "." in text or "e" in text.lower():
        return np.array([float(v) for v in text.split(";")])
    return int(text)


def _encode_state(s) -> str:
    if isinstance(s, (int, np.integer)):
        return str(int(s))
    if isinstance(s, tuple):
        return ";".join(str(int(v)) for v in s)
    return encode_observation(s)


TRACE_COLUMNS = ("step", "episode", "state", "action", "observation", "reward", "terminal")


def write_trace_csv(trace: Iterable[Transition], path_or_buf) -> None:
    """Write a trace as CSV with the columns in ``TRACE_COLUMNS``."""
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        episode = 0
        for t, tr in enumerate(trace):
            w.writerow([t, episode, _encode_state(tr.state), tr.action,
                        encode_observation(tr.observation), repr(float(tr.reward)), int(tr.terminal)])
            episode += int(tr.terminal)
    finally:
        if own:
            fh.close()


def trace_to_csv_text(trace: Iterable[Transition]) -> str:
    buf = io.StringIO()
    write_trace_csv(trace, buf)
    return buf.getvalue()


def read_trace_csv(path) -> list[dict]:
    """Read a trace CSV back as rows of typed values (states stay as text)."""
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "step": int(row["step"]),
                "episode": int(row["episode"]),
                "state": row["state"],
                "action": int(row["action"]),
                "observation": decode_observation(row["observation"]),
                "reward": float(row["reward"]),
                "terminal": bool(int(row["terminal"])),
            })
    return rows
