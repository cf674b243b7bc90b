"""Concrete environments with exact optimal-value oracles.

Bandits are treated as episodes of length one: every step is terminal and
the environment state carries nothing across steps. Episodic MDPs expose a
tabular model over aleatoric states so optimal values and per-step shortfalls
come from exact backward induction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import ContractViolation, Environment, RandomSource, Transition, as_random_source


@dataclass
class TabularModel:
    """Finite episodic MDP over aleatoric states.

    ``p[s, a, s2]`` transition probabilities, ``r[s, a, s2]`` rewards,
    ``horizon`` steps per episode starting from ``start``.
    """

    p: np.ndarray
    r: np.ndarray
    horizon: int
    start: int = 0

    def q_table(self) -> np.ndarray:
        return kernels.backup(np.ascontiguousarray(self.p, dtype=float),
                              np.ascontiguousarray(self.r, dtype=float), int(self.horizon))


class Bandit(Environment):
    episodic = True

    def reset(self, rng):
        return 0

    def is_terminal(self, state):
        return True

    def mean_rewards(self) -> np.ndarray:
        raise NotImplementedError

    def optimal_value(self):
        return float(np.max(self.mean_rewards()))

    def q_values(self, aleatoric=0, phase=0):
        return np.asarray(self.mean_rewards(), dtype=float)

    def optimal_action(self) -> int:
        return int(np.argmax(self.mean_rewards()))


class BernoulliBandit(Bandit):
    """Arms are coins; the observation and reward are the coin outcome."""

    def __init__(self, heads_probabilities):
        p = np.asarray(heads_probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any((p < 0) | (p > 1)):
            raise ContractViolation("heads probabilities must be a nonempty vector in [0, 1]")
        self.probs = p
        self.num_actions = p.size

    def step(self, state, action, rng):
        obs = int(rng.random() < self.probs[action])
        return obs, float(obs), 1

    def reward(self, state, action, observation):
        return float(observation)

    def mean_rewards(self):
        return self.probs


class ManyArmedBandit(BernoulliBandit):
    """Bernoulli arms whose means are drawn uniformly on [0, 1] from ``seed``."""

    def __init__(self, num_arms: int, seed: int = 0):
        if num_arms < 1:
            raise ContractViolation("num_arms must be >= 1")
        means = RandomSource(seed).child("means").uniform(size=num_arms)
        super().__init__(means)
        self.seed = seed


class LinearGaussianBandit(Bandit):
    """Observation = reward = theta . a + Gaussian noise, over a finite set of unit vectors."""

    def __init__(self, theta, actions, noise_std: float = 1.0):
        self.theta = np.asarray(theta, dtype=float)
        acts = np.asarray(actions, dtype=float)
        if acts.ndim != 2 or acts.shape[1] != self.theta.size:
            raise ContractViolation("actions must be an (n, d) array matching theta")
        norms = np.linalg.norm(acts, axis=1)
        if not np.allclose(norms, 1.0):
            raise ContractViolation("actions must be unit vectors")
        self.actions = acts
        self.noise_std = float(noise_std)
        self.num_actions = acts.shape[0]
        self.dim = self.theta.size

    @classmethod
    def random(cls, dim: int, num_actions: int, noise_std: float = 1.0, seed: int = 0):
        rs = RandomSource(seed)
        theta = rs.child("theta").normal(size=dim)
        acts = rs.child("actions").normal(size=(num_actions, dim))
        acts /= np.linalg.norm(acts, axis=1, keepdims=True)
        return cls(theta, acts, noise_std)

    def step(self, state, action, rng):
        y = float(self.actions[action] @ self.theta + self.noise_std * rng.normal())
        return np.array([y]), y, 1

    def reward(self, state, action, observation):
        return float(np.asarray(observation).ravel()[0])

    def mean_rewards(self):
        return self.actions @ self.theta


def bisection_blocks(n: int) -> list[tuple[int, int]]:
    """Dyadic blocks [lo, hi) of size n/2, n/4, ..., 2 used as probe supports."""
    blocks = []
    size = n // 2
    while size >= 2:
        blocks += [(lo, lo + size) for lo in range(0, n, size)]
        size //= 2
    return blocks


class SparseLinearBandit(Bandit):
    """One of ``n`` arms pays 1; probes pay ½ when they cover it.

    Actions ``0..n-1`` are one-hot arms, the rest are half-scaled indicator
    vectors of the dyadic blocks from :func:`bisection_blocks`. Observations
    are deterministic: ``O = A . phi``.
    """

    def __init__(self, n: int, rewarding: int | None = None, seed: int = 0):
        if n < 2 or n & (n - 1):
            raise ContractViolation("n must be a power of two >= 2")
        if rewarding is None:
            rewarding = int(RandomSource(seed).child("rewarding").integers(n))
        if not 0 <= rewarding < n:
            raise ContractViolation("rewarding arm out of range")
        self.n = n
        self.rewarding = int(rewarding)
        self.blocks = bisection_blocks(n)
        rows = [np.eye(n)[i] for i in range(n)]
        for lo, hi in self.blocks:
            v = np.zeros(n)
            v[lo:hi] = 0.5
            rows.append(v)
        self.action_matrix = np.array(rows)
        self.num_actions = len(rows)
        self.phi = np.eye(n)[self.rewarding]

    def step(self, state, action, rng):
        y = float(self.action_matrix[action] @ self.phi)
        return np.array([y]), y, 1

    def reward(self, state, action, observation):
        return float(np.asarray(observation).ravel()[0])

    def mean_rewards(self):
        return self.action_matrix @ self.phi


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=float)))


class LogisticGVFBandit(Bandit):
    """K independent logistic observation bits per action; bit 0 is the reward.

    ``action_tensor[a, j]`` is the feature vector of component ``j`` for action ``a``.
    """

    def __init__(self, phi, action_tensor):
        self.phi = np.asarray(phi, dtype=float)
        self.action_tensor = np.asarray(action_tensor, dtype=float)
        if self.action_tensor.ndim != 3 or self.action_tensor.shape[2] != self.phi.size:
            raise ContractViolation("action tensor must have shape (N, K, d)")
        self.num_actions, self.num_components, self.dim = self.action_tensor.shape

    @classmethod
    def random(cls, dim: int, num_actions: int, num_components: int, scale: float = 3.0, seed: int = 0):
        """phi ~ N(0, I); action features ~ N(0, scale²/d) so logits have std ≈ scale."""
        rs = RandomSource(seed)
        phi = rs.child("phi").normal(size=dim)
        acts = rs.child("actions").normal(scale=scale / np.sqrt(dim), size=(num_actions, num_components, dim))
        return cls(phi, acts)

    def probabilities(self, action) -> np.ndarray:
        return _sigmoid(self.action_tensor[action] @ self.phi)

    def step(self, state, action, rng):
        bits = (rng.random(self.num_components) < self.probabilities(action)).astype(float)
        return bits, float(bits[0]), 1

    def reward(self, state, action, observation):
        return float(np.asarray(observation)[0])

    def mean_rewards(self):
        return _sigmoid(self.action_tensor[:, 0, :] @ self.phi)


NO_REVEAL = -1


class InformativeBandit(Bandit):
    """``n`` arms, one pays 1; arm ``n`` pays 0 but reveals which arm pays.

    Observation is ``[reward_bit, reveal]`` with ``reveal = NO_REVEAL`` except
    on the revealing arm.
    """

    def __init__(self, n: int, rewarding: int | None = None, seed: int = 0):
        if n < 1:
            raise ContractViolation("n must be >= 1")
        if rewarding is None:
            rewarding = int(RandomSource(seed).child("rewarding").integers(n))
        self.n = n
        self.rewarding = int(rewarding)
        self.num_actions = n + 1
        self.reveal_action = n

    def reveals(self, state, action) -> bool:
        return action == self.reveal_action

    def step(self, state, action, rng):
        if action == self.reveal_action:
            return np.array([0.0, float(self.rewarding)]), 0.0, 1
        bit = float(action == self.rewarding)
        return np.array([bit, float(NO_REVEAL)]), bit, 1

    def reward(self, state, action, observation):
        return float(np.asarray(observation)[0])

    def mean_rewards(self):
        m = np.zeros(self.num_actions)
        m[self.rewarding] = 1.0
        return m


class EpisodicTabularEnv(Environment):
    """Shared machinery for episodic MDPs with a tabular model over aleatoric states."""

    horizon: int = 1

    def tabular_model(self) -> TabularModel:
        raise NotImplementedError

    def _q(self):
        if getattr(self, "_qcache", None) is None:
            self._qcache = self.tabular_model().q_table()
        return self._qcache

    def q_values(self, aleatoric, phase=0):
        return self._q()[phase, aleatoric].copy()

    def optimal_value(self):
        return float(self._q()[0, self.start_state()].max())


class DeepSea(EpisodicTabularEnv):
    """N×N grid, one row down per step, start at the top-left.

    The per-cell mask flips which action index moves right. Moving right
    costs ``move_cost / N``; moving right from the bottom-right cell pays 1.
    """

    def __init__(self, size: int, seed: int = 0, move_cost: float = 0.01, mask=None):
        if size < 1:
            raise ContractViolation("size must be >= 1")
        self.size = self.horizon = int(size)
        self.move_cost = float(move_cost)
        self.num_actions = 2
        if mask is None:
            mask = RandomSource(seed).child("mask").integers(2, size=(size, size))
        self.mask = np.asarray(mask, dtype=int)
        self._qcache = None

    def reset(self, rng):
        return (0, 0)

    def is_right(self, row, col, action) -> bool:
        return bool(action ^ self.mask[row, col])

    def step(self, state, action, rng):
        row, col = state
        right = self.is_right(row, col, action)
        r = self._reward(row, col, right)
        col = min(col + 1, self.size - 1) if right else max(col - 1, 0)
        row += 1
        return self._token(min(row, self.size - 1), col), r, (row, col)

    def _reward(self, row, col, right):
        r = 0.0
        if right:
            r -= self.move_cost / self.size
            if col == self.size - 1:
                r += 1.0
        return r

    def _token(self, row, col):
        return row * self.size + col

    def observe(self, state):
        row, col = state
        return self._token(min(row, self.size - 1), col)

    def reward(self, state, action, observation):
        row, col = divmod(int(state), self.size)
        return self._reward(row, col, self.is_right(row, col, action))

    def is_terminal(self, state):
        return state[0] >= self.size

    def start_state(self):
        return 0

    def features(self, aleatoric):
        x = np.zeros(self.size * self.size)
        x[int(aleatoric)] = 1.0
        return x

    def optimal_value(self):
        return 1.0 - self.move_cost

    def is_optimal_episode(self, episode_return):
        return episode_return > 0.5

    def tabular_model(self):
        n = self.size
        s = n * n
        p = np.zeros((s, 2, s))
        r = np.zeros((s, 2, s))
        for row in range(n):
            for col in range(n):
                i = self._token(row, col)
                for a in range(2):
                    right = self.is_right(row, col, a)
                    c2 = min(col + 1, n - 1) if right else max(col - 1, 0)
                    j = self._token(min(row + 1, n - 1), c2)
                    p[i, a, j] = 1.0
                    r[i, a, j] = self._reward(row, col, right)
        return TabularModel(p, r, n, 0)


class RewardChain(EpisodicTabularEnv):
    """Deterministic chain with known exit rewards and one hidden terminal bit.

    Positions are tokens ``0..2τ-2``. Leaving position ``τ-1`` emits the pair
    ``(0, r_{τ-1})``, encoded as token ``2τ-1 + r_{τ-1}``; the aleatoric state
    of that pair is position 0. ``exit_rewards`` are public prior metadata;
    the terminal bit is only visible through the value oracle.
    """

    def __init__(self, tau: int, exit_rewards=None, terminal_reward: int | None = None, seed: int = 0):
        if tau < 2:
            raise ContractViolation("tau must be >= 2")
        rs = RandomSource(seed)
        if exit_rewards is None:
            exit_rewards = rs.child("exits").uniform(0.0, 1.0, size=tau - 1)
        ex = np.asarray(exit_rewards, dtype=float)
        if ex.shape != (tau - 1,) or np.any((ex < 0) | (ex >= 1)):
            raise ContractViolation("need tau-1 exit rewards in [0, 1)")
        if terminal_reward is None:
            terminal_reward = int(rs.child("terminal").random() < 0.5)
        if terminal_reward not in (0, 1):
            raise ContractViolation("terminal reward must be 0 or 1")
        self.tau = self.horizon = tau
        self.exit_rewards = ex
        self._terminal = int(terminal_reward)
        self.num_actions = 2
        self._qcache = None

    @property
    def num_positions(self):
        return 2 * self.tau - 1

    def pair_token(self, bit):
        return 2 * self.tau - 1 + int(bit)

    def reset(self, rng):
        return (0, 0)

    def next_position(self, pos, action):
        """Position after ``action``; ``None`` means the pair observation."""
        tau = self.tau
        if pos <= tau - 2:
            return pos + tau if action == 0 else pos + 1
        if pos == tau - 1:
            return None
        if pos <= 2 * tau - 3:
            return pos + 1
        return 0

    def step(self, state, action, rng):
        pos, phase = state
        nxt = self.next_position(pos, action)
        obs = self.pair_token(self._terminal) if nxt is None else nxt
        r = self.reward(pos, action, obs)
        return obs, r, (0 if nxt is None else nxt, phase + 1)

    def observe(self, state):
        return state[0]

    def reward(self, state, action, observation):
        s, tau = int(state), self.tau
        if s <= tau - 2 and action == 0:
            return float(self.exit_rewards[s])
        if s == tau - 1:
            return float(int(observation) - (2 * tau - 1))
        return 0.0

    def is_terminal(self, state):
        return state[1] >= self.tau

    def features(self, aleatoric):
        x = np.zeros(self.num_positions)
        x[int(aleatoric)] = 1.0
        return x

    def tabular_model(self, terminal_reward=None):
        bit = self._terminal if terminal_reward is None else terminal_reward
        n = self.num_positions
        p = np.zeros((n, 2, n))
        r = np.zeros((n, 2, n))
        for s in range(n):
            for a in range(2):
                nxt = self.next_position(s, a)
                j = 0 if nxt is None else nxt
                p[s, a, j] = 1.0
                obs = self.pair_token(bit) if nxt is None else nxt
                if s == self.tau - 1:
                    r[s, a, j] = float(bit)
                else:
                    r[s, a, j] = self.reward(s, a, obs)
        return TabularModel(p, r, self.tau, 0)


class InformativeChain(EpisodicTabularEnv):
    """Chain where exactly one exit pays 1 and the end of the chain reveals which.

    Same positions as :class:`RewardChain`. Exiting from position ``s ≤ τ-2``
    pays 1 iff ``s`` is the rewarding exit. Leaving position ``τ-1`` pays 0
    and emits token ``2τ-1 + j`` where ``j`` is the rewarding exit.
    """

    def __init__(self, tau: int, rewarding: int | None = None, seed: int = 0):
        if tau < 2:
            raise ContractViolation("tau must be >= 2")
        if rewarding is None:
            rewarding = int(RandomSource(seed).child("rewarding").integers(tau - 1))
        if not 0 <= rewarding <= tau - 2:
            raise ContractViolation("rewarding exit out of range")
        self.tau = self.horizon = tau
        self.rewarding = int(rewarding)
        self.num_actions = 2
        self.num_exits = tau - 1
        self._qcache = None

    @property
    def num_positions(self):
        return 2 * self.tau - 1

    def reveal_token(self, j):
        return 2 * self.tau - 1 + int(j)

    def decode_reveal(self, token):
        j = int(token) - (2 * self.tau - 1)
        return j if j >= 0 else None

    next_position = RewardChain.next_position

    def reset(self, rng):
        return (0, 0)

    def reveals(self, state, action) -> bool:
        """True when taking ``action`` from env state ``state`` emits the reveal token."""
        pos = state[0] if isinstance(state, tuple) else state
        return self.next_position(int(pos), action) is None

    def step(self, state, action, rng):
        pos, phase = state
        nxt = self.next_position(pos, action)
        obs = self.reveal_token(self.rewarding) if nxt is None else nxt
        return obs, self.reward(pos, action, obs), (0 if nxt is None else nxt, phase + 1)

    def observe(self, state):
        return state[0]

    def reward(self, state, action, observation):
        s = int(state)
        return float(s <= self.tau - 2 and action == 0 and s == self.rewarding)

    def is_terminal(self, state):
        return state[1] >= self.tau

    def features(self, aleatoric):
        x = np.zeros(self.num_positions)
        x[int(aleatoric)] = 1.0
        return x

    def optimal_value(self):
        return 1.0

    def tabular_model(self):
        n = self.num_positions
        p = np.zeros((n, 2, n))
        r = np.zeros((n, 2, n))
        for s in range(n):
            for a in range(2):
                nxt = self.next_position(s, a)
                j = 0 if nxt is None else nxt
                p[s, a, j] = 1.0
                r[s, a, j] = self.reward(s, a, None if nxt is None else nxt)
        return TabularModel(p, r, self.tau, 0)


class RingMDP(EpisodicTabularEnv):
    """Episodic ring: M locations × τ phases; the location moves ±1 each step.

    ``up_prob[s, a]`` is the probability of moving to location+1 from state
    ``s = phase * M + location``. From the last phase every action returns to
    the start state (location 0, phase 0). Rewards are a known function of
    the arrival location (``location_rewards``).
    """

    def __init__(self, num_locations: int, tau: int, num_actions: int = 2, seed: int = 0,
                 up_prob=None, location_rewards=None):
        if num_locations < 2 or tau < 1:
            raise ContractViolation("need at least 2 locations and tau >= 1")
        rs = RandomSource(seed)
        self.M, self.tau, self.horizon = num_locations, tau, tau
        self.num_actions = num_actions
        self.num_states = num_locations * tau
        if up_prob is None:
            up_prob = rs.child("transitions").uniform(size=(self.num_states, num_actions))
        if location_rewards is None:
            location_rewards = rs.child("rewards").uniform(size=num_locations)
        self.up_prob = np.asarray(up_prob, dtype=float)
        self.location_rewards = np.asarray(location_rewards, dtype=float)
        self._qcache = None

    def state_index(self, location, phase):
        return phase * self.M + location

    def neighbours(self, s):
        """(up, down) successor indices of non-final-phase state ``s``."""
        phase, loc = divmod(s, self.M)
        return (self.state_index((loc + 1) % self.M, phase + 1),
                self.state_index((loc - 1) % self.M, phase + 1))

    def reset(self, rng):
        return 0

    def step(self, state, action, rng):
        phase = state // self.M
        if phase == self.tau - 1:
            nxt = 0
        else:
            up, down = self.neighbours(state)
            nxt = up if rng.random() < self.up_prob[state, action] else down
        return nxt, self.reward(state, action, nxt), nxt

    def observe(self, state):
        return int(state)

    def reward(self, state, action, observation):
        return float(self.location_rewards[int(observation) % self.M])

    def is_terminal(self, state):
        return state == 0

    def transition_matrix(self, up_prob=None) -> np.ndarray:
        up = self.up_prob if up_prob is None else up_prob
        p = np.zeros((self.num_states, self.num_actions, self.num_states))
        for s in range(self.num_states):
            if s // self.M == self.tau - 1:
                p[s, :, 0] = 1.0
                continue
            u, d = self.neighbours(s)
            p[s, :, u] += up[s]
            p[s, :, d] += 1.0 - up[s]
        return p

    def reward_table(self) -> np.ndarray:
        r = np.broadcast_to(self.location_rewards[np.arange(self.num_states) % self.M],
                            (self.num_states, self.num_actions, self.num_states))
        return np.array(r)

    def tabular_model(self, up_prob=None):
        return TabularModel(self.transition_matrix(up_prob), self.reward_table(), self.tau, 0)

    def q_values(self, aleatoric, phase=0):
        # states already encode their phase
        s = int(aleatoric)
        return self._q()[s // self.M, s].copy()


def optimal_value(env: Environment) -> float:
    """Optimal expected reward per step (bandits) or per episode (episodic MDPs)."""
    return env.optimal_value()


def per_step_shortfall(env: Environment, trace: list[Transition]) -> np.ndarray:
    """V*(S_t) − Q*(S_t, A_t) for every step of ``trace`` under the realized environment."""
    out = np.empty(len(trace))
    phase = 0
    for t, tr in enumerate(trace):
        q = env.q_values(tr.state, phase)
        out[t] = q.max() - q[tr.action]
        phase = 0 if tr.terminal else phase + 1
    return out


ENVIRONMENTS = {
    "bernoulli_bandit": BernoulliBandit,
    "many_armed_bandit": ManyArmedBandit,
    "linear_gaussian_bandit": LinearGaussianBandit,
    "sparse_bandit": SparseLinearBandit,
    "logistic_bandit": LogisticGVFBandit,
    "informative_bandit": InformativeBandit,
    "deep_sea": DeepSea,
    "reward_chain": RewardChain,
    "informative_chain": InformativeChain,
    "ring_mdp": RingMDP,
}


def make_env(params: dict) -> Environment:
    """Build an environment from a flat parameter record.

    Recognised keys: ``name`` plus ``size``, ``num_arms``, ``probs``, ``dim``,
    ``num_actions``, ``num_components``, ``scale``, ``noise``, ``tau``,
    ``exit_rewards``, ``terminal_reward``, ``locations``, ``seed``.
    """
    p = dict(params)
    name = p.pop("name")
    seed = int(p.pop("seed", 0))
    if name == "bernoulli_bandit":
        return BernoulliBandit(p["probs"])
    if name == "many_armed_bandit":
        return ManyArmedBandit(int(p.get("num_arms", p.get("size", 500))), seed)
    if name == "linear_gaussian_bandit":
        return LinearGaussianBandit.random(int(p.get("dim", 5)), int(p.get("num_actions", 10)),
                                           float(p.get("noise", 1.0)), seed)
    if name == "sparse_bandit":
        return SparseLinearBandit(int(p.get("size", 16)), seed=seed)
    if name == "logistic_bandit":
        return LogisticGVFBandit.random(int(p.get("dim", 30)), int(p.get("num_actions", 30)),
                                        int(p.get("num_components", 10)), float(p.get("scale", 3.0)), seed)
    if name == "informative_bandit":
        return InformativeBandit(int(p.get("size", 8)), seed=seed)
    if name == "deep_sea":
        return DeepSea(int(p.get("size", 10)), seed)
    if name == "reward_chain":
        return RewardChain(int(p.get("tau", 4)), p.get("exit_rewards"), p.get("terminal_reward"), seed)
    if name == "informative_chain":
        return InformativeChain(int(p.get("tau", 8)), seed=seed)
    if name == "ring_mdp":
        return RingMDP(int(p.get("locations", 4)), int(p.get("tau", 3)), seed=seed)
    raise ContractViolation(f"unknown environment {name!r}")
