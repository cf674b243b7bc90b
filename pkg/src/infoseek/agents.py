"""Neural-network agents: ensemble Q-learners and hypothesis-logit ensembles.

Each agent plugs a planner from :mod:`infoseek.ids` into an epistemic network
from :mod:`infoseek.enn`. The epistemic state is the network, its optimizer
and the replay buffer; the algorithmic state is the Thompson-sampling index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Agent, AgentState, ContractViolation
from .enn import (SGD, Adam, CategoricalCrossEntropy, EnsembleMLP, EnsembleVector, LogisticGVF,
                  QLearning, ReplayBuffer, epistemic_sgd_step, make_optimizer)
from .envs import InformativeBandit, InformativeChain, NO_REVEAL, SparseLinearBandit
from .ids import GVF, PlannerConfig, greedy_action, ids_decide, ts_select, epsilon_greedy_select


@dataclass
class Learner:
    """Epistemic state of a neural agent (mutated in place by updates)."""

    net: object
    optimizer: object
    buffer: ReplayBuffer


@dataclass
class TrainingConfig:
    num_members: int = 20
    hidden: tuple = (50, 50)
    prior_scale: float = 1.0
    n_batch: int = 128
    n_index: int = 20
    gamma: float = 0.99
    optimizer: str = "adam"
    lr: float = 1e-3
    buffer_size: int = 10_000
    sgd_steps: int = 1
    bootstrap: bool = False

    def __post_init__(self):
        if self.num_members < 1 or self.n_batch < 1 or self.n_index < 1 or self.sgd_steps < 0:
            raise ContractViolation("ensemble size, n_batch, n_index must be >= 1 and sgd_steps >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation("gamma must lie in [0, 1]")
        if self.lr < 0 or self.buffer_size < 1:
            raise ContractViolation("lr must be >= 0 and buffer_size >= 1")


class _EnsembleAgent(Agent):
    """Shared plumbing: TS index handling and the SGD loop."""

    planner: PlannerConfig
    training: TrainingConfig

    def _learner(self, net, rng):
        return Learner(net, make_optimizer(self.training.optimizer, self.training.lr),
                       ReplayBuffer(self.training.buffer_size))

    def _train(self, learner: Learner, loss, rng):
        cfg = self.training
        for _ in range(cfg.sgd_steps):
            if not epistemic_sgd_step(learner.net, learner.optimizer, learner.buffer, loss,
                                      cfg.n_batch, cfg.n_index, rng).applied:
                break

    def _boot(self, rng):
        return (rng.random(self.training.num_members) < 0.5).astype(float)

    def update_algorithmic(self, state, transition, rng, epistemic=None, aleatoric=None):
        # resample the Thompson index at every episode boundary
        if transition.terminal:
            return int(rng.integers(self.training.num_members))
        return state.algorithmic


class EnsembleQAgent(_EnsembleAgent):
    """Ensemble of MLP Q-functions with additive priors, trained by averaged Q-learning."""

    def __init__(self, env, planner: PlannerConfig | None = None, training: TrainingConfig | None = None):
        self.planner = planner or PlannerConfig()
        self.training = training or TrainingConfig()
        self.num_actions = env.num_actions
        self.features = env.features
        self.start = env.start_state()
        self.input_dim = int(np.asarray(env.features(self.start)).size)
        self.loss = QLearning(self.training.gamma)
        self.last_decision = None

    def reset(self, rng):
        cfg = self.training
        net = EnsembleMLP(self.input_dim, self.num_actions, cfg.hidden, cfg.num_members,
                          cfg.prior_scale, rng.child("init"))
        return AgentState(algorithmic=int(rng.integers(cfg.num_members)), aleatoric=self.start,
                          epistemic=self._learner(net, rng))

    def act(self, state, rng):
        net = state.epistemic.net
        x = self.features(state.aleatoric)
        kind = self.planner.kind
        if kind == "egreedy":
            return epsilon_greedy_select(net, x, self.planner.epsilon, rng)
        if kind == "greedy":
            return greedy_action(net.forward_all(x[None, :])[:, 0, :].mean(axis=0))
        if kind == "ts":
            return ts_select(net, x, state.algorithmic, False, rng)[0]
        z = net.sample_indices(self.planner.n_ids, rng)
        values = net.forward_indices(x[None, :], z)[:, 0, :]
        self.last_decision = ids_decide(values, self.planner, rng)
        return self.last_decision.action

    def update_epistemic(self, state, transition, rng):
        learner = state.epistemic
        rec = {"x": self.features(transition.state), "action": transition.action,
               "reward": transition.reward, "x_next": self.features(transition.next_state),
               "terminal": transition.terminal}
        if self.training.bootstrap:
            rec["boot"] = self._boot(rng)
        learner.buffer.add(rec)
        self._train(learner, self.loss, rng)
        return learner


# ---------------------------------------------------------------------------
# finite-hypothesis models for the logit ensembles


class HypothesisModel:
    """Known structure of an environment family indexed by a finite hypothesis.

    ``values(s)`` is (H, A): optimal action values under each hypothesis;
    ``gvf(s)`` is (H, A, C): the GVF vector (component 0 is the value);
    ``consistent(tr)`` is the boolean mask of hypotheses that could have
    produced the transition.
    """

    num_hypotheses: int

    def values(self, s) -> np.ndarray:
        raise NotImplementedError

    def gvf(self, s) -> np.ndarray:
        return self.values(s)[:, :, None]

    def consistent(self, transition) -> np.ndarray:
        raise NotImplementedError


class SparseBanditModel(HypothesisModel):
    """Hypothesis h: arm h pays 1. Value of action a is ``action_matrix[a, h]``."""

    def __init__(self, env: SparseLinearBandit):
        self.matrix = env.action_matrix
        self.num_hypotheses = env.n

    def values(self, s=0):
        return self.matrix.T

    def consistent(self, tr):
        y = float(np.asarray(tr.observation).ravel()[0])
        return np.isclose(self.matrix[tr.action], y)


class InformativeBanditModel(HypothesisModel):
    """GVF components: reward, then one reveal indicator per arm."""

    def __init__(self, env: InformativeBandit):
        n = self.num_hypotheses = env.n
        self.reveal = env.reveal_action
        self._values = np.zeros((n, n + 1))
        self._values[:, :n] = np.eye(n)
        self._gvf = np.zeros((n, n + 1, n + 1))
        self._gvf[:, :, 0] = self._values
        self._gvf[:, self.reveal, 1:] = np.eye(n)

    def values(self, s=0):
        return self._values

    def gvf(self, s=0):
        return self._gvf

    def consistent(self, tr):
        bit, reveal = np.asarray(tr.observation, dtype=float)
        mask = np.zeros(self.num_hypotheses, dtype=bool)
        if tr.action == self.reveal:
            if reveal == NO_REVEAL:
                raise ContractViolation("revealing arm returned no reveal")
            mask[int(reveal)] = True
        elif bit == 1.0:
            mask[tr.action] = True
        else:
            mask[:] = True
            mask[tr.action] = False
        return mask


class InformativeChainModel(HypothesisModel):
    """Hypothesis h: exiting from position h pays 1.

    Value of exiting at s ≤ τ-2 is 1{h = s}; continuing is worth 1{h > s}.
    GVF components: value, then the expected reveal indicator per exit under
    "continue to the end" after the action (only continuing can reveal).
    """

    def __init__(self, env: InformativeChain):
        self.tau = env.tau
        self.env = env
        h = self.num_hypotheses = env.num_exits
        n = env.num_positions
        self._values = np.zeros((n, h, 2))
        self._gvf = np.zeros((n, h, 2, 1 + h))
        for s in range(self.tau):
            for hyp in range(h):
                if s <= self.tau - 2:
                    self._values[s, hyp, 0] = float(hyp == s)
                    self._values[s, hyp, 1] = float(hyp > s)
                    self._gvf[s, hyp, 1, 1 + hyp] = 1.0
                else:
                    self._gvf[s, hyp, :, 1 + hyp] = 1.0
        self._gvf[..., 0] = self._values

    def values(self, s):
        return self._values[int(s)]

    def gvf(self, s):
        return self._gvf[int(s)]

    def consistent(self, tr):
        mask = np.ones(self.num_hypotheses, dtype=bool)
        s = int(tr.state)
        j = self.env.decode_reveal(tr.observation) if s == self.tau - 1 else None
        if j is not None:
            mask[:] = False
            mask[j] = True
        elif s <= self.tau - 2 and tr.action == 0:
            if tr.reward > 0.5:
                mask[:] = False
                mask[s] = True
            else:
                mask[s] = False
        return mask


def hypothesis_model(env) -> HypothesisModel:
    if isinstance(env, SparseLinearBandit):
        return SparseBanditModel(env)
    if isinstance(env, InformativeBandit):
        return InformativeBanditModel(env)
    if isinstance(env, InformativeChain):
        return InformativeChainModel(env)
    raise ContractViolation(f"no hypothesis model for {type(env).__name__}")


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# Logits of a near-uniform softmax move slowly under plain SGD, so these use
# Adam with many small-batch steps per observation.
HYPOTHESIS_TRAINING = dict(num_members=20, prior_scale=1.0, n_batch=1, n_index=20,
                           optimizer="adam", lr=0.3, sgd_steps=50)


class HypothesisEnsembleAgent(_EnsembleAgent):
    """Ensemble of logit vectors over a finite hypothesis set.

    Member z believes ``softmax(logits_z)``. The epistemic index is a pair
    (member z, uniform u): it selects the hypothesis at quantile u of member
    z's belief, and the sample's action values and GVF are that hypothesis's
    tables. Training minimises the cross-entropy of the probability each
    member assigns to the data-consistent hypotheses.
    """

    def __init__(self, env, planner: PlannerConfig | None = None, training: TrainingConfig | None = None,
                 model: HypothesisModel | None = None):
        self.planner = planner or PlannerConfig()
        self.training = training or TrainingConfig(**HYPOTHESIS_TRAINING)
        self.model = model or hypothesis_model(env)
        self.num_actions = env.num_actions
        self.start = env.start_state()
        self.loss = CategoricalCrossEntropy()
        self.last_decision = None

    def reset(self, rng):
        cfg = self.training
        net = EnsembleVector(self.model.num_hypotheses, cfg.num_members, cfg.prior_scale, rng.child("init"))
        return AgentState(algorithmic=self._new_index(rng), aleatoric=self.start,
                          epistemic=self._learner(net, rng))

    def _new_index(self, rng):
        return (int(rng.integers(self.training.num_members)), float(rng.random()))

    def update_algorithmic(self, state, transition, rng, epistemic=None, aleatoric=None):
        return self._new_index(rng) if transition.terminal else state.algorithmic

    def beliefs(self, state, z=None) -> np.ndarray:
        return _softmax(state.epistemic.net.values(z))

    def hypotheses(self, state, z, u) -> np.ndarray:
        """Hypothesis at quantile ``u`` of each listed member's belief."""
        cdf = np.cumsum(self.beliefs(state, z), axis=1)
        h = (cdf < np.asarray(u)[:, None] * cdf[:, -1:]).sum(axis=1)
        return np.minimum(h, self.model.num_hypotheses - 1)

    def act(self, state, rng):
        s = state.aleatoric
        table = self.model.values(s)
        kind = self.planner.kind
        if kind == "ts":
            z, u = state.algorithmic
            return greedy_action(table[self.hypotheses(state, [z], [u])[0]])
        if kind in ("egreedy", "greedy"):
            if kind == "egreedy" and rng.random() < self.planner.epsilon:
                return int(rng.integers(self.num_actions))
            return greedy_action((self.beliefs(state) @ table).mean(axis=0))
        n = self.planner.n_ids
        h = self.hypotheses(state, state.epistemic.net.sample_indices(n, rng), rng.random(n))
        gvf = self.model.gvf(s)[h] if self.planner.target == GVF else None
        self.last_decision = ids_decide(table[h], self.planner, rng, gvf)
        return self.last_decision.action

    def update_epistemic(self, state, transition, rng):
        learner = state.epistemic
        mask = self.model.consistent(transition)
        if not mask.all():  # uninformative transitions carry no likelihood signal
            rec = {"consistent": mask}
            if self.training.bootstrap:
                rec["boot"] = self._boot(rng)
            learner.buffer.add(rec)
        self._train(learner, self.loss, rng)
        return learner


# ---------------------------------------------------------------------------
# logistic observation model


LOGISTIC_TRAINING = dict(num_members=20, prior_scale=1.0, n_batch=8, n_index=20,
                         optimizer="adam", lr=0.05, sgd_steps=5)


class LogisticEnsembleAgent(_EnsembleAgent):
    """Ensemble of parameter vectors φ for the logistic GVF bandit.

    Learns from the first ``k`` observation bits; acts on the reward
    component, ``Q_z(a) = σ(⟨a_0, φ_z⟩)``.
    """

    def __init__(self, env, k: int = 1, planner: PlannerConfig | None = None,
                 training: TrainingConfig | None = None):
        self.planner = planner or PlannerConfig(n_ids=100)
        self.training = training or TrainingConfig(**LOGISTIC_TRAINING)
        if not 1 <= k <= env.num_components:
            raise ContractViolation("k must lie in 1..num_components")
        self.k = k
        self.actions = env.action_tensor
        self.num_actions = env.num_actions
        self.dim = env.dim
        self.loss = LogisticGVF(k)
        self.last_decision = None

    def reset(self, rng):
        cfg = self.training
        net = EnsembleVector(self.dim, cfg.num_members, cfg.prior_scale, rng.child("init"))
        return AgentState(algorithmic=int(rng.integers(cfg.num_members)), aleatoric=0,
                          epistemic=self._learner(net, rng))

    def values(self, state, z=None) -> np.ndarray:
        phi = state.epistemic.net.values(z)
        return 0.5 * (1.0 + np.tanh(0.5 * phi @ self.actions[:, 0, :].T))

    def act(self, state, rng):
        kind = self.planner.kind
        if kind == "ts":
            return greedy_action(self.values(state, [state.algorithmic])[0])
        if kind in ("egreedy", "greedy"):
            if kind == "egreedy" and rng.random() < self.planner.epsilon:
                return int(rng.integers(self.num_actions))
            return greedy_action(self.values(state).mean(axis=0))
        z = state.epistemic.net.sample_indices(self.planner.n_ids, rng)
        self.last_decision = ids_decide(self.values(state, z), self.planner, rng)
        return self.last_decision.action

    def update_epistemic(self, state, transition, rng):
        learner = state.epistemic
        learner.buffer.add({"features": self.actions[transition.action],
                            "bits": np.asarray(transition.observation, dtype=float)})
        self._train(learner, self.loss, rng)
        return learner
