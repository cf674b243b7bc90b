"""Conjugate posteriors and the exact (non-neural) agents.

Contents: Beta-Bernoulli and Gaussian-linear posteriors, discrete beliefs,
Thompson sampling and its satisficing variant, exact mutual-information IDS
for Beta bandits, posterior-sampling planning on the ring MDP, and exact
value-IDS over a finite set of deterministic environment hypotheses.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special, stats

from . import kernels
from .core import Agent, AgentState, ContractViolation, NumericalDegeneracy, Transition
from .ids import ShortfallGainTable, TwoSparseDistribution, two_sparse_minimize
from .infotools import entropy, mutual_information


# ---------------------------------------------------------------------------
# posteriors


@dataclass(frozen=True)
class BetaPosterior:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.shape != b.shape or np.any(a <= 0) or np.any(b <= 0):
            raise ContractViolation("alpha and beta must be positive arrays of equal shape")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @classmethod
    def uniform(cls, shape) -> "BetaPosterior":
        return cls(np.ones(shape), np.ones(shape))

    @property
    def mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def sample(self, rng) -> np.ndarray:
        return rng.beta(self.alpha, self.beta)

    def to_text(self) -> str:
        """One ``index,alpha,beta`` line per arm (flattened order)."""
        lines = ["arm,alpha,beta"]
        for i, (a, b) in enumerate(zip(self.alpha.ravel(), self.beta.ravel())):
            lines.append(f"{i},{float(a)!r},{float(b)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, shape=None) -> "BetaPosterior":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        a = np.array([float(r[1]) for r in rows])
        b = np.array([float(r[2]) for r in rows])
        if shape is not None:
            a, b = a.reshape(shape), b.reshape(shape)
        return cls(a, b)


def beta_update(post: BetaPosterior, arm, outcome: int) -> BetaPosterior:
    """Conjugate update of one arm (``arm`` may be a tuple index) with a binary outcome."""
    if outcome not in (0, 1):
        raise ContractViolation("outcome must be 0 or 1")
    a, b = post.alpha.copy(), post.beta.copy()
    a[arm] += outcome
    b[arm] += 1 - outcome
    return BetaPosterior(a, b)


@dataclass(frozen=True)
class GaussianLinearPosterior:
    mean: np.ndarray
    cov: np.ndarray
    noise_var: float = 1.0

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise ContractViolation("covariance shape must match the mean")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def isotropic(cls, dim: int, prior_var: float = 1.0, noise_var: float = 1.0):
        return cls(np.zeros(dim), prior_var * np.eye(dim), noise_var)

    def sample(self, rng) -> np.ndarray:
        chol = np.linalg.cholesky(self.cov)
        return self.mean + chol @ rng.normal(size=self.mean.size)


def _check_pd(cov):
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalDegeneracy("posterior covariance is not positive definite") from exc


def kalman_update_batch(post: GaussianLinearPosterior, actions, rewards) -> GaussianLinearPosterior:
    """Condition on k observations at once (information form)."""
    A = np.atleast_2d(np.asarray(actions, dtype=float))
    R = np.atleast_1d(np.asarray(rewards, dtype=float))
    if A.shape[1] != post.mean.size or A.shape[0] != R.size:
        raise ContractViolation("action/reward dimensions do not match the posterior")
    _check_pd(post.cov)
    prec = np.linalg.inv(post.cov)
    new_prec = prec + A.T @ A / post.noise_var
    cov = np.linalg.inv(new_prec)
    cov = 0.5 * (cov + cov.T)
    _check_pd(cov)
    mean = cov @ (prec @ post.mean + A.T @ R / post.noise_var)
    return GaussianLinearPosterior(mean, cov, post.noise_var)


def kalman_update(post: GaussianLinearPosterior, action, reward: float) -> GaussianLinearPosterior:
    """Exact Gaussian conditioning on one linear observation ``reward = θ·action + noise``."""
    return kalman_update_batch(post, np.atleast_2d(action), [reward])


@dataclass(frozen=True)
class DiscreteBelief:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ContractViolation("belief must be a probability vector")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n: int) -> "DiscreteBelief":
        return cls(np.full(n, 1.0 / n))

    def condition(self, likelihood) -> "DiscreteBelief":
        w = self.probs * np.asarray(likelihood, dtype=float)
        z = w.sum()
        if z <= 0:
            raise ContractViolation("observation has zero probability under the belief")
        return DiscreteBelief(w / z)

    def sample(self, rng) -> int:
        return int(rng.choice(self.probs.size, p=self.probs))


# ---------------------------------------------------------------------------
# Beta-Bernoulli information


def beta_bernoulli_mi(alpha: float, beta: float) -> float:
    """I(p; b) in nats for p ~ Beta(α, β) and b ~ Bernoulli(p), via digamma."""
    if alpha < 1 or beta < 1:
        raise ContractViolation("alpha and beta must be >= 1")
    s = alpha + beta
    psi = special.digamma
    return float(alpha / s * (psi(alpha + 1) - np.log(alpha))
                 + beta / s * (psi(beta + 1) - np.log(beta))
                 - (psi(s + 1) - np.log(s)))


_GL_NODES = {n: np.polynomial.legendre.leggauss(n) for n in (10, 20)}


def adaptive_gauss_legendre(f, a: float, b: float, tol: float = 1e-9, max_depth: int = 40) -> float:
    """Integrate ``f`` (vectorised) on [a, b] by recursive bisection.

    A panel is accepted when the 10-point and 20-point rules agree within
    ``tol`` scaled by the panel's share of the interval.
    """
    total_width = b - a

    def rule(lo, hi, n):
        x, w = _GL_NODES[n]
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        return half * float(np.dot(w, f(mid + half * x)))

    def recurse(lo, hi, depth):
        coarse, fine = rule(lo, hi, 10), rule(lo, hi, 20)
        if abs(fine - coarse) <= tol * (hi - lo) / total_width or depth >= max_depth:
            return fine
        mid = 0.5 * (lo + hi)
        return recurse(lo, mid, depth + 1) + recurse(mid, hi, depth + 1)

    return recurse(a, b, 0)


def beta_expectation(g, alpha: float, beta: float, tol: float = 1e-9) -> float:
    """E[g(p)] for p ~ Beta(α, β) by adaptive Gauss-Legendre."""
    logc = special.betaln(alpha, beta)

    def integrand(x):
        x = np.clip(x, 1e-300, 1 - 1e-16)
        dens = np.exp((alpha - 1) * np.log(x) + (beta - 1) * np.log1p(-x) - logc)
        return g(x) * dens

    return adaptive_gauss_legendre(integrand, 0.0, 1.0, tol)


def beta_bernoulli_mi_quadrature(alpha: float, beta: float, tol: float = 1e-9) -> float:
    """I(p; b) = E[KL(Bern(p) ‖ Bern(E p))] computed by quadrature (nats)."""
    m = alpha / (alpha + beta)

    def kl(x):
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(x > 0, x * np.log(x / m), 0.0)
            t2 = np.where(x < 1, (1 - x) * np.log((1 - x) / (1 - m)), 0.0)
        return t1 + t2

    return beta_expectation(kl, alpha, beta, tol)


# ---------------------------------------------------------------------------
# Thompson sampling and friends


def thompson_select(post, rng, actions=None, optimal_action=None) -> int:
    """Maximize expected reward under one posterior sample (lowest-index ties).

    ``actions`` (n, d) is required for Gaussian-linear posteriors.
    ``optimal_action[h]`` maps hypotheses of a DiscreteBelief to actions; by
    default hypothesis ``h`` is action ``h``.
    """
    if isinstance(post, BetaPosterior):
        return int(np.argmax(post.sample(rng)))
    if isinstance(post, GaussianLinearPosterior):
        if actions is None:
            raise ContractViolation("linear posteriors need an action set")
        return int(np.argmax(np.asarray(actions) @ post.sample(rng)))
    if isinstance(post, DiscreteBelief):
        h = post.sample(rng)
        return int(h if optimal_action is None else optimal_action[h])
    raise ContractViolation(f"unsupported posterior {type(post).__name__}")


def satisficing_index(means, epsilon: float) -> int:
    """First index whose value is within ``epsilon`` of the maximum."""
    if epsilon < 0:
        raise ContractViolation("epsilon must be >= 0")
    m = np.asarray(means, dtype=float)
    return int(np.argmax(m >= m.max() - epsilon))


def satisficing_ts_select(post: BetaPosterior, epsilon: float, rng) -> int:
    return satisficing_index(post.sample(rng), epsilon)


def _beta_grid(alpha, beta, panels=400, order=20):
    x, w = _GL_NODES[order]
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    pdf = np.stack([stats.beta.pdf(pts, a, b) for a, b in zip(alpha, beta)])
    cdf = np.stack([stats.beta.cdf(pts, a, b) for a, b in zip(alpha, beta)])
    # E[p 1{p < x}] = mean * I_x(a + 1, b)
    partial = np.stack([a / (a + b) * stats.beta.cdf(pts, a + 1, b) for a, b in zip(alpha, beta)])
    return pts, wts, pdf, cdf, partial


def beta_bandit_information_table(post: BetaPosterior):
    """Exact shortfalls and I(A*; A=a, Y) (nats) for independent Beta arms.

    Returns ``(shortfall, gain, p_star)`` where ``p_star[i] = P(A* = i)``.
    One-dimensional integrals over the value of the best arm are evaluated by
    composite Gauss-Legendre quadrature.
    """
    alpha, beta = post.alpha.ravel(), post.beta.ravel()
    n = alpha.size
    if n == 1:
        return np.zeros(1), np.zeros(1), np.ones(1)
    pts, wts, pdf, cdf, partial = _beta_grid(alpha, beta)
    logcdf = np.log(np.clip(cdf, 1e-300, None))
    total = logcdf.sum(axis=0)
    # joint[i, a] = E[p_a 1{A*=i}]
    p_star = np.empty(n)
    joint = np.empty((n, n))
    for i in range(n):
        others = np.exp(total - logcdf[i])
        dens = pdf[i] * others
        p_star[i] = wts @ dens
        for a in range(n):
            if a == i:
                joint[i, a] = wts @ (pts * dens)
            else:
                rest = np.exp(total - logcdf[i] - logcdf[a])
                joint[i, a] = wts @ (pdf[i] * partial[a] * rest)
    p_star = np.clip(p_star, 0, None)
    p_star /= p_star.sum()
    means = alpha / (alpha + beta)
    shortfall = np.maximum(np.trace(joint) - means, 0.0)
    gain = np.empty(n)
    for a in range(n):
        j1 = np.clip(joint[:, a], 0, None)
        j0 = np.clip(p_star - j1, 0, None)
        table = np.stack([j0, j1], axis=1)
        table /= table.sum()
        gain[a] = max(mutual_information(table, base=np.e), 0.0)
    return shortfall, gain, p_star


def exact_ids_distribution(post: BetaPosterior, granularity: float = 0.01) -> TwoSparseDistribution:
    shortfall, gain, _ = beta_bandit_information_table(post)
    return two_sparse_minimize(ShortfallGainTable(shortfall, gain), granularity)


def exact_ids_bandit_select(post: BetaPosterior, rng, granularity: float = 0.01) -> int:
    """IDS with exact mutual information between the best arm and (action, outcome)."""
    return exact_ids_distribution(post, granularity).sample(rng)


# ---------------------------------------------------------------------------
# planning


def bellman_plan(p, r, horizon: int) -> np.ndarray:
    """Finite-horizon optimal Q-table of shape (horizon, S, A).

    ``p[s, a, s2]`` must be row-stochastic; ``r`` is (S, A, S) or (S, A).
    ``Q[horizon-1]`` is the expected terminal reward.
    """
    p = np.ascontiguousarray(p, dtype=float)
    if p.ndim != 3 or p.shape[0] != p.shape[2]:
        raise ContractViolation("transition array must have shape (S, A, S)")
    if np.any(p < 0) or not np.allclose(p.sum(axis=2), 1.0, atol=1e-9):
        raise ContractViolation("transition rows must be stochastic")
    r = np.asarray(r, dtype=float)
    if r.ndim == 2:
        r = np.repeat(r[:, :, None], p.shape[2], axis=2)
    if horizon < 1:
        raise ContractViolation("horizon must be >= 1")
    return kernels.backup(p, np.ascontiguousarray(r), int(horizon))


def greedy_policy(q: np.ndarray) -> np.ndarray:
    """Lowest-index argmax along the last axis."""
    return np.argmax(q, axis=-1)


def _expected_reward(p, r):
    r = np.asarray(r, dtype=float)
    return r if r.ndim == 2 else (p * r).sum(axis=2)


def policy_q(p, r, policy, horizon: int) -> np.ndarray:
    """Q-table (horizon, S, A) of a fixed stochastic policy ``policy[k, s, a]``."""
    p = np.asarray(p, dtype=float)
    er = _expected_reward(p, r)
    q = np.zeros((horizon,) + er.shape)
    v = np.zeros(p.shape[0])
    for k in range(horizon - 1, -1, -1):
        q[k] = er + p @ v
        v = (policy[k] * q[k]).sum(axis=1)
    return q


def shortfall_decomposition(p, r, init, reference, policy, horizon: int):
    """Return gap ``V(reference) − V(policy)`` and the summed per-step shortfall.

    The shortfall at step k is E_policy[Q_ref(S_k, reference) − Q_ref(S_k, A_k)],
    where Q_ref evaluates ``reference``. Both numbers agree for any pair of
    policies; the second is computed by pushing the state distribution forward.
    """
    p = np.asarray(p, dtype=float)
    q_ref = policy_q(p, r, reference, horizon)
    q_pol = policy_q(p, r, policy, horizon)
    d = np.asarray(init, dtype=float)
    gap = float(d @ (reference[0] * q_ref[0]).sum(axis=1) - d @ (policy[0] * q_pol[0]).sum(axis=1))
    total = 0.0
    for k in range(horizon):
        v_ref = (reference[k] * q_ref[k]).sum(axis=1, keepdims=True)
        total += float(d @ (policy[k] * (v_ref - q_ref[k])).sum(axis=1))
        d = np.einsum("s,sa,sat->t", d, policy[k], p)
    return gap, total


def psrl_episode_plan(post: BetaPosterior, env, rng) -> np.ndarray:
    """Sample ring transition probabilities and return the greedy policy per state.

    ``post`` holds Beta parameters of the up-move probability with shape
    (num_states, num_actions); ``env`` supplies the known ring structure.
    """
    up = post.sample(rng)
    q = bellman_plan(env.transition_matrix(up), env.reward_table(), env.tau)
    phase = np.arange(env.num_states) // env.M
    return greedy_policy(q[phase, np.arange(env.num_states)])


# ---------------------------------------------------------------------------
# exact agents


class BetaTSAgent(Agent):
    """Thompson sampling on independent Beta-Bernoulli arms."""

    def __init__(self, num_arms: int, prior_alpha: float = 1.0, prior_beta: float = 1.0):
        self.num_arms = num_arms
        self.prior = (prior_alpha, prior_beta)

    def reset(self, rng):
        a, b = self.prior
        return AgentState(epistemic=BetaPosterior(np.full(self.num_arms, a), np.full(self.num_arms, b)))

    def act(self, state, rng):
        return thompson_select(state.epistemic, rng)

    def update_epistemic(self, state, transition, rng):
        return beta_update(state.epistemic, transition.action, int(transition.observation))


class SatisficingTSAgent(BetaTSAgent):
    """Plays the first arm that is ε-optimal under one posterior sample."""

    def __init__(self, num_arms: int, epsilon: float):
        super().__init__(num_arms)
        self.epsilon = epsilon

    def act(self, state, rng):
        return satisficing_ts_select(state.epistemic, self.epsilon, rng)


class ExactIDSAgent(BetaTSAgent):
    def __init__(self, num_arms: int, granularity: float = 0.01):
        super().__init__(num_arms)
        self.granularity = granularity

    def act(self, state, rng):
        return exact_ids_bandit_select(state.epistemic, rng, self.granularity)


class LinearTSAgent(Agent):
    """Thompson sampling with a Kalman-filter posterior over θ."""

    def __init__(self, actions, prior_var: float = 1.0, noise_var: float = 1.0):
        self.actions = np.asarray(actions, dtype=float)
        self.prior_var, self.noise_var = prior_var, noise_var

    def reset(self, rng):
        return AgentState(epistemic=GaussianLinearPosterior.isotropic(self.actions.shape[1], self.prior_var,
                                                                      self.noise_var))

    def act(self, state, rng):
        return thompson_select(state.epistemic, rng, actions=self.actions)

    def update_epistemic(self, state, transition, rng):
        y = float(np.asarray(transition.observation).ravel()[0])
        return kalman_update(state.epistemic, self.actions[transition.action], y)


class PSRLAgent(Agent):
    """Posterior sampling on the ring MDP; replans at every episode boundary.

    Algorithmic state is the current policy table; epistemic state is the Beta
    posterior over each state-action's up-move probability.
    """

    def __init__(self, env):
        self.env = env

    def reset(self, rng):
        post = BetaPosterior.uniform((self.env.num_states, self.env.num_actions))
        return AgentState(algorithmic=psrl_episode_plan(post, self.env, rng), aleatoric=0, epistemic=post)

    def act(self, state, rng):
        return int(state.algorithmic[state.aleatoric])

    def update_epistemic(self, state, transition, rng):
        s = int(transition.state)
        if s // self.env.M == self.env.tau - 1:
            return state.epistemic
        up, _ = self.env.neighbours(s)
        return beta_update(state.epistemic, (s, transition.action), int(int(transition.observation) == up))

    def update_algorithmic(self, state, transition, rng, epistemic=None, aleatoric=None):
        if transition.terminal:
            return psrl_episode_plan(epistemic, self.env, rng)
        return state.algorithmic


# ---------------------------------------------------------------------------
# exact value-IDS over finitely many deterministic hypotheses


class HypothesisValueIDS:
    """Value-IDS with an exact belief over deterministic environment hypotheses.

    Each hypothesis is an environment with a tabular model over the same
    aleatoric states. The learning target is the optimal policy (greedy table
    over every phase and state). At a decision point the shortfall of action
    ``a`` is the belief-average of V − Q and its gain is the mutual information
    (bits) between the greedy action at the current state and Q(s, a), the
    noise-free pseudo-observation.
    """

    def __init__(self, hypotheses, granularity: float = 0.01):
        self.hypotheses = list(hypotheses)
        self.granularity = granularity
        self.q = np.stack([h.tabular_model().q_table() for h in self.hypotheses])
        self.policies = greedy_policy(self.q)
        self.horizon = self.q.shape[1]
        # identical greedy tables are the same value of the learning target
        keys = {}
        self.policy_class = np.array([keys.setdefault(p.tobytes(), len(keys)) for p in self.policies])

    def table(self, belief: np.ndarray, phase: int, s: int) -> ShortfallGainTable:
        q = self.q[:, phase, s, :]
        v = q.max(axis=1)
        shortfall = np.maximum(belief @ (v[:, None] - q), 0.0)
        greedy = self.policies[:, phase, s]
        gain = np.array([_discrete_mi(belief, greedy, q[:, a]) for a in range(q.shape[1])])
        return ShortfallGainTable(shortfall, gain)

    def distribution(self, belief, phase, s) -> TwoSparseDistribution:
        return two_sparse_minimize(self.table(belief, phase, s), self.granularity)

    def target_entropy(self, belief) -> float:
        mass = np.bincount(self.policy_class, weights=belief)
        return entropy(mass)

    def likelihood(self, state, action, observation) -> np.ndarray:
        """P(observation | hypothesis) for each deterministic hypothesis."""
        out = np.empty(len(self.hypotheses))
        for i, h in enumerate(self.hypotheses):
            obs, _, _ = h.step(state, action, None)
            out[i] = float(obs == observation)
        return out

    def expected_information(self, belief, env_state, steps: int) -> float:
        """H(target | belief) − E[H(target | belief after ``steps`` steps)] in bits.

        Enumerates hypotheses, the IDS action distribution at every visited
        node and the resulting deterministic observations.
        """
        return self.target_entropy(belief) - self._future_entropy(tuple(belief), env_state, steps)

    def _future_entropy(self, belief, env_state, steps):
        return _future_entropy_cached(self, belief, env_state, steps)


@lru_cache(maxsize=None)
def _future_entropy_cached(model, belief, env_state, steps):
    b = np.array(belief)
    if steps == 0 or np.count_nonzero(b) <= 1:
        return model.target_entropy(b)
    h0 = model.hypotheses[0]
    pos, phase = env_state
    nu = model.distribution(b, phase, h0.observe(env_state)).probabilities(h0.num_actions)
    total = 0.0
    for a in np.flatnonzero(nu):
        # group hypotheses by the observation they produce
        outcomes = {}
        for i, h in enumerate(model.hypotheses):
            if b[i] == 0:
                continue
            obs, _, nxt = h.step(env_state, int(a), None)
            if h.is_terminal(nxt):
                nxt = h.reset(None)
            outcomes.setdefault((int(obs), nxt), []).append(i)
        for (obs, nxt), members in outcomes.items():
            w = np.zeros_like(b)
            w[members] = b[members]
            mass = w.sum()
            total += nu[a] * mass * _future_entropy_cached(model, tuple(w / mass), nxt, steps - 1)
    return total


def _discrete_mi(belief, x_labels, y_values) -> float:
    """I(X; Y) in bits where X and Y are functions of a hypothesis drawn from ``belief``."""
    xs, xi = np.unique(x_labels, return_inverse=True)
    ys, yi = np.unique(np.round(y_values, 12), return_inverse=True)
    joint = np.zeros((xs.size, ys.size))
    np.add.at(joint, (xi, yi), belief)
    return max(mutual_information(joint), 0.0)


class ChainValueIDSAgent(Agent):
    """Exact value-IDS on :class:`~infoseek.envs.RewardChain`.

    The exit rewards are treated as known prior metadata; the belief is over
    the hidden terminal bit.
    """

    def __init__(self, tau: int, exit_rewards, granularity: float = 0.01):
        from .envs import RewardChain

        self.tau = tau
        self.model = HypothesisValueIDS(
            [RewardChain(tau, exit_rewards, bit) for bit in (0, 1)], granularity)

    def reset(self, rng):
        return AgentState(algorithmic=0, aleatoric=0, epistemic=DiscreteBelief.uniform(2))

    def decision(self, state: AgentState) -> TwoSparseDistribution:
        return self.model.distribution(state.epistemic.probs, state.algorithmic, state.aleatoric)

    def act(self, state, rng):
        return self.decision(state).sample(rng)

    def update_epistemic(self, state, transition, rng):
        env_state = (transition.state, state.algorithmic)
        lik = self.model.likelihood(env_state, transition.action, transition.observation)
        return state.epistemic.condition(lik)

    def update_algorithmic(self, state, transition, rng, epistemic=None, aleatoric=None):
        # the phase within the episode
        return 0 if transition.terminal else state.algorithmic + 1


def chain_information_ratios(exit_rewards, granularity: float = 0.01, tau_info: int | None = None):
    """Conditional τ-information ratios of exact value-IDS on a RewardChain.

    For every chain position ``s ≤ τ-2`` (visited at phase ``s`` under the
    uniform belief) returns a dict with the shortfall table, the optimizer's
    probability of action 1, the expected shortfall under that distribution,
    the expected information gain over ``tau_info`` steps (bits) and the ratio
    shortfall² / (gain / tau_info) with the 0/0 = 0 convention.
    """
    from .envs import RewardChain

    ex = np.asarray(exit_rewards, dtype=float)
    tau = ex.size + 1
    tau_info = tau if tau_info is None else tau_info
    model = HypothesisValueIDS([RewardChain(tau, ex, bit) for bit in (0, 1)], granularity)
    b = np.array([0.5, 0.5])
    rows = []
    for s in range(tau - 1):
        table = model.table(b, s, s)
        dist = two_sparse_minimize(table, granularity)
        nu = dist.probabilities(2)
        shortfall = float(nu @ table.shortfall)
        info = model.expected_information(b, (s, s), tau_info)
        rate = info / tau_info
        if rate > 0:
            ratio = shortfall ** 2 / rate
        else:
            ratio = 0.0 if shortfall == 0 else np.inf
        rows.append({"state": s, "shortfall": table.shortfall, "gain": table.gain, "nu1": nu[1],
                     "expected_shortfall": shortfall, "information": info, "ratio": ratio})
    _future_entropy_cached.cache_clear()
    return rows
