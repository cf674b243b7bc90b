"""Action-selection planners: ε-greedy, Thompson sampling over epistemic
indices, and sample-based variance IDS with a pairwise-grid ratio optimizer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import ContractViolation


@dataclass(frozen=True)
class TwoSparseDistribution:
    """Mixture of at most two actions: ``action_a`` w.p. ``prob_a``, else ``action_b``.

    ``fallback`` is only set when no finite ratio exists (all gains zero while
    some numerator is positive); sampling is then uniform over it.
    """

    action_a: int
    action_b: int
    prob_a: float
    fallback: tuple = ()

    def __post_init__(self):
        if not 0.0 <= self.prob_a <= 1.0:
            raise ContractViolation("prob_a must lie in [0, 1]")

    @property
    def support(self) -> tuple:
        if self.fallback:
            return tuple(self.fallback)
        if self.action_a == self.action_b or self.prob_a == 1.0:
            return (self.action_a,)
        if self.prob_a == 0.0:
            return (self.action_b,)
        return (self.action_a, self.action_b)

    def probabilities(self, num_actions: int) -> np.ndarray:
        nu = np.zeros(num_actions)
        if self.fallback:
            nu[list(self.fallback)] = 1.0 / len(self.fallback)
            return nu
        nu[self.action_a] += self.prob_a
        nu[self.action_b] += 1.0 - self.prob_a
        return nu

    def sample(self, rng) -> int:
        if self.fallback:
            return int(self.fallback[int(rng.integers(len(self.fallback)))])
        if self.prob_a >= 1.0:
            return self.action_a
        return self.action_a if rng.random() < self.prob_a else self.action_b

    @staticmethod
    def point(action: int) -> "TwoSparseDistribution":
        return TwoSparseDistribution(action, action, 1.0)


@dataclass(frozen=True)
class ShortfallGainTable:
    shortfall: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.shortfall, dtype=float)
        g = np.asarray(self.gain, dtype=float)
        if d.ndim != 1 or d.shape != g.shape or d.size == 0:
            raise ContractViolation("shortfall and gain must be equal-length nonempty vectors")
        if np.any(d < 0) or np.any(g < 0) or np.any(np.isnan(d)) or np.any(np.isnan(g)):
            raise ContractViolation("table entries must be nonnegative")
        object.__setattr__(self, "shortfall", d)
        object.__setattr__(self, "gain", g)

    @property
    def num_actions(self):
        return self.shortfall.size


def ratio_objective(nu, table: ShortfallGainTable, eps_pess: float = 0.0) -> float:
    """((ν·Δ)² + ε_pess) / (ν·g), with 0/0 = 0 and positive/0 = +∞."""
    nu = np.asarray(nu, dtype=float)
    if abs(nu.sum() - 1.0) > 1e-9 or np.any(nu < 0):
        raise ContractViolation("nu must be a probability vector")
    num = float(nu @ table.shortfall) ** 2 + eps_pess
    den = float(nu @ table.gain)
    if den > 0:
        return num / den
    return np.inf if num > 0 else 0.0


def two_sparse_minimize(table: ShortfallGainTable, granularity: float = 0.01,
                        eps_pess: float = 0.0) -> TwoSparseDistribution:
    """Minimize the ratio objective over all action pairs on a probability grid.

    Values within a relative 1e-12 of the minimum count as ties. Ties go to
    the lexicographically first pair; inside that pair a positive optimum
    prefers the most balanced split (so symmetric tables give ½/½), then the
    higher probability on the lower index. A zero optimum keeps the point
    mass on the lower index. When every candidate is +∞ the result is
    uniform over the minimum-shortfall actions.
    """
    n_grid = int(round(1.0 / granularity))
    if n_grid < 1 or abs(n_grid * granularity - 1.0) > 1e-9:
        raise ContractViolation("granularity must divide 1 evenly")
    n = table.num_actions
    d, g = table.shortfall, table.gain
    if n == 1:
        return TwoSparseDistribution.point(0)
    i, j, k, best = kernels.pair_grid(d, g, float(eps_pess), n_grid)
    if not best < np.inf:
        mins = np.flatnonzero(d == d.min())
        if mins.size == 1:
            return TwoSparseDistribution.point(int(mins[0]))
        return TwoSparseDistribution(int(mins[0]), int(mins[0]), 1.0, fallback=tuple(int(m) for m in mins))
    if k == n_grid:
        return TwoSparseDistribution.point(int(i))
    if k == 0:
        return TwoSparseDistribution.point(int(j))
    return TwoSparseDistribution(int(i), int(j), k / n_grid)


def variance_gain_optimal_action(samples) -> np.ndarray:
    """Between-class variance of value samples grouped by their greedy action."""
    s = np.ascontiguousarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[0] < 2:
        raise ContractViolation("need an (n >= 2, num_actions) sample array")
    return kernels.class_gain(s)


def variance_gain_gvf(samples) -> np.ndarray:
    """Summed per-component sample variance (1/n normalisation) for each action.

    ``samples`` has shape (n, num_actions) or (n, num_actions, num_components).
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim == 2:
        s = s[:, :, None]
    if s.ndim != 3 or s.shape[0] < 2:
        raise ContractViolation("need at least two samples")
    dev = s - s.mean(axis=0)
    return (dev * dev).sum(axis=(0, 2)) / s.shape[0]


def sample_shortfalls(values) -> np.ndarray:
    """Mean over samples of max_a' Q(a') − Q(a), clamped at zero."""
    v = np.asarray(values, dtype=float)
    return np.maximum((v.max(axis=1, keepdims=True) - v).mean(axis=0), 0.0)


OPTIMAL_ACTION = "optimal_action"
GVF = "gvf"


@dataclass
class PlannerConfig:
    """Settings for the planners.

    ``kind`` is one of ``egreedy``, ``ts`` or ``ids``. ``target`` selects the
    IDS gain estimator: ``optimal_action`` (class partition of value samples)
    or ``gvf`` (variance of the full GVF vector). ``noise_std`` is the
    pseudo-observation noise; gains are divided by (1 + noise_std/span)² to
    mimic the span penalty of a noisy pseudo-observation. ``tau`` is only used
    by diagnostics.
    """

    kind: str = "ids"
    epsilon: float = 0.05
    n_ids: int = 40
    granularity: float = 0.01
    eps_pess: float = 0.0
    noise_std: float = 0.0
    target: str = OPTIMAL_ACTION
    tau: int = 1

    def __post_init__(self):
        if self.kind not in ("egreedy", "ts", "ids", "greedy"):
            raise ContractViolation(f"unknown planner kind {self.kind!r}")
        if self.n_ids < 2:
            raise ContractViolation("n_ids must be >= 2")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ContractViolation("epsilon must lie in [0, 1]")
        n_grid = round(1.0 / self.granularity)
        if abs(n_grid * self.granularity - 1.0) > 1e-9:
            raise ContractViolation("granularity must divide 1 evenly")
        if self.eps_pess < 0 or self.noise_std < 0:
            raise ContractViolation("eps_pess and noise_std must be nonnegative")
        if self.target not in (OPTIMAL_ACTION, GVF):
            raise ContractViolation(f"unknown target {self.target!r}")


@dataclass
class IDSDecision:
    """Everything computed for one IDS choice (kept for diagnostics)."""

    table: ShortfallGainTable
    distribution: TwoSparseDistribution
    action: int
    ratio: float
    diagnostics: dict = field(default_factory=dict)


def ids_table(values, config: PlannerConfig, gvf=None) -> ShortfallGainTable:
    """Shortfall/gain table from n_IDS value samples (and optional GVF samples)."""
    values = np.asarray(values, dtype=float)
    delta = sample_shortfalls(values)
    if config.target == GVF:
        gain = variance_gain_gvf(values if gvf is None else gvf)
    else:
        gain = variance_gain_optimal_action(values)
    if config.noise_std > 0:
        span = max(float(values.max() - values.min()), 1e-12)
        gain = gain / (1.0 + config.noise_std / span) ** 2
    return ShortfallGainTable(delta, np.maximum(gain, 0.0))


def ids_decide(values, config: PlannerConfig, rng, gvf=None) -> IDSDecision:
    table = ids_table(values, config, gvf)
    dist = two_sparse_minimize(table, config.granularity, config.eps_pess)
    nu = dist.probabilities(table.num_actions)
    return IDSDecision(table, dist, dist.sample(rng), ratio_objective(nu, table, config.eps_pess))


def ids_select(net, x, config: PlannerConfig, rng, gvf_fn=None) -> int:
    """Sample-based variance IDS for an epistemic network.

    Draws ``config.n_ids`` indices, evaluates the network at input ``x`` and
    minimizes the pessimistic ratio over two-sparse action distributions.
    ``gvf_fn(outputs)`` may map raw outputs to (values, gvf samples).
    """
    z = net.sample_indices(config.n_ids, rng)
    out = net.forward_indices(np.atleast_2d(x), z)[:, 0, :]
    if gvf_fn is None:
        values, gvf = out, None
    else:
        values, gvf = gvf_fn(out)
    return ids_decide(values, config, rng, gvf).action


def greedy_action(values) -> int:
    return int(np.argmax(values))


def epsilon_greedy_select(net, x, epsilon: float, rng) -> int:
    """Uniform action with probability ε, else argmax of the index-averaged output."""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolation("epsilon must lie in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(net.output_dim))
    mean = net.forward_all(np.atleast_2d(x))[:, 0, :].mean(axis=0)
    return greedy_action(mean)


def ts_select(net, x, index: int, episode_boundary: bool, rng):
    """Greedy action for epistemic index ``index``, resampled at episode boundaries."""
    if not 0 <= index < net.num_members:
        raise ContractViolation("epistemic index out of range")
    if episode_boundary:
        index = int(rng.integers(net.num_members))
    out = net.forward_indices(np.atleast_2d(x), np.array([index]))[0, 0]
    return greedy_action(out), index
