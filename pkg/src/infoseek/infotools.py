"""Information measures on discrete distributions and run diagnostics.

Logarithms are natural internally. ``entropy`` and ``mutual_information``
return bits unless ``base`` says otherwise; ``kl_divergence`` returns nats.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LN2 = np.log(2.0)


def _plogp(p):
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def _convert(nats: float, base) -> float:
    if base is None or base == np.e:
        return float(nats)
    return float(nats / np.log(base))


def entropy(dist, base=2) -> float:
    """Shannon entropy with 0·log 0 = 0 (bits by default, ``base=np.e`` for nats)."""
    p = np.asarray(dist, dtype=float).ravel()
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("not a probability distribution")
    return _convert(-_plogp(p).sum(), base)


def mutual_information(joint, base=2) -> float:
    """I(X; Y) for a joint probability matrix with X on rows and Y on columns."""
    j = np.asarray(joint, dtype=float)
    if j.ndim != 2 or np.any(j < 0) or abs(j.sum() - 1.0) > 1e-9:
        raise ValueError("joint must be a nonnegative matrix summing to 1")
    px = j.sum(axis=1, keepdims=True)
    py = j.sum(axis=0, keepdims=True)
    nz = j > 0
    nats = float((j[nz] * np.log(j[nz] / (px @ py)[nz])).sum())
    return _convert(max(nats, 0.0) if nats > -1e-15 else nats, base)


def conditional_mutual_information(joint3, base=2) -> float:
    """I(X; Z | Y) for a joint array indexed [x, y, z]."""
    j = np.asarray(joint3, dtype=float)
    total = 0.0
    for y in range(j.shape[1]):
        py = j[:, y, :].sum()
        if py > 0:
            total += py * mutual_information(j[:, y, :] / py, base=np.e)
    return _convert(total, base)


@dataclass(frozen=True)
class KLResult:
    value: float
    support_violation: bool = False

    def __float__(self):
        return self.value


def kl_divergence(p, q) -> KLResult:
    """d_KL(p ‖ q) in nats; +∞ with ``support_violation`` set when p ≪ q fails."""
    p = np.asarray(p, dtype=float).ravel()
    q = np.asarray(q, dtype=float).ravel()
    if p.shape != q.shape:
        raise ValueError("p and q must have the same shape")
    nz = p > 0
    if np.any(q[nz] <= 0):
        return KLResult(np.inf, True)
    return KLResult(float(max((p[nz] * np.log(p[nz] / q[nz])).sum(), 0.0)))


def pinsker_holds(p, q, values=None, span: float = 1.0) -> bool:
    """Check |E_p f − E_q f| ≤ span·sqrt(d_KL(p‖q)/2) for f with range ``span``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    f = np.arange(p.size, dtype=float) / max(p.size - 1, 1) if values is None else np.asarray(values, float)
    gap = abs(float(p @ f - q @ f))
    return gap <= span * np.sqrt(kl_divergence(p, q).value / 2.0) + 1e-12


# ---------------------------------------------------------------------------
# empirical distributions and the variance bound


@dataclass
class EmpiricalDistribution:
    labels: list
    counts: np.ndarray

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalDistribution":
        c = Counter(np.asarray(samples).tolist())
        labels = sorted(c)
        return cls(labels, np.array([c[k] for k in labels], dtype=float))

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.total

    def entropy(self, base=2) -> float:
        return entropy(self.probabilities, base)


def gvf_information(world_probs, target, gvf, action_probs, noise=None):
    """Exact I(target; Ã, Ỹ) in nats and the variance term of the Pinsker bound.

    ``world_probs[w]``: probability of world ``w``; ``target[w]``: target label;
    ``gvf[w, a, i]``: GVF component ``i`` at action ``a``; ``action_probs``: ν.
    ``noise``: optional (values, probs) of additive pseudo-observation noise
    applied independently to every component. Returns ``(mi, variance_term)``
    where ``variance_term = Σ_a ν(a) Σ_i Var(E[Q_i(a) | target])``.
    """
    pw = np.asarray(world_probs, dtype=float)
    q = np.asarray(gvf, dtype=float)
    if q.ndim == 2:
        q = q[:, :, None]
    labels, ti = np.unique(np.asarray(target), return_inverse=True)
    pt = np.bincount(ti, weights=pw, minlength=labels.size)
    nu = np.asarray(action_probs, dtype=float)
    mi = 0.0
    var_term = 0.0
    for a in range(q.shape[1]):
        if nu[a] == 0:
            continue
        # E[Q(a) | target]
        cond = np.stack([(pw[ti == k] @ q[ti == k, a, :]) / pt[k] for k in range(labels.size)])
        mean = pt @ cond
        var_term += nu[a] * float(pt @ ((cond - mean) ** 2).sum(axis=1))
        # observation outcomes: components plus optional noise, enumerated exactly
        obs, weights = _observation_outcomes(q[:, a, :], noise)
        flat = np.round(obs, 12).reshape(-1, obs.shape[2])
        keys, oi = np.unique(flat, axis=0, return_inverse=True)
        oi = oi.reshape(obs.shape[:2])
        joint = np.zeros((labels.size, keys.shape[0]))
        for w in range(pw.size):
            for k, wt in zip(oi[w], weights):
                joint[ti[w], k] += pw[w] * wt
        mi += nu[a] * mutual_information(joint / joint.sum(), base=np.e)
    return mi, var_term


def _observation_outcomes(values, noise):
    """All noisy observation vectors per world with their probabilities."""
    n_world, n_comp = values.shape
    if noise is None:
        return values[:, None, :], np.ones(1)
    nv, npr = (np.asarray(x, dtype=float) for x in noise)
    grids = np.array(np.meshgrid(*([np.arange(nv.size)] * n_comp), indexing="ij")).reshape(n_comp, -1).T
    shifts = nv[grids]
    probs = np.prod(npr[grids], axis=1)
    return values[:, None, :] + shifts[None, :, :], probs


def variance_lower_bound(var_term: float, n_components: int, span_gvf: float, span_noise: float = 0.0) -> float:
    """2 / (n (M1 + M2)²) · variance term."""
    return 2.0 / (n_components * (span_gvf + span_noise) ** 2) * var_term


# ---------------------------------------------------------------------------
# information ratios


@dataclass
class InfoRatioEstimate:
    numerator: np.ndarray
    denominator: np.ndarray
    tau: int
    ratio: np.ndarray
    undefined: np.ndarray
    epsilon: np.ndarray | None = None


def ratio_with_convention(numerator, denominator):
    num = np.asarray(numerator, dtype=float)
    den = np.asarray(denominator, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return out


def empirical_info_ratio(shortfalls, info_now, info_later, tau: int, epsilon=None) -> InfoRatioEstimate:
    """Pointwise information ratios from run diagnostics.

    ``shortfalls[t]`` is the expected shortfall at step t given the agent
    state; ``info_now[t]`` the remaining information I(χ; E | P_t) and
    ``info_later[t]`` its expected value τ steps later (both exact, same
    units). The ratio is shortfall² / ((now − later)/τ) with 0/0 = 0.
    Steps where the gain is negative are flagged and reported as NaN.
    """
    s = np.asarray(shortfalls, dtype=float)
    if epsilon is not None:
        s = s - np.asarray(epsilon, dtype=float)
    gain = (np.asarray(info_now, dtype=float) - np.asarray(info_later, dtype=float)) / tau
    bad = gain < -1e-12
    num = np.maximum(s, 0.0) ** 2
    ratio = ratio_with_convention(num, np.maximum(gain, 0.0))
    ratio[bad] = np.nan
    return InfoRatioEstimate(num, gain, tau, ratio, bad, None if epsilon is None else np.asarray(epsilon))


# ---------------------------------------------------------------------------
# satisficing targets


def satisficing_entropy_curve(num_arms: int, epsilons: Sequence[float], draws: int, rng, base=np.e):
    """Monte Carlo entropy of the first ε-optimal arm under a uniform-mean prior.

    The same ``draws`` mean vectors are reused for every ε. Returns a list of
    ``(ε, entropy, p_hat)`` where ``p_hat`` estimates the probability that a
    given arm is ε-optimal. Entropy is in nats by default.
    """
    means = rng.uniform(size=(draws, num_arms))
    best = means.max(axis=1, keepdims=True)
    out = []
    for eps in epsilons:
        ok = means >= best - eps
        first = np.argmax(ok, axis=1)
        out.append((float(eps), EmpiricalDistribution.from_samples(first).entropy(base), float(ok.mean())))
    return out


# ---------------------------------------------------------------------------
# regret traces and learning time

LEARNING_WINDOW = 100


@dataclass
class RegretTrace:
    shortfall: np.ndarray
    reward: np.ndarray
    episode: np.ndarray
    agent: str = ""
    env: str = ""
    seed: int = 0
    gain: np.ndarray | None = None
    ratio: np.ndarray | None = None
    optimal_episodes: np.ndarray | None = field(default=None)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.shortfall)

    def write_csv(self, path):
        """Diagnostics CSV: t, shortfall, gain, ratio, cumulative_regret."""
        n = self.shortfall.size
        gain = np.full(n, np.nan) if self.gain is None else self.gain
        ratio = np.full(n, np.nan) if self.ratio is None else self.ratio
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "shortfall", "gain", "ratio", "cumulative_regret"])
            for t, row in enumerate(zip(self.shortfall, gain, ratio, self.cumulative_regret)):
                w.writerow([t] + [repr(float(v)) for v in row])


def learning_time(suboptimal, threshold: float = 0.9, window: int = LEARNING_WINDOW):
    """First episode at which the trailing suboptimal fraction drops below ``threshold``.

    ``suboptimal`` is a boolean sequence with one entry per episode. Before
    ``window`` episodes have elapsed the fraction is taken over all episodes
    so far. Returns ``None`` when the threshold is never crossed.
    """
    bad = np.asarray(suboptimal, dtype=float)
    if bad.size == 0:
        return None
    csum = np.concatenate([[0.0], np.cumsum(bad)])
    idx = np.arange(1, bad.size + 1)
    lo = np.maximum(idx - window, 0)
    frac = (csum[idx] - csum[lo]) / (idx - lo)
    hit = np.flatnonzero(frac < threshold)
    return int(hit[0]) if hit.size else None


def write_curve_csv(path, x_name, y_name, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x_name, y_name])
        for x, y in rows:
            w.writerow([repr(float(x)), repr(float(y))])
