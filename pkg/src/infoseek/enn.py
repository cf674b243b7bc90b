"""Epistemic neural networks built from ensembles, with hand-written gradients.

Two network families share one interface:

* :class:`EnsembleMLP` -- K multilayer perceptrons, each the sum of a
  trainable network and a frozen prior network scaled by ``prior_scale``.
* :class:`EnsembleVector` -- K parameter vectors (logits or linear
  parameters), again trainable plus frozen prior.

Both expose ``parameters()`` (trainable arrays with a leading member axis),
``forward_indices(X, z)`` returning ``(len(z), batch, out)`` and
``backward(cache, grad_out)`` returning gradients aligned with
``parameters()``. Losses produce the gradient with respect to outputs and
the network turns it into parameter gradients.
"""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .core import ContractViolation, RandomSource, as_random_source

CHECKPOINT_FORMAT = "infoseek-enn"
CHECKPOINT_VERSION = 1


def truncated_normal(rng: RandomSource, shape, std: float, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std²) truncated to ±bound·std by resampling."""
    out = rng.normal(size=shape)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.normal(size=int(bad.sum()))
        bad = np.abs(out) > bound
    return out * std


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(pre):
    return (pre > 0.0).astype(float)


def _tanh_grad(pre):
    return 1.0 - np.tanh(pre) ** 2


ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


class EnsembleMLP:
    """K ensemble members, each ``trainable_z(x) + prior_scale * prior_z(x)``.

    Weights are stacked across members: layer ``l`` has ``W[l]`` of shape
    ``(K, fan_in, fan_out)`` and ``b[l]`` of shape ``(K, fan_out)``.
    """

    kind = "mlp"

    def __init__(self, input_dim: int, output_dim: int, hidden=(50, 50), num_members: int = 20,
                 prior_scale: float = 1.0, seed: int | RandomSource = 0, activation: str = "relu",
                 zero_init: bool = False):
        if activation not in ACTIVATIONS:
            raise ContractViolation(f"unknown activation {activation!r}")
        if num_members < 1:
            raise ContractViolation("need at least one ensemble member")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.num_members = int(num_members)
        self.prior_scale = float(prior_scale)
        self.activation = activation
        rng = as_random_source(seed)
        widths = (self.input_dim,) + self.hidden + (self.output_dim,)
        self.weights = []
        self.prior = []
        for layer, (fi, fo) in enumerate(zip(widths[:-1], widths[1:])):
            std = 1.0 / np.sqrt(fi)
            shape = (self.num_members, fi, fo)
            w = np.zeros(shape) if zero_init else truncated_normal(rng.child(f"w{layer}"), shape, std)
            self.weights += [w, np.zeros((self.num_members, fo))]
            pw = truncated_normal(rng.child(f"prior{layer}"), shape, std)
            self.prior += [pw, np.zeros((self.num_members, fo))]
        for p in self.prior:
            p.setflags(write=False)

    @property
    def num_layers(self):
        return len(self.weights) // 2

    def parameters(self) -> list:
        return self.weights

    def prior_parameters(self) -> list:
        return self.prior

    def sample_indices(self, n: int, rng) -> np.ndarray:
        return rng.integers(self.num_members, size=n)

    def _check_x(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[-1] != self.input_dim:
            raise ContractViolation(f"input dimension {X.shape[-1]} != {self.input_dim}")
        return X

    def _run(self, params, X, z):
        act, _ = ACTIVATIONS[self.activation]
        m = len(z)
        # the input is shared by all members: one matmul for the first layer
        w0 = params[0][z]
        pre = (X @ w0.transpose(1, 0, 2).reshape(X.shape[1], -1)).reshape(X.shape[0], m, -1)
        pre = pre.transpose(1, 0, 2) + params[1][z][:, None, :]
        inputs, pres = [X], [pre]
        h = act(pre) if self.num_layers > 1 else pre
        for layer in range(1, self.num_layers):
            w = np.ascontiguousarray(params[2 * layer][z])
            b = np.ascontiguousarray(params[2 * layer + 1][z])
            h = np.ascontiguousarray(h)
            inputs.append(h)
            pre = kernels.dense_forward(h, w, b)
            pres.append(pre)
            h = act(pre) if layer < self.num_layers - 1 else pre
        return h, (inputs, pres)

    def forward_cached(self, X, z):
        """Outputs ``(len(z), batch, out)`` and the cache needed by :meth:`backward`."""
        X = self._check_x(X)
        z = np.asarray(z, dtype=np.int64)
        if z.size and (z.min() < 0 or z.max() >= self.num_members):
            raise ContractViolation("epistemic index out of range")
        out, cache = self._run(self.weights, X, z)
        if self.prior_scale != 0.0:
            out = out + self.prior_scale * self._prior_out(X)[z]
        return out, (z, cache)

    PRIOR_CACHE_SIZE = 65536

    def _prior_out(self, X):
        """Prior outputs for all members, ``(K, batch, out)``, memoised per input row."""
        cache = self.__dict__.setdefault("_prior_cache", {})
        keys = [row.tobytes() for row in X]
        missing = [i for i, k in enumerate(keys) if k not in cache]
        if missing and len(cache) + len(missing) > self.PRIOR_CACHE_SIZE:
            cache.clear()
            missing = list(range(len(keys)))
        # one row at a time: BLAS results can depend on batch shape, and the
        # cached value must not depend on which batch first saw the row
        members = np.arange(self.num_members)
        for i in missing:
            if keys[i] not in cache:
                cache[keys[i]] = self._run(self.prior, X[i:i + 1], members)[0][:, 0, :]
        return np.stack([cache[k] for k in keys], axis=1)

    def forward_indices(self, X, z) -> np.ndarray:
        return self.forward_cached(X, z)[0]

    def forward_all(self, X) -> np.ndarray:
        return self.forward_indices(X, np.arange(self.num_members))

    def forward(self, x, z: int) -> np.ndarray:
        """f(x, z) for a single input vector and index."""
        return self.forward_indices(np.asarray(x, dtype=float)[None, :], np.array([int(z)]))[0, 0]

    def backward(self, cache, grad_out) -> list:
        """Gradients of Σ grad_out·output w.r.t. trainable parameters (prior excluded)."""
        z, (inputs, pres) = cache
        _, dact = ACTIVATIONS[self.activation]
        grads = [np.zeros_like(p) for p in self.weights]
        unique = np.unique(z).size == z.size

        def scatter(dst, src):
            if unique:
                dst[z] = src
            else:
                np.add.at(dst, z, src)

        g = np.ascontiguousarray(grad_out, dtype=float)
        for layer in range(self.num_layers - 1, 0, -1):
            w = np.ascontiguousarray(self.weights[2 * layer][z])
            gx, gw, gb = kernels.dense_backward(inputs[layer], w, g)
            scatter(grads[2 * layer], gw)
            scatter(grads[2 * layer + 1], gb)
            g = gx * dact(pres[layer - 1])
        X = inputs[0]
        m, n, o = g.shape
        gw0 = (X.T @ g.transpose(1, 0, 2).reshape(n, m * o)).reshape(X.shape[1], m, o)
        scatter(grads[0], gw0.transpose(1, 0, 2))
        scatter(grads[1], g.sum(axis=1))
        return grads

    def manifest(self) -> dict:
        return {"kind": self.kind, "input_dim": self.input_dim, "output_dim": self.output_dim,
                "hidden": list(self.hidden), "num_members": self.num_members,
                "prior_scale": self.prior_scale, "activation": self.activation}

    @classmethod
    def from_manifest(cls, m: dict):
        return cls(m["input_dim"], m["output_dim"], m["hidden"], m["num_members"],
                   m["prior_scale"], 0, m["activation"])


class EnsembleVector:
    """K parameter vectors ``theta_z + prior_scale * prior_z``; the input is ignored.

    Used for the logit ensembles (one logit per candidate arm) and for linear
    parameter ensembles (logistic observation models). Trainable parts start
    at zero, so at initialisation each member equals its scaled prior draw.
    """

    kind = "vector"

    def __init__(self, dim: int, num_members: int = 20, prior_scale: float = 1.0,
                 seed: int | RandomSource = 0):
        self.output_dim = int(dim)
        self.num_members = int(num_members)
        self.prior_scale = float(prior_scale)
        rng = as_random_source(seed)
        self.weights = [np.zeros((self.num_members, self.output_dim))]
        self.prior = [rng.child("prior").normal(size=(self.num_members, self.output_dim))]
        self.prior[0].setflags(write=False)

    def parameters(self) -> list:
        return self.weights

    def prior_parameters(self) -> list:
        return self.prior

    def sample_indices(self, n: int, rng) -> np.ndarray:
        return rng.integers(self.num_members, size=n)

    def values(self, z=None) -> np.ndarray:
        """Member vectors, shape ``(len(z), dim)`` (all members when ``z`` is None)."""
        z = np.arange(self.num_members) if z is None else np.asarray(z, dtype=np.int64)
        return self.weights[0][z] + self.prior_scale * self.prior[0][z]

    def forward_cached(self, X, z):
        z = np.asarray(z, dtype=np.int64)
        n = 1 if X is None else np.atleast_2d(X).shape[0]
        v = self.values(z)
        return np.repeat(v[:, None, :], n, axis=1), (z,)

    def forward_indices(self, X, z) -> np.ndarray:
        return self.forward_cached(X, z)[0]

    def forward_all(self, X=None) -> np.ndarray:
        return self.forward_indices(X, np.arange(self.num_members))

    def forward(self, x, z: int) -> np.ndarray:
        return self.values([z])[0]

    def backward(self, cache, grad_out) -> list:
        (z,) = cache
        g = np.zeros_like(self.weights[0])
        np.add.at(g, z, np.asarray(grad_out).sum(axis=1))
        return [g]

    def manifest(self) -> dict:
        return {"kind": self.kind, "dim": self.output_dim, "num_members": self.num_members,
                "prior_scale": self.prior_scale}

    @classmethod
    def from_manifest(cls, m: dict):
        return cls(m["dim"], m["num_members"], m["prior_scale"], 0)


def prior_digest(net) -> str:
    """SHA-256 of the frozen prior parameters (for immutability checks)."""
    h = hashlib.sha256()
    for p in net.prior_parameters():
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def apply(self, params: list, grads: list) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class SGD:
    lr: float = 0.1
    step_count: int = 0

    def apply(self, params: list, grads: list) -> None:
        self.step_count += 1
        for p, g in zip(params, grads):
            p -= self.lr * g


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr=lr)
    if name == "sgd":
        return SGD(lr=lr)
    raise ContractViolation(f"unknown optimizer {name!r}")


# ---------------------------------------------------------------------------
# replay


class ReplayBuffer:
    """FIFO store of transition records; the oldest record is evicted first."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ContractViolation("capacity must be positive")
        self.capacity = int(capacity)
        self._items = deque(maxlen=self.capacity)

    def add(self, item) -> None:
        self._items.append(item)

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def items(self) -> list:
        return list(self._items)

    def sample(self, n: int, rng) -> list:
        idx = rng.integers(len(self._items), size=n)
        return [self._items[i] for i in idx]


# ---------------------------------------------------------------------------
# losses
#
# Each loss takes the network, the indices z (length n_index) and a list of
# records, and returns (per-(index, record) losses, gradient w.r.t. outputs,
# cache). Gradients are for the plain per-pair losses; the step below applies
# the averaging weights.


def _stack(batch, key):
    return np.stack([np.asarray(b[key], dtype=float) for b in batch])


@dataclass(frozen=True)
class QLearning:
    """Squared TD error with bootstrap ``r + γ max_a' f(s', z)[a']``.

    Records need ``x``, ``action``, ``reward``, ``x_next`` and ``terminal``.
    The bootstrap uses ``target`` parameters when given, else the current ones.
    """

    gamma: float = 0.99

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation("gamma must lie in [0, 1]")

    def evaluate(self, net, z, batch, target=None):
        X = _stack(batch, "x")
        Xn = _stack(batch, "x_next")
        a = np.array([int(b["action"]) for b in batch])
        r = np.array([float(b["reward"]) for b in batch])
        done = np.array([bool(b["terminal"]) for b in batch])
        out, cache = net.forward_cached(X, z)
        nxt = (target or net).forward_indices(Xn, z).max(axis=2)
        y = r[None, :] + self.gamma * np.where(done[None, :], 0.0, nxt)
        cols = np.arange(len(batch))
        pred = out[:, cols, a]
        err = pred - y
        gout = np.zeros_like(out)
        gout[:, cols, a] = 2.0 * err
        return err * err, gout, cache


def gvf_likelihood_terms(logits, bits) -> np.ndarray:
    """Per-component likelihood of the observed bits: σ(x) if the bit is 1, else 1 − σ(x).

    Written as (o + (1 − o) e^{−x}) / (1 + e^{−x}); equals ½ at logit 0.
    """
    x = np.asarray(logits, dtype=float)
    o = np.asarray(bits, dtype=float)
    e = np.exp(-x)
    return (o + (1.0 - o) * e) / (1.0 + e)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


@dataclass(frozen=True)
class LogisticGVF:
    """Negative log-likelihood of the first ``k`` observation bits.

    The network output is a parameter vector φ; component ``j`` of action
    ``a`` has logit ⟨a_j, φ⟩. Records need ``features`` (K, d) and ``bits`` (K,).
    """

    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ContractViolation("k must be >= 1")

    def evaluate(self, net, z, batch, target=None):
        F = _stack(batch, "features")[:, : self.k, :]  # (B, k, d)
        o = _stack(batch, "bits")[:, : self.k]  # (B, k)
        out, cache = net.forward_cached(np.ones((len(batch), 1)), z)  # (n, B, d)
        logits = np.einsum("bkd,nbd->nbk", F, out)
        sign = 2.0 * o[None] - 1.0
        losses = -_log_sigmoid(sign * logits).sum(axis=2)
        sig = 0.5 * (1.0 + np.tanh(0.5 * logits))
        dlogit = sig - o[None]
        gout = np.einsum("nbk,bkd->nbd", dlogit, F)
        return losses, gout, cache


def gvf_log_loss(net, z: int, observation, action_features, k: int) -> float:
    """Single-record form of :class:`LogisticGVF`: −Σ_{j<k} log likelihood term."""
    K = np.asarray(action_features).shape[0]
    if not 1 <= k <= K:
        raise ContractViolation("need 1 <= k <= number of components")
    rec = {"features": action_features, "bits": observation}
    return float(LogisticGVF(k).evaluate(net, np.array([z]), [rec])[0][0, 0])


@dataclass(frozen=True)
class CategoricalCrossEntropy:
    """−log of the probability mass the member puts on hypotheses consistent with the data.

    The network output is a logit vector over hypotheses; records carry a
    boolean ``consistent`` mask. The loss is logsumexp(all) − logsumexp(consistent).
    """

    def evaluate(self, net, z, batch, target=None):
        mask = np.stack([np.asarray(b["consistent"], dtype=bool) for b in batch])  # (B, N)
        if not mask.any(axis=1).all():
            raise ContractViolation("record with no consistent hypothesis")
        out, cache = net.forward_cached(np.ones((len(batch), 1)), z)  # (n, B, N)
        top = out.max(axis=2, keepdims=True)
        e = np.exp(out - top)
        p_all = e / e.sum(axis=2, keepdims=True)
        er = np.where(mask[None], e, 0.0)
        p_res = er / er.sum(axis=2, keepdims=True)
        losses = np.log(e.sum(axis=2)) - np.log(er.sum(axis=2))
        return losses, p_all - p_res, cache


def restricted_cross_entropy(logits, consistent) -> float:
    """logsumexp(logits) − logsumexp(logits[consistent])."""
    x = np.asarray(logits, dtype=float)
    m = np.asarray(consistent, dtype=bool)
    if not m.any():
        return np.inf
    top = x.max()
    return float(np.log(np.exp(x - top).sum()) - np.log(np.exp(x[m] - top).sum()))


def q_loss(net, target_params, z: int, transition: dict, gamma: float) -> float:
    """Squared TD error for one record and one index (``target_params`` may be None)."""
    losses, _, _ = QLearning(gamma).evaluate(net, np.array([z]), [transition], target_params)
    return float(losses[0, 0])


# ---------------------------------------------------------------------------
# the averaged epistemic update


@dataclass
class StepResult:
    applied: bool
    loss: float = float("nan")
    reason: str = ""


def sample_index_set(num_members: int, n_index: int, rng) -> np.ndarray:
    """``n_index`` indices from the uniform reference distribution.

    Drawn without replacement while ``n_index <= K`` (so ``n_index = K``
    touches every member once), with replacement beyond that.
    """
    if n_index <= num_members:
        return np.sort(rng.choice(num_members, size=n_index, replace=False))
    return rng.integers(num_members, size=n_index)


def epistemic_sgd_step(net, optimizer, buffer: ReplayBuffer, loss, n_batch: int, n_index: int,
                       rng, target=None) -> StepResult:
    """One optimizer step on the loss averaged over n_index indices × n_batch records.

    Records may carry ``boot`` (K,) 0/1 weights for bootstrapped masking.
    Returns ``StepResult(applied=False)`` without touching anything when the
    buffer holds fewer than ``n_batch`` records.
    """
    if len(buffer) < n_batch:
        return StepResult(False, reason=f"buffer has {len(buffer)} < {n_batch} records")
    z = sample_index_set(net.num_members, n_index, rng)
    batch = buffer.sample(n_batch, rng)
    losses, gout, cache = loss.evaluate(net, z, batch, target)
    w = np.full(losses.shape, 1.0 / (n_index * n_batch))
    if "boot" in batch[0]:
        boot = np.stack([np.asarray(b["boot"], dtype=float) for b in batch])  # (B, K)
        w = w * boot[:, z].T
    grads = net.backward(cache, gout * w[:, :, None])
    optimizer.apply(net.parameters(), grads)
    return StepResult(True, float((w * losses).sum()))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(net, path) -> Path:
    """Write ``<path>.npz`` (tensors) and ``<path>.json`` (manifest); returns the manifest path."""
    base = Path(path)
    arrays = {}
    layers = []
    for name, group, prior in (("param", net.parameters(), False), ("prior", net.prior_parameters(), True)):
        for i, a in enumerate(group):
            key = f"{name}_{i}"
            arrays[key] = np.asarray(a)
            layers.append({"key": key, "shape": list(a.shape), "prior": prior})
    np.savez(base.with_suffix(".npz"), **arrays)
    manifest = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
                "network": net.manifest(), "tensors": layers}
    out = base.with_suffix(".json")
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def load_checkpoint(path):
    base = Path(path)
    manifest = json.loads(base.with_suffix(".json").read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT or manifest.get("version") != CHECKPOINT_VERSION:
        raise ContractViolation("unsupported checkpoint format or version")
    spec = manifest["network"]
    cls = {"mlp": EnsembleMLP, "vector": EnsembleVector}[spec["kind"]]
    net = cls.from_manifest(spec)
    data = np.load(base.with_suffix(".npz"))
    params = [t for t in manifest["tensors"] if not t["prior"]]
    priors = [t for t in manifest["tensors"] if t["prior"]]
    net.weights = [data[t["key"]].copy() for t in params]
    net.prior = [data[t["key"]].copy() for t in priors]
    net.__dict__.pop("_prior_cache", None)
    for p in net.prior:
        p.setflags(write=False)
    return net
