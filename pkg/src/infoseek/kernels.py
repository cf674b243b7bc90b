"""Hot numerical kernels, each with a numba loop version and a numpy version.

The public names at the bottom of this module are bound to one of the two
implementations according to :mod:`infoseek._accel`. Both versions are
always importable (``*_loop`` and ``*_numpy``) so tests and the benchmark can
compare them directly.
"""
import numpy as np

from ._accel import njit, pick


# ---------------------------------------------------------------------------
# pairwise grid search for the ratio objective


TIE_RTOL = 1e-12


def _pair_value(di, dj, gi, gj, q, eps):
    m = q * di + (1.0 - q) * dj
    num = m * m + eps
    den = q * gi + (1.0 - q) * gj
    if den > 0.0:
        return num / den
    if num > 0.0:
        return np.inf
    return 0.0


_pair_value_jit = njit(_pair_value)


def _pair_grid_loop(shortfall, gain, eps, n_grid):
    # pass 1: the minimum; pass 2: first near-tie pair, most balanced split
    n = shortfall.shape[0]
    best = np.inf
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n_grid, -1, -1):
                v = _pair_value_jit(shortfall[i], shortfall[j], gain[i], gain[j], k / n_grid, eps)
                if v < best:
                    best = v
    if best == np.inf:
        return 0, 0, n_grid, best
    cut = best + TIE_RTOL * best
    for i in range(n):
        for j in range(i + 1, n):
            bk = -1
            for k in range(n_grid, -1, -1):
                v = _pair_value_jit(shortfall[i], shortfall[j], gain[i], gain[j], k / n_grid, eps)
                if v <= cut:
                    if bk < 0:
                        bk = k
                    elif best > 0.0 and abs(2 * k - n_grid) < abs(2 * bk - n_grid):
                        bk = k
            if bk >= 0:
                return i, j, bk, best
    return 0, 0, n_grid, best


pair_grid_loop = njit(_pair_grid_loop)


def pair_grid_numpy(shortfall, gain, eps, n_grid):
    n = shortfall.shape[0]
    ii, jj = np.triu_indices(n, 1)
    q = np.arange(n_grid, -1, -1) / n_grid
    m = q[None, :] * shortfall[ii][:, None] + (1.0 - q)[None, :] * shortfall[jj][:, None]
    num = m * m + eps
    den = q[None, :] * gain[ii][:, None] + (1.0 - q)[None, :] * gain[jj][:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        v = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), np.where(num > 0.0, np.inf, 0.0))
    best = float(v.min())
    if not best < np.inf:
        return 0, 0, n_grid, np.inf
    near = v <= best + TIE_RTOL * best
    p = int(np.flatnonzero(near.any(axis=1))[0])
    ks = np.flatnonzero(near[p])  # scan positions, k = n_grid - pos
    if best > 0.0:
        balance = np.abs(2 * (n_grid - ks) - n_grid)
        pos = int(ks[np.argmin(balance)])
    else:
        pos = int(ks[0])
    return int(ii[p]), int(jj[p]), n_grid - pos, best


# ---------------------------------------------------------------------------
# between-class variance of value samples grouped by their argmax


def _class_gain_loop(samples):
    n, a = samples.shape
    mean = np.zeros(a)
    for i in range(n):
        for j in range(a):
            mean[j] += samples[i, j]
    mean /= n
    sums = np.zeros((a, a))
    counts = np.zeros(a)
    for i in range(n):
        c = 0
        for j in range(1, a):
            if samples[i, j] > samples[i, c]:
                c = j
        counts[c] += 1.0
        for j in range(a):
            sums[c, j] += samples[i, j]
    gain = np.zeros(a)
    for c in range(a):
        if counts[c] > 0:
            for j in range(a):
                d = sums[c, j] / counts[c] - mean[j]
                gain[j] += counts[c] * d * d
    return gain / n


class_gain_loop = njit(_class_gain_loop)


def class_gain_numpy(samples):
    n, a = samples.shape
    mean = samples.mean(axis=0)
    cls = np.argmax(samples, axis=1)
    counts = np.bincount(cls, minlength=a).astype(float)
    sums = np.zeros((a, a))
    np.add.at(sums, cls, samples)
    used = counts > 0
    d = sums[used] / counts[used][:, None] - mean[None, :]
    return (counts[used][:, None] * d * d).sum(axis=0) / n


# ---------------------------------------------------------------------------
# finite-horizon backward induction


def _backup_loop(p, r, horizon):
    s, a, _ = p.shape
    q = np.zeros((horizon, s, a))
    v = np.zeros(s)
    for k in range(horizon - 1, -1, -1):
        for i in range(s):
            for j in range(a):
                acc = 0.0
                for t in range(s):
                    pr = p[i, j, t]
                    if pr != 0.0:
                        acc += pr * (r[i, j, t] + v[t])
                q[k, i, j] = acc
        for i in range(s):
            best = q[k, i, 0]
            for j in range(1, a):
                if q[k, i, j] > best:
                    best = q[k, i, j]
            v[i] = best
    return q


backup_loop = njit(_backup_loop)


def backup_numpy(p, r, horizon):
    s, a, _ = p.shape
    q = np.zeros((horizon, s, a))
    v = np.zeros(s)
    expected_r = (p * r).sum(axis=2)
    for k in range(horizon - 1, -1, -1):
        q[k] = expected_r + p @ v
        v = q[k].max(axis=1)
    return q


# ---------------------------------------------------------------------------
# dense layer over a stack of ensemble members


def _dense_forward_loop(x, w, b):
    # x (m, n, i), w (m, i, o), b (m, o)
    m = w.shape[0]
    out = np.empty((m, x.shape[1], w.shape[2]))
    for z in range(m):
        out[z] = np.dot(x[z], w[z]) + b[z]
    return out


dense_forward_loop = njit(_dense_forward_loop)


def dense_forward_numpy(x, w, b):
    return np.matmul(x, w) + b[:, None, :]


def _dense_backward_loop(x, w, g):
    # returns grad_x, grad_w, grad_b for out = x @ w + b
    m = w.shape[0]
    gx = np.empty(x.shape)
    gw = np.empty(w.shape)
    gb = np.empty((m, w.shape[2]))
    for z in range(m):
        gx[z] = np.dot(g[z], np.ascontiguousarray(w[z].T))
        gw[z] = np.dot(np.ascontiguousarray(x[z].T), g[z])
        gb[z] = g[z].sum(axis=0)
    return gx, gw, gb


dense_backward_loop = njit(_dense_backward_loop)


def dense_backward_numpy(x, w, g):
    gx = np.matmul(g, np.swapaxes(w, 1, 2))
    gw = np.matmul(np.swapaxes(x, 1, 2), g)
    gb = g.sum(axis=1)
    return gx, gw, gb


pair_grid = pick(pair_grid_loop, pair_grid_numpy)
class_gain = pick(class_gain_loop, class_gain_numpy)
backup = pick(backup_loop, backup_numpy)
dense_forward = pick(dense_forward_loop, dense_forward_numpy)
dense_backward = pick(dense_backward_loop, dense_backward_numpy)
