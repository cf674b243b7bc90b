import json
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from infoseek import _accel, kernels

floats01 = st.floats(0.0, 1.0, allow_nan=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 6).flatmap(lambda n: st.tuples(arrays(float, n, elements=floats01),
                                                       arrays(float, n, elements=floats01))),
       st.sampled_from([0.0, 1e-3]), st.sampled_from([4, 10, 100]))
def test_pair_grid_paths_agree(table, eps, n_grid):
    d, g = table
    a = kernels.pair_grid_loop(d, g, eps, n_grid)
    b = kernels.pair_grid_numpy(d, g, eps, n_grid)
    assert a[:3] == b[:3]
    assert a[3] == b[3] or np.isclose(a[3], b[3], rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_class_gain_paths_agree(n, a, seed):
    s = np.random.default_rng(seed).normal(size=(n, a))
    assert np.allclose(kernels.class_gain_loop(s), kernels.class_gain_numpy(s), rtol=1e-10, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 3), st.integers(1, 6), st.integers(0, 2 ** 31))
def test_backup_paths_agree(s, a, horizon, seed):
    r = np.random.default_rng(seed)
    p = r.random((s, a, s)) * (r.random((s, a, s)) < 0.6)
    p[..., 0] += 1e-3
    p /= p.sum(axis=2, keepdims=True)
    rew = r.normal(size=(s, a, s))
    assert np.allclose(kernels.backup_loop(p, rew, horizon), kernels.backup_numpy(p, rew, horizon), atol=1e-12)


@pytest.mark.parametrize("shape", [(1, 1, 1, 1), (3, 5, 4, 2), (7, 2, 6, 9)])
def test_dense_paths_agree(shape):
    m, n, i, o = shape
    r = np.random.default_rng(sum(shape))
    x, w, b, g = r.normal(size=(m, n, i)), r.normal(size=(m, i, o)), r.normal(size=(m, o)), r.normal(size=(m, n, o))
    assert np.allclose(kernels.dense_forward_loop(x, w, b), kernels.dense_forward_numpy(x, w, b), atol=1e-12)
    for u, v in zip(kernels.dense_backward_loop(x, w, g), kernels.dense_backward_numpy(x, w, g)):
        assert np.allclose(u, v, atol=1e-12)


def test_dispatch_follows_flag():
    want = kernels.pair_grid_loop if _accel.JIT_ENABLED else kernels.pair_grid_numpy
    assert kernels.pair_grid is want


_PROBE = """
import json, numpy as np
from infoseek import _accel, kernels
from infoseek.ids import ShortfallGainTable, two_sparse_minimize
t = ShortfallGainTable(np.array([0.3, 0.0, 0.25]), np.array([0.2, 0.05, 0.4]))
d = two_sparse_minimize(t)
s = np.random.default_rng(0).normal(size=(50, 4))
print(json.dumps({"jit": _accel.JIT_ENABLED, "numpy_path": kernels.class_gain is kernels.class_gain_numpy,
                  "dist": [d.action_a, d.action_b, d.prob_a], "gain": kernels.class_gain(s).tolist()}))
"""


def _probe(flag):
    env = dict(os.environ)
    env.pop("INFOSEEK_DISABLE_JIT", None)
    if flag is not None:
        env["INFOSEEK_DISABLE_JIT"] = flag
    out = subprocess.run([sys.executable, "-c", _PROBE], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_disable_flag_selects_numpy_fallback():
    off = _probe("1")
    assert off["jit"] is False and off["numpy_path"]
    on = _probe(None)
    assert on["jit"] is True and not on["numpy_path"]
    assert on["dist"] == off["dist"]
    assert np.allclose(on["gain"], off["gain"], rtol=1e-12)
