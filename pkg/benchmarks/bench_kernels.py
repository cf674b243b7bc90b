"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py            # kernel micro-benchmarks
    python benchmarks/bench_kernels.py --e2e      # plus a short DeepSea run per path

Both implementations are importable in one process, so the micro-benchmarks
time them side by side and also check that they agree. The end-to-end timing
runs a subprocess per setting of INFOSEEK_DISABLE_JIT.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from infoseek import kernels as K


def _cases(rng):
    n_act = 8
    shortfall = rng.random(n_act)
    gain = rng.random(n_act)
    samples = rng.random((40, 16))
    p = rng.random((6, 2, 6))
    p /= p.sum(axis=2, keepdims=True)
    r = rng.random((6, 2, 6))
    x = rng.normal(size=(20, 128, 50))
    w = rng.normal(size=(20, 50, 50))
    b = rng.normal(size=(20, 50))
    g = rng.normal(size=(20, 128, 50))
    return {
        "pair_grid": (K.pair_grid_loop, K.pair_grid_numpy, (shortfall, gain, 0.0, 100)),
        "class_gain": (K.class_gain_loop, K.class_gain_numpy, (samples,)),
        "backup": (K.backup_loop, K.backup_numpy, (p, r, 10)),
        "dense_forward": (K.dense_forward_loop, K.dense_forward_numpy, (x, w, b)),
        "dense_backward": (K.dense_backward_loop, K.dense_backward_numpy, (x, w, g)),
    }


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(u, v) for u, v in zip(a, b))
    return bool(np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-9))


def micro(repeat: int = 5):
    rng = np.random.default_rng(0)
    print(f"{'kernel':16s} {'numba (us)':>12s} {'numpy (us)':>12s} {'speedup':>8s}  agree")
    for name, (jit, ref, args) in _cases(rng).items():
        jit(*args)  # compile outside the timing
        n = 200 if name != "dense_backward" else 20
        tj = min(timeit.repeat(lambda: jit(*args), number=n, repeat=repeat)) / n * 1e6
        tn = min(timeit.repeat(lambda: ref(*args), number=n, repeat=repeat)) / n * 1e6
        print(f"{name:16s} {tj:12.1f} {tn:12.1f} {tn / tj:8.2f}  {_agree(jit(*args), ref(*args))}")


E2E = """
import time
from infoseek.envs import DeepSea
from infoseek.agents import EnsembleQAgent
from infoseek.ids import PlannerConfig
from infoseek.harness.runner import run_learning
env = DeepSea(6, 0)
agent = EnsembleQAgent(env, PlannerConfig(kind="ids"))
run_learning(agent, env, 2, 0)  # warm caches and compilation
t = time.perf_counter()
run_learning(agent, env, 40, 0)
print(time.perf_counter() - t)
"""


def end_to_end():
    for flag in ("0", "1"):
        env = dict(os.environ, INFOSEEK_DISABLE_JIT=flag)
        out = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        label = "numba" if flag == "0" else "numpy"
        print(f"DeepSea(6), 40 IDS episodes, {label} path: {float(out.stdout.strip()):.2f} s")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--e2e", action="store_true", help="also time an end-to-end run per path")
    args = ap.parse_args()
    micro()
    if args.e2e:
        end_to_end()
