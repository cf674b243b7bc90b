"""Single-run driver: simulate, record shortfalls and learning time."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..core import as_random_source, run_episodes
from ..infotools import LEARNING_WINDOW, RegretTrace, learning_time


@dataclass
class RunRecord:
    trace: RegretTrace
    suboptimal: np.ndarray  # one flag per completed episode
    learning_time: int | None
    steps: int
    reveals: int = 0  # steps that emitted a reveal observation


class _Recorder:
    def __init__(self, env, agent, threshold, window):
        self.env, self.agent = env, agent
        self.phase = 0
        self.shortfall, self.reward, self.episode, self.gain, self.ratio = [], [], [], [], []
        self.ep_short = 0.0
        self.flags = []
        self.recent = deque(maxlen=window)
        self.threshold = threshold
        self.learned_at = None
        self.reveals = 0
        self._reveals = getattr(env, "reveals", None)

    def __call__(self, t, state, tr):
        q = self.env.q_values(tr.state, self.phase)
        d = float(q.max() - q[tr.action])
        self.shortfall.append(d)
        self.reward.append(tr.reward)
        self.episode.append(len(self.flags))
        dec = getattr(self.agent, "last_decision", None)
        if dec is not None:
            self.gain.append(float(dec.table.gain[tr.action]))
            self.ratio.append(float(dec.ratio))
            self.agent.last_decision = None
        else:
            self.gain.append(np.nan)
            self.ratio.append(np.nan)
        self.ep_short += d
        if self._reveals is not None and self._reveals(tr.state, tr.action):
            self.reveals += 1
        self.phase += 1
        if tr.terminal:
            bad = self.ep_short > 1e-9
            self.flags.append(bad)
            self.recent.append(bad)
            if self.learned_at is None and sum(self.recent) / len(self.recent) < self.threshold:
                self.learned_at = len(self.flags) - 1
            self.ep_short, self.phase = 0.0, 0


def run_learning(agent, env, num_episodes: int, seed, stop_on_learning: bool = False,
                 threshold: float = 0.9, window: int = LEARNING_WINDOW, max_steps=None) -> RunRecord:
    """Run ``agent`` on ``env`` for up to ``num_episodes`` episodes.

    An episode is suboptimal when its summed per-step shortfall is positive.
    With ``stop_on_learning`` the run ends at the learning-time episode.
    """
    rng = as_random_source(seed)
    rec = _Recorder(env, agent, threshold, window)
    stop = (lambda returns: rec.learned_at is not None) if stop_on_learning else None
    run_episodes(agent, env, num_episodes, rng, stop=stop, callback=rec, max_steps=max_steps)
    flags = np.array(rec.flags, dtype=bool)
    trace = RegretTrace(np.array(rec.shortfall), np.array(rec.reward), np.array(rec.episode),
                        agent=type(agent).__name__, env=type(env).__name__,
                        seed=int(seed) if isinstance(seed, (int, np.integer)) else 0,
                        gain=np.array(rec.gain), ratio=np.array(rec.ratio), optimal_episodes=~flags)
    lt = learning_time(flags, threshold, window)
    return RunRecord(trace, flags, lt, len(rec.shortfall), rec.reveals)
