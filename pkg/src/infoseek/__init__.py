"""Information-seeking exploration agents and the tools to evaluate them.

Modules:

* ``core``: agent/environment protocol, seeded random streams, traces.
* ``envs``: bandits and episodic MDPs (DeepSea, chains, ring).
* ``exact_bayes``: conjugate posteriors and exact-belief agents.
* ``enn``: ensemble networks with additive priors, losses and optimizers.
* ``ids``: shortfall/gain tables, the two-sparse ratio minimizer, planners.
* ``infotools``: entropy, mutual information, KL and run statistics.
* ``agents``: neural agents combining ``enn`` with the planners.
* ``harness``: configs, sweeps, plots and the ``infoseek`` CLI.
"""
from ._accel import JIT_ENABLED

__version__ = "0.1.0"

__all__ = ["JIT_ENABLED", "__version__"]
