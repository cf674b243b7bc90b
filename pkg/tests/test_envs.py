import numpy as np
import pytest

from infoseek.core import ContractViolation, RandomSource, Transition, UniformAgent, episode_returns, run_loop
from infoseek.envs import (BernoulliBandit, DeepSea, InformativeBandit, InformativeChain, LinearGaussianBandit,
                           LogisticGVFBandit, ManyArmedBandit, NO_REVEAL, RewardChain, RingMDP, SparseLinearBandit,
                           bisection_blocks, make_env, optimal_value, per_step_shortfall)


def chain_oracle(tau, pos, action):
    """Next observation by the hand-written case table; 'pair' marks the (0, r) observation."""
    if pos == "pair":
        return tau if action == 0 else 1
    if 0 <= pos <= tau - 2:
        return pos + tau if action == 0 else pos + 1
    if pos == tau - 1:
        return "pair"
    if tau <= pos <= 2 * tau - 3:
        return pos + 1
    assert pos == 2 * tau - 2
    return 0


@pytest.mark.parametrize("tau", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("bit", [0, 1])
def test_reward_chain_matches_case_table(tau, bit):
    exits = np.linspace(0.1, 0.9, tau - 1)
    env = RewardChain(tau, exits, terminal_reward=bit)
    for pos in range(2 * tau - 1):
        for a in (0, 1):
            obs, r, (nxt, _) = env.step((pos, 0), a, None)
            want = chain_oracle(tau, pos, a)
            if want == "pair":
                assert obs == env.pair_token(bit) and nxt == 0
                assert r == bit
            else:
                assert obs == want and nxt == want
                assert r == (exits[pos] if pos <= tau - 2 and a == 0 else 0.0)
    # leaving the pair observation behaves like leaving state 0
    assert chain_oracle(tau, "pair", 0) == env.next_position(0, 0)
    assert chain_oracle(tau, "pair", 1) == env.next_position(0, 1)


def test_reward_chain_episode_length():
    env = RewardChain(5, [0.2] * 4, terminal_reward=0)
    trace = run_loop(UniformAgent(2), env, 50, 1)
    starts = [i for i, t in enumerate(trace) if t.terminal]
    assert starts == list(range(4, 50, 5))


def test_optimal_value_examples():
    assert optimal_value(BernoulliBandit([0.2, 0.7])) == 0.7
    assert optimal_value(RewardChain(4, [0.3, 0.3, 0.3], terminal_reward=1)) == pytest.approx(1.0)
    assert optimal_value(RewardChain(4, [0.3, 0.5, 0.3], terminal_reward=0)) == pytest.approx(0.5)


@pytest.mark.parametrize("n", [1, 3, 5, 8])
def test_deep_sea_optimal_value(n):
    env = DeepSea(n, seed=n)
    assert optimal_value(env) == pytest.approx(1 - n * 0.01 / n)
    # the DP agrees with the closed form and the always-right rollout attains it
    assert env.tabular_model().q_table()[0, 0].max() == pytest.approx(optimal_value(env), abs=1e-12)
    total, state = 0.0, (0, 0)
    while not env.is_terminal(state):
        row, col = state
        a = int(env.is_right(row, col, 1))
        _, r, state = env.step(state, a, None)
        total += r
    assert total == pytest.approx(optimal_value(env))


def test_per_step_shortfall_examples():
    env = BernoulliBandit([0.2, 0.7])
    trace = [Transition(0, 0, 0, 0.0, 0, True)] * 3
    assert per_step_shortfall(env, trace) == pytest.approx([0.5, 0.5, 0.5])
    trace = [Transition(0, 1, 1, 1.0, 0, True)] * 3
    assert np.all(per_step_shortfall(env, trace) == 0)
    chain = RewardChain(2, [0.6], terminal_reward=1)
    assert per_step_shortfall(chain, [Transition(0, 0, 2, 0.6, 2, False)])[0] == pytest.approx(0.4)


def test_shortfall_zero_for_optimal_deep_sea_episode():
    env = DeepSea(4, seed=3)

    # oracle: the per-cell action that moves right
    trace = []
    state = (0, 0)
    while not env.is_terminal(state):
        row, col = state
        a = int(env.is_right(row, col, 1))
        obs, r, nxt = env.step(state, a, None)
        trace.append(Transition(env.observe(state), a, obs, r, obs, env.is_terminal(nxt)))
        state = nxt
    assert np.allclose(per_step_shortfall(env, trace), 0.0)


def test_sparse_probes_observe_zero_or_half():
    env = SparseLinearBandit(16, rewarding=11)
    obs = env.action_matrix[16:] @ env.phi
    assert set(np.unique(obs)) <= {0.0, 0.5}
    assert env.num_actions == 16 + len(bisection_blocks(16))


@pytest.mark.parametrize("n", [4, 16, 64])
def test_bisection_identifies_rewarding_arm(n):
    for target in range(n):
        env = SparseLinearBandit(n, rewarding=target)
        lo, size, used = 0, n // 2, 0
        while size >= 2:
            a = n + env.blocks.index((lo, lo + size))
            obs, _, _ = env.step(0, a, None)
            used += 1
            if obs[0] == 0.0:
                lo += size
            size //= 2
        obs, _, _ = env.step(0, lo, None)
        used += 1
        found = lo if obs[0] == 1.0 else lo + 1
        assert found == target and used == int(np.log2(n))


def test_ring_rows_stochastic_and_reachability():
    env = RingMDP(5, 4, num_actions=3, seed=2)
    p = env.transition_matrix()
    assert np.allclose(p.sum(axis=2), 1.0)
    for s in range(env.num_states):
        phase, loc = divmod(s, env.M)
        reach = set(np.flatnonzero(p[s].sum(axis=0) > 0))
        if phase == env.tau - 1:
            assert reach == {0}
        else:
            assert reach <= {env.state_index((loc + 1) % 5, phase + 1), env.state_index((loc - 1) % 5, phase + 1)}


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_deep_sea_uniform_hitting_rate(n):
    env = DeepSea(n, seed=0)
    episodes = 4000 * 2 ** n // 4
    returns = episode_returns(run_loop(UniformAgent(2), env, episodes * n, n))
    hits = sum(r > 0.5 for r in returns)
    p = 2.0 ** -n
    sd = np.sqrt(episodes * p * (1 - p))
    assert abs(hits - episodes * p) < 4 * sd


def test_many_armed_means_seeded():
    a, b = ManyArmedBandit(50, seed=3), ManyArmedBandit(50, seed=3)
    assert np.array_equal(a.mean_rewards(), b.mean_rewards())
    assert not np.array_equal(a.mean_rewards(), ManyArmedBandit(50, seed=4).mean_rewards())
    assert np.all((a.mean_rewards() >= 0) & (a.mean_rewards() <= 1))


def test_linear_gaussian_observation(rng):
    env = LinearGaussianBandit([1.0, -2.0], [[1, 0], [0, 1]], noise_std=0.0)
    obs, r, _ = env.step(0, 1, rng)
    assert r == obs[0] == -2.0
    with pytest.raises(ContractViolation):
        LinearGaussianBandit([1.0, 0.0], [[2, 0]])


def test_logistic_bits_follow_sigmoid():
    env = LogisticGVFBandit.random(5, 3, 4, seed=1)
    rng = RandomSource(0)
    bits = np.array([env.step(0, 2, rng)[0] for _ in range(20000)])
    p = env.probabilities(2)
    assert np.all(np.abs(bits.mean(axis=0) - p) < 4 * np.sqrt(p * (1 - p) / 20000) + 1e-9)
    assert env.mean_rewards()[2] == pytest.approx(p[0])


def test_informative_bandit_reveal(rng):
    env = InformativeBandit(8, rewarding=5)
    obs, r, _ = env.step(0, 8, rng)
    assert r == 0.0 and obs[1] == 5
    obs, r, _ = env.step(0, 5, rng)
    assert r == 1.0 and obs[1] == NO_REVEAL
    assert env.reveals(0, 8) and not env.reveals(0, 3)


def test_informative_chain_structure():
    env = InformativeChain(5, rewarding=2)
    rewards = [env.step((s, 0), 0, None)[1] for s in range(4)]
    assert rewards == [0, 0, 1, 0]
    obs, r, _ = env.step((4, 0), 1, None)
    assert r == 0 and env.decode_reveal(obs) == 2
    assert env.reveals((4, 0), 0) and not env.reveals((3, 0), 1)
    assert optimal_value(env) == pytest.approx(env.tabular_model().q_table()[0, 0].max())


def test_make_env_from_flat_record():
    env = make_env({"name": "deep_sea", "size": 6, "seed": 2})
    assert isinstance(env, DeepSea) and env.size == 6
    assert np.array_equal(env.mask, DeepSea(6, seed=2).mask)
    assert isinstance(make_env({"name": "sparse_bandit", "size": 8}), SparseLinearBandit)
    env = make_env({"name": "reward_chain", "tau": 3, "exit_rewards": [0.1, 0.2], "terminal_reward": 1})
    assert optimal_value(env) == pytest.approx(1.0)
