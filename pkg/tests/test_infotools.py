import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infoseek.core import RandomSource
from infoseek.exact_bayes import chain_information_ratios
from infoseek.infotools import (EmpiricalDistribution, RegretTrace, conditional_mutual_information,
                                empirical_info_ratio, entropy, gvf_information, kl_divergence, learning_time,
                                mutual_information, pinsker_holds, ratio_with_convention, satisficing_entropy_curve,
                                variance_lower_bound, write_curve_csv)


def random_joint(r, *shape):
    j = r.random(shape) * (r.random(shape) < 0.85)
    j.flat[0] += 1e-3
    return j / j.sum()


# --- entropy / MI / KL ------------------------------------------------------------------

def test_entropy_examples():
    assert entropy([0.25] * 4) == pytest.approx(2.0)
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.5)
    assert entropy([0.5, 0.5], base=np.e) == pytest.approx(np.log(2))


def test_mutual_information_examples():
    assert mutual_information(np.outer([0.3, 0.7], [0.2, 0.5, 0.3])) == pytest.approx(0.0, abs=1e-12)
    assert mutual_information([[0.5, 0.0], [0.0, 0.5]]) == pytest.approx(1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_mi_entropy_identity(seed):
    j = random_joint(np.random.default_rng(seed), 3, 3)
    want = entropy(j.sum(1)) + entropy(j.sum(0)) - entropy(j.ravel())
    mi = mutual_information(j)
    assert mi == pytest.approx(want, abs=1e-12)
    assert mi >= -1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_mi_is_expected_kl(seed):
    j = random_joint(np.random.default_rng(seed), 4, 3)
    px, py = j.sum(1), j.sum(0)
    want = sum(py[y] * float(kl_divergence(j[:, y] / py[y], px)) for y in range(3) if py[y] > 0)
    assert mutual_information(j, base=np.e) == pytest.approx(want, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_chain_rule(seed):
    j = random_joint(np.random.default_rng(seed), 2, 3, 2)
    whole = mutual_information(j.reshape(2, 6))
    parts = mutual_information(j.sum(2)) + conditional_mutual_information(j)
    assert whole == pytest.approx(parts, abs=1e-12)


def test_kl_examples():
    assert float(kl_divergence([0.3, 0.7], [0.3, 0.7])) == 0.0
    assert float(kl_divergence([0.0, 1.0], [0.5, 0.5])) == pytest.approx(np.log(2))
    a = float(kl_divergence([0.1, 0.9], [0.5, 0.5]))
    b = float(kl_divergence([0.5, 0.5], [0.1, 0.9]))
    assert a == pytest.approx(0.9 * np.log(1.8) + 0.1 * np.log(0.2))
    assert a != pytest.approx(b)
    bad = kl_divergence([0.5, 0.5], [1.0, 0.0])
    assert bad.value == np.inf and bad.support_violation


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_pinsker(seed):
    r = np.random.default_rng(seed)
    p, q = r.dirichlet(np.ones(5)), r.dirichlet(np.ones(5))
    assert float(kl_divergence(p, q)) >= 0
    assert pinsker_holds(p, q, values=np.linspace(0, 1, 5))


def test_empirical_distribution():
    d = EmpiricalDistribution.from_samples(["a", "b", "a", "a"])
    assert d.total == 4
    assert sorted(d.probabilities.tolist()) == [0.25, 0.75]
    assert d.entropy() == pytest.approx(entropy([0.25, 0.75]))


# --- the variance lower bound ---------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_gvf_information_bound_small_instances(seed):
    r = np.random.default_rng(seed)
    worlds, actions, comps = 4, 3, 2
    pw = r.dirichlet(np.ones(worlds))
    target = r.integers(0, 2, worlds)
    gvf = r.integers(0, 3, (worlds, actions, comps)) / 2.0
    nu = r.dirichlet(np.ones(actions))
    mi, var = gvf_information(pw, target, gvf, nu)
    assert mi + 1e-12 >= variance_lower_bound(var, comps, 1.0)


def test_gvf_information_exact_example():
    # the action reveals the target perfectly: I = H(target)
    mi, var = gvf_information([0.5, 0.5], [0, 1], np.array([[[0.0]], [[1.0]]]), [1.0])
    assert mi == pytest.approx(np.log(2))
    assert var == pytest.approx(0.25)


# --- information ratios ------------------------------------------------------------------

def test_ratio_convention():
    assert ratio_with_convention([0.0, 1.0, 1.0], [0.0, 0.0, 2.0]).tolist() == [0.0, np.inf, 0.5]


def test_known_environment_ratios_are_zero():
    est = empirical_info_ratio(np.zeros(5), np.zeros(5), np.zeros(5), tau=3)
    assert np.all(est.ratio == 0) and not est.undefined.any()


def test_negative_gain_is_flagged():
    est = empirical_info_ratio([0.1, 0.1], [1.0, 0.5], [0.5, 0.7], tau=1)
    assert np.isnan(est.ratio[1]) and est.undefined.tolist() == [False, True]
    assert np.all(est.denominator[~est.undefined] >= 0)


def test_two_state_chain_ratio_below_quarter_tau():
    for exits in ([0.3], [0.5], [0.8]):
        rows = chain_information_ratios(exits)
        info = np.array([r["information"] for r in rows])
        est = empirical_info_ratio([r["expected_shortfall"] for r in rows], np.ones_like(info), 1 - info, tau=2)
        assert np.all(est.ratio <= 2 / 8 + 1e-12)


def test_thompson_two_arm_ratio_at_most_one():
    """Monte Carlo estimate of the first-step ratio of TS on a uniform two-arm problem."""
    n = 200_000
    r = np.random.default_rng(7)
    theta = r.random((n, 2))
    best = theta.argmax(1)
    sampled = r.random((n, 2)).argmax(1)  # an independent posterior draw
    y = (r.random(n) < theta[np.arange(n), sampled]).astype(int)
    shortfall = (theta.max(1) - theta[np.arange(n), sampled]).mean()
    joint = np.zeros((2, 4))
    np.add.at(joint, (best, 2 * sampled + y), 1.0)
    gain = mutual_information(joint / n, base=np.e)
    est = empirical_info_ratio([shortfall], [gain], [0.0], tau=1)
    # closed form: (1/6)² / (ln 2 − H(2/3)) ≈ 0.49
    exact = (1 / 6) ** 2 / (np.log(2) - entropy([2 / 3, 1 / 3], base=np.e))
    assert est.ratio[0] == pytest.approx(exact, rel=0.1)
    assert est.ratio[0] <= 1.0


# --- satisficing -----------------------------------------------------------------------------

def test_satisficing_curve():
    curve = satisficing_entropy_curve(4, [0.0, 0.05, 0.2, 0.5, 1.0], 50_000, RandomSource(0), base=2)
    hs = [h for _, h, _ in curve]
    assert hs[0] == pytest.approx(2.0, abs=0.01)
    assert hs[-1] == 0.0
    assert all(a >= b - 1e-12 for a, b in zip(hs, hs[1:]))
    assert curve[-1][2] == 1.0


# --- learning time and traces ------------------------------------------------------------

def test_learning_time_examples():
    assert learning_time([False] * 200) == 0
    assert learning_time([True] * 300) is None
    flips = [True] * 50 + [False] * 300
    t = learning_time(flips)
    # the trailing window needs about 10% optimal episodes before it crosses
    assert 50 <= t <= 50 + 10


def test_learning_time_window_boundary():
    assert learning_time([True] * 9 + [False], threshold=0.9, window=10) is None
    assert learning_time([True] * 8 + [False, False], threshold=0.9, window=10) == 8


def test_regret_trace_csv(tmp_path):
    tr = RegretTrace(np.array([0.5, 0.0, 0.25]), np.zeros(3), np.array([0, 0, 1]))
    assert np.all(np.diff(tr.cumulative_regret) >= 0)
    tr.write_csv(tmp_path / "t.csv")
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [float(r["cumulative_regret"]) for r in rows] == [0.5, 0.5, 0.75]
    assert rows[0].keys() == {"t", "shortfall", "gain", "ratio", "cumulative_regret"}
    write_curve_csv(tmp_path / "c.csv", "eps", "H", [(0.1, 2.0)])
    assert open(tmp_path / "c.csv").read() == "eps,H\n0.1,2.0\n"
