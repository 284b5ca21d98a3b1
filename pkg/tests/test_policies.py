import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import uqf.wfa as wfa_mod
from conftest import make_chain
from uqf.exceptions import ZeroSamplingProbability
from uqf.pomdp import exact_wfa, rollout, StatePolicy
from uqf.policies import (
    EpsilonGreedyPolicy,
    GreedyPolicy,
    UniformPolicy,
    act_and_observe,
    epsilon_greedy,
    greedy_action,
    policy_from_description,
    replay,
)
from uqf.wfa import Wfa, to_uqf


@pytest.fixture
def chain_uqf(chain, uniform_chain_policy):
    return to_uqf(exact_wfa(chain, uniform_chain_policy), 0.5)


def _random_uqf(seed, n=3, nA=3, nO=2):
    rng = np.random.default_rng(seed)
    return Wfa(rng.normal(size=n), rng.normal(scale=0.4, size=(nA * nO, n, n)), rng.normal(size=n), nA, nO)


def _random_word(rng, nA, nO, length):
    return [(int(rng.integers(nA)), int(rng.integers(nO))) for _ in range(length)]


class _Fixed:
    """History policy with fixed probabilities, for divisor tests."""

    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)
        self.num_actions = len(self.probs)

    def reset(self):
        pass

    def observe(self, symbol):
        pass

    def action_probs(self):
        return self.probs


# -- greedy ----------------------------------------------------------------------


def test_chain_greedy_at_start(chain_uqf):
    assert greedy_action(GreedyPolicy(chain_uqf)) == 1


def test_zero_transitions_tie_to_action_zero():
    uqf = Wfa(np.ones(2), np.zeros((4, 2, 2)), np.ones(2), 2, 2)
    assert greedy_action(GreedyPolicy(uqf)) == 0


def test_constant_divisor_does_not_change_argmax():
    uqf = _random_uqf(0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        word = _random_word(rng, 3, 2, 4)
        a = replay(GreedyPolicy(uqf, UniformPolicy(3)), word).greedy_action()
        b = replay(GreedyPolicy(uqf, _Fixed([1.0, 1.0, 1.0])), word).greedy_action()
        assert a == b


def test_greedy_does_not_advance_state(chain_uqf):
    p = GreedyPolicy(chain_uqf)
    before = p.state.vector.copy()
    p.greedy_action()
    p.greedy_action()
    np.testing.assert_array_equal(p.state.vector, before)
    assert p.state.history_len == 0


def test_fresh_policy_acts_on_alpha(chain_uqf):
    p = GreedyPolicy(chain_uqf)
    np.testing.assert_array_equal(p.state.vector, chain_uqf.alpha)


def test_zero_divisor_raises(chain_uqf):
    with pytest.raises(ZeroSamplingProbability):
        GreedyPolicy(chain_uqf, _Fixed([1.0, 0.0])).greedy_action()


def test_incremental_equals_batch_on_random_trajectories():
    rng = np.random.default_rng(1)
    for i in range(500):
        uqf = _random_uqf(i % 7)
        word = _random_word(rng, 3, 2, int(rng.integers(0, 12)))
        online = GreedyPolicy(uqf)
        decisions = []
        for s in word:
            decisions.append(online.greedy_action())
            act_and_observe(online, s)
        decisions.append(online.greedy_action())
        for t in range(len(word) + 1):
            fresh = replay(GreedyPolicy(uqf), word[:t])
            assert fresh.greedy_action() == decisions[t]


def test_renormalised_state_keeps_scale(chain_uqf):
    p = replay(GreedyPolicy(chain_uqf), [(1, 0), (0, 0), (1, 0)])
    raw = chain_uqf.alpha
    for s in [(1, 0), (0, 0), (1, 0)]:
        raw = raw @ chain_uqf.matrix(s)
    np.testing.assert_allclose(p.state.vector * np.exp(p.log_scale), raw)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3), st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1)), max_size=6))
def test_positive_omega_scaling_keeps_argmax(seed, c, word):
    uqf = _random_uqf(seed)
    scaled = uqf.replace(omega=c * uqf.omega)
    a = replay(GreedyPolicy(uqf), word).scores()
    b = replay(GreedyPolicy(scaled), word).scores()
    # skip near-ties, where rounding may flip the argmax
    top = np.sort(a)[-2:]
    if top[1] - top[0] > 1e-9 * max(1.0, abs(top[1])):
        assert np.argmax(a) == np.argmax(b)


def test_step_count_is_one_per_symbol(monkeypatch, chain_uqf):
    calls = []
    real = wfa_mod.step

    def spy(state, wfa, symbol):
        calls.append(state.history_len)
        return real(state, wfa, symbol)

    monkeypatch.setattr(wfa_mod, "step", spy)
    rollout(make_chain(), GreedyPolicy(chain_uqf), 100, seed=0)
    assert len(calls) == 100
    # each call advances from the previous state; nothing is replayed
    assert calls == list(range(100))


# -- epsilon greedy ------------------------------------------------------------------


def test_epsilon_formula():
    base = GreedyPolicy(_random_uqf(2, nA=4))
    g = base.greedy_action()
    p = epsilon_greedy(base, 0.2).action_probs()
    assert p[g] == pytest.approx(0.85)
    assert np.allclose(np.delete(p, g), 0.05)


def test_epsilon_one_is_uniform_and_skips_scores(monkeypatch):
    base = GreedyPolicy(_random_uqf(3))
    monkeypatch.setattr(wfa_mod, "action_scores", lambda *a, **k: pytest.fail("scores computed"))
    np.testing.assert_allclose(epsilon_greedy(base, 1.0).action_probs(), 1 / 3)


def test_epsilon_zero_is_deterministic():
    base = GreedyPolicy(_random_uqf(4))
    p = epsilon_greedy(base, 0.0).action_probs()
    assert p[base.greedy_action()] == 1.0 and p.sum() == 1.0


def test_epsilon_range_checked():
    with pytest.raises(ValueError):
        EpsilonGreedyPolicy(GreedyPolicy(_random_uqf(0)), 1.5)


def test_epsilon_one_frequencies_uniform():
    from uqf.pomdp import _Sampler

    base = GreedyPolicy(_random_uqf(5))
    pol = epsilon_greedy(base, 1.0)
    rng = np.random.default_rng(0)
    cdf = np.cumsum(pol.action_probs())
    draws = np.array([_Sampler.draw(cdf, u) for u in rng.random(100_000)])
    counts = np.bincount(draws, minlength=3)
    sigma = np.sqrt(100_000 * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - 100_000 / 3) < 3 * sigma + 1)


def test_probabilities_sum_to_one_along_history():
    base = GreedyPolicy(_random_uqf(6))
    pol = epsilon_greedy(base, 0.3)
    rng = np.random.default_rng(2)
    pol.reset()
    for s in _random_word(rng, 3, 2, 20):
        assert pol.action_probs().sum() == pytest.approx(1.0)
        pol.observe(s)


def test_divisor_receives_epsilon_greedy_probabilities(monkeypatch):
    """The learned policy divides by exactly the closed-form sampling probabilities."""
    sampler_base = GreedyPolicy(_random_uqf(7))
    sampler = epsilon_greedy(sampler_base, 0.25)
    learned = GreedyPolicy(_random_uqf(8), sampler)
    seen = []
    real = wfa_mod.action_scores

    def spy(uqf, state, probs):
        if uqf is learned.uqf:
            seen.append(np.array(probs))
        return real(uqf, state, probs)

    monkeypatch.setattr(wfa_mod, "action_scores", spy)
    rng = np.random.default_rng(3)
    learned.reset()
    for s in _random_word(rng, 3, 2, 5):
        learned.greedy_action()
        g = sampler_base.greedy_action()
        expected = np.full(3, 0.25 / 3)
        expected[g] += 0.75
        np.testing.assert_allclose(seen[-1], expected)
        learned.observe(s)


def test_describe_roundtrip():
    base = GreedyPolicy(_random_uqf(9))
    pol = GreedyPolicy(_random_uqf(10), epsilon_greedy(base, 0.5))
    back = policy_from_description(pol.describe())
    rng = np.random.default_rng(4)
    word = _random_word(rng, 3, 2, 6)
    np.testing.assert_allclose(replay(back, word).scores(), replay(pol, word).scores())
    with pytest.raises(ValueError):
        policy_from_description({"kind": "mystery"})
