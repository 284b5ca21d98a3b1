"""History-level policies.

Every policy here follows the same small protocol used by the simulator:
``reset()`` at the start of an episode, ``action_probs()`` for the current
history and ``observe(symbol)`` after each step.
"""
import numpy as np

from . import wfa as _wfa
from ._validation import as_symbol, check_probability


class UniformPolicy:
    def __init__(self, num_actions):
        self.num_actions = int(num_actions)

    def reset(self):
        pass

    def observe(self, symbol):
        pass

    def action_probs(self):
        return np.full(self.num_actions, 1.0 / self.num_actions)

    def describe(self):
        return {"kind": "uniform", "num_actions": self.num_actions}


class GreedyPolicy:
    """Acts greedily on the unnormalised action values of a UQF automaton.

    ``sampling`` is the policy that generated the training data; its
    probabilities at the current history divide the raw scores.  The forward
    vector is rescaled after every step (argmax is invariant to positive
    scaling); ``log_scale`` keeps the discarded factor.
    """

    def __init__(self, uqf, sampling=None):
        self.uqf = uqf
        self.sampling = sampling if sampling is not None else UniformPolicy(uqf.num_actions)
        self.num_actions = uqf.num_actions
        self.reset()

    def reset(self):
        self.state = _wfa.initial_state(self.uqf)
        self.log_scale = 0.0
        self.sampling.reset()

    def scores(self):
        return _wfa.action_scores(self.uqf, self.state, self.sampling.action_probs())

    def greedy_action(self):
        return int(np.argmax(self.scores()))

    def action_probs(self):
        p = np.zeros(self.num_actions)
        p[self.greedy_action()] = 1.0
        return p

    def observe(self, symbol):
        symbol = as_symbol(symbol, self.uqf.num_actions, self.uqf.num_obs)
        state = _wfa.step(self.state, self.uqf, symbol)
        scale = float(np.max(np.abs(state.vector)))
        if scale > 0 and np.isfinite(scale):
            state = _wfa.ForwardState(state.vector / scale, state.history_len)
            self.log_scale += np.log(scale)
        self.state = state
        self.sampling.observe(symbol)

    def describe(self):
        return {
            "kind": "greedy",
            "uqf": self.uqf.to_dict(),
            "sampling": self.sampling.describe(),
        }


class EpsilonGreedyPolicy:
    """``Pi(a | h) = (1 - eps) [a = greedy(h)] + eps / |A|``."""

    def __init__(self, base: GreedyPolicy, epsilon: float):
        self.base = base
        self.epsilon = check_probability("epsilon", epsilon)
        self.num_actions = base.num_actions

    def reset(self):
        self.base.reset()

    def observe(self, symbol):
        self.base.observe(symbol)

    def action_probs(self):
        p = np.full(self.num_actions, self.epsilon / self.num_actions)
        if self.epsilon < 1.0:
            p[self.base.greedy_action()] += 1.0 - self.epsilon
        return p

    def describe(self):
        return {"kind": "epsilon_greedy", "epsilon": self.epsilon, "base": self.base.describe()}


def epsilon_greedy(base: GreedyPolicy, epsilon: float) -> EpsilonGreedyPolicy:
    return EpsilonGreedyPolicy(base, epsilon)


def greedy_action(policy: GreedyPolicy) -> int:
    return policy.greedy_action()


def act_and_observe(policy: GreedyPolicy, symbol) -> GreedyPolicy:
    policy.observe(symbol)
    return policy


def replay(policy, word):
    """Reset ``policy`` and feed it ``word``."""
    policy.reset()
    for s in word:
        policy.observe(s)
    return policy


def policy_from_description(d):
    """Rebuild a policy from the output of ``describe()``."""
    kind = d.get("kind")
    if kind == "uniform":
        return UniformPolicy(d["num_actions"])
    if kind == "greedy":
        return GreedyPolicy(_wfa.Wfa.from_dict(d["uqf"]), policy_from_description(d["sampling"]))
    if kind == "epsilon_greedy":
        return EpsilonGreedyPolicy(policy_from_description(d["base"]), d["epsilon"])
    raise ValueError(f"unknown policy kind {kind!r}")
