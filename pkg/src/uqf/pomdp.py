"""Ground-truth POMDP models, simulation, belief filtering and exact oracles.

Conventions
-----------
* ``T[s, a, s']`` is the probability of moving from ``s`` to ``s'`` under ``a``.
* ``Z[s', a, o]`` is the probability of observing ``o`` after arriving in
  ``s'`` by executing ``a`` (arrived-state conditioning).
* ``R[s, a]`` is the reward for executing ``a`` in ``s``.

The brute-force oracles below enumerate hidden-state paths explicitly and
never touch the automaton code in :mod:`uqf.wfa`; they exist to check it.
"""
import itertools
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional

import numpy as np

from ._validation import Symbol, as_word, check_policy_matrix, stochastic_rows_report
from .exceptions import EnumerationLimitError, InvalidModelError, ZeroSamplingProbability

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True, eq=False)
class Pomdp:
    """A discrete POMDP ``<T, Z, R, mu, gamma>``.

    Only shapes are checked on construction so that malformed models can
    still be inspected with :func:`validate`.
    """

    T: np.ndarray
    Z: np.ndarray
    R: np.ndarray
    mu: np.ndarray
    gamma: float = 0.9

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        Z = np.asarray(self.Z, dtype=float)
        R = np.asarray(self.R, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        if T.ndim != 3 or T.shape[0] != T.shape[2]:
            raise InvalidModelError(f"T must have shape (k, A, k), got {T.shape}")
        k, nA = T.shape[:2]
        if Z.ndim != 3 or Z.shape[:2] != (k, nA):
            raise InvalidModelError(f"Z must have shape ({k}, {nA}, O), got {Z.shape}")
        if R.shape != (k, nA):
            raise InvalidModelError(f"R must have shape ({k}, {nA}), got {R.shape}")
        if mu.shape != (k,):
            raise InvalidModelError(f"mu must have shape ({k},), got {mu.shape}")
        for name, arr in (("T", T), ("Z", Z), ("R", R), ("mu", mu)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def num_states(self) -> int:
        return self.T.shape[0]

    @property
    def num_actions(self) -> int:
        return self.T.shape[1]

    @property
    def num_obs(self) -> int:
        return self.Z.shape[2]

    @property
    def num_symbols(self) -> int:
        return self.num_actions * self.num_obs

    def to_dict(self):
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "num_obs": self.num_obs,
            "T": self.T.tolist(),
            "Z": self.Z.tolist(),
            "R": self.R.tolist(),
            "mu": self.mu.tolist(),
            "gamma": self.gamma,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            model = cls(T=d["T"], Z=d["Z"], R=d["R"], mu=d["mu"], gamma=d["gamma"])
            sizes = (d["num_states"], d["num_actions"], d["num_obs"])
        except KeyError as exc:
            raise InvalidModelError(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise InvalidModelError(str(exc)) from None
        if tuple(sizes) != (model.num_states, model.num_actions, model.num_obs):
            raise InvalidModelError(
                f"declared sizes {tuple(sizes)} disagree with array shapes "
                f"{(model.num_states, model.num_actions, model.num_obs)}"
            )
        return model

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def replace(self, **changes):
        d = dict(T=self.T, Z=self.Z, R=self.R, mu=self.mu, gamma=self.gamma)
        d.update(changes)
        return Pomdp(**d)


@dataclass(frozen=True, eq=False)
class StatePolicy:
    """State-level stochastic policy, ``pi[s, a] = P(a | s)``."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 2:
            raise InvalidModelError(f"policy must be a matrix, got shape {pi.shape}")
        problems = stochastic_rows_report("pi", pi)
        if problems:
            raise InvalidModelError("; ".join(problems))
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @classmethod
    def uniform(cls, num_states, num_actions):
        return cls(np.full((num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def deterministic(cls, actions, num_actions):
        actions = np.asarray(actions, dtype=int)
        pi = np.zeros((actions.size, num_actions))
        pi[np.arange(actions.size), actions] = 1.0
        return cls(pi)


def _policy_matrix(model, policy):
    pi = policy.pi if isinstance(policy, StatePolicy) else policy
    return check_policy_matrix(pi, model.num_states, model.num_actions)


@dataclass(frozen=True)
class Step:
    action: int
    observation: int
    reward: float
    state: int = -1  # hidden state after the step; -1 when unknown

    @property
    def symbol(self):
        return Symbol(self.action, self.observation)


@dataclass(frozen=True)
class Episode:
    steps: tuple
    seed: int = 0
    initial_state: int = -1

    def __len__(self):
        return len(self.steps)

    @property
    def symbols(self):
        return tuple(s.symbol for s in self.steps)

    @property
    def rewards(self):
        return [s.reward for s in self.steps]

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "steps": [[s.action, s.observation, s.reward] for s in self.steps],
        }

    @classmethod
    def from_dict(cls, d):
        steps = tuple(Step(int(a), int(o), float(r)) for a, o, r in d["steps"])
        return cls(steps=steps, seed=int(d.get("seed", 0)))


def dump_episodes(episodes, fp):
    for ep in episodes:
        fp.write(json.dumps(ep.to_dict()))
        fp.write("\n")


def load_episodes(fp):
    return [Episode.from_dict(json.loads(line)) for line in fp if line.strip()]


def validate(model: Pomdp) -> List[str]:
    """Return a list of invariant violations; empty iff ``model`` is valid."""
    report = []
    report += stochastic_rows_report("T", model.T)
    report += stochastic_rows_report("Z", model.Z)
    report += stochastic_rows_report("mu", model.mu)
    if not np.all(np.isfinite(model.R)):
        report.append("R contains non-finite entries")
    if not 0.0 <= model.gamma < 1.0:
        report.append(f"gamma is {model.gamma}, must lie in [0, 1)")
    return report


def check_model(model: Pomdp) -> Pomdp:
    report = validate(model)
    if report:
        raise InvalidModelError("invalid model: " + "; ".join(report))
    return model


# -- simulation --------------------------------------------------------------


class _Sampler:
    """Cumulative tables for inverse-CDF draws from a model."""

    def __init__(self, model):
        self.model = model
        self.mu_cdf = np.cumsum(model.mu)
        self.T_cdf = np.cumsum(model.T, axis=2)
        self.Z_cdf = np.cumsum(model.Z, axis=2)
        self.R = model.R

    @staticmethod
    def draw(cdf, u):
        i = int(np.searchsorted(cdf, u, side="right"))
        return min(i, len(cdf) - 1)


def episode_seeds(seed, count):
    """Per-episode integer seeds derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def rollout(model, policy, length, seed, sampler=None, stop_when_absorbed=False):
    """Simulate one episode of at most ``length`` steps.

    ``policy`` is a :class:`StatePolicy` (acts on the hidden state) or any
    object with ``reset()``, ``action_probs()`` and ``observe(symbol)``
    (acts on the observable history).
    """
    sampler = sampler or _Sampler(model)
    rng = np.random.default_rng(seed)
    state_level = isinstance(policy, StatePolicy)
    if state_level:
        pi_cdf = np.cumsum(policy.pi, axis=1)
    else:
        policy.reset()
    absorbed = _absorbing_zero_states(model) if stop_when_absorbed else None
    s = sampler.draw(sampler.mu_cdf, rng.random())
    s0 = s
    steps = []
    for _ in range(length):
        if absorbed is not None and absorbed[s]:
            break
        if state_level:
            a = sampler.draw(pi_cdf[s], rng.random())
        else:
            a = sampler.draw(np.cumsum(policy.action_probs()), rng.random())
        r = float(sampler.R[s, a])
        s2 = sampler.draw(sampler.T_cdf[s, a], rng.random())
        o = sampler.draw(sampler.Z_cdf[s2, a], rng.random())
        steps.append(Step(a, o, r, s2))
        if not state_level:
            policy.observe(Symbol(a, o))
        s = s2
    return Episode(steps=tuple(steps), seed=seed, initial_state=s0)


def _absorbing_zero_states(model):
    """States that are absorbing under every action and pay nothing."""
    k = model.num_states
    idx = np.arange(k)
    stay = np.all(model.T[idx, :, idx] == 1.0, axis=1)
    return stay & np.all(model.R == 0.0, axis=1)


def sample_episodes(model, policy, count, length, seed) -> List[Episode]:
    """Sample ``count`` episodes of exactly ``length`` steps.

    Each episode gets its own seed derived from ``seed``, so episodes can be
    regenerated individually.
    """
    check_model(model)
    if length < 1:
        raise ValueError("length must be >= 1")
    if isinstance(policy, (StatePolicy, np.ndarray)):
        policy = StatePolicy(_policy_matrix(model, policy))
    sampler = _Sampler(model)
    return [rollout(model, policy, length, s, sampler) for s in episode_seeds(seed, count)]


# -- exact quantities --------------------------------------------------------


def belief_forward(model, policy, history):
    """Joint vector ``[P(S_{n+1} = s, history)]_s`` by forward recursion.

    Returns ``mu`` for the empty history.  Normalise the result to obtain
    the conditional belief ``P(s | history)``.
    """
    pi = _policy_matrix(model, policy)
    b = model.mu.copy()
    for a, o in as_word(history, model.num_actions, model.num_obs):
        b = ((b * pi[:, a]) @ model.T[:, a, :]) * model.Z[:, a, o]
    return b


def exact_wfa(model, policy):
    """Automaton realising ``g(h) = E[R(S, A) | h] * P(h)`` for ``policy``.

    ``B_ao = diag(pi[:, a]) T[:, a, :] diag(Z[:, a, o])``, initial vector
    ``mu`` and terminal vector ``tau[s] = sum_a pi[s, a] R[s, a]``.
    """
    from .wfa import Wfa

    pi = _policy_matrix(model, policy)
    nA, nO = model.num_actions, model.num_obs
    mats = np.empty((nA * nO, model.num_states, model.num_states))
    for a in range(nA):
        for o in range(nO):
            mats[a * nO + o] = pi[:, a, None] * model.T[:, a, :] * model.Z[None, :, a, o]
    tau = np.einsum("sa,sa->s", pi, model.R)
    return Wfa(alpha=model.mu, transitions=mats, omega=tau, num_actions=nA, num_obs=nO)


def probability_wfa(model, policy):
    """Automaton ``<mu, {B_ao}, 1>`` computing ``P(h)`` under ``policy``."""
    b = exact_wfa(model, policy)
    return b.replace(omega=np.ones(model.num_states))


@lru_cache(maxsize=32)
def _state_paths(k, n):
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.intp).reshape(-1, n)


def _enumerated_joint(model, pi, history):
    """``P(S_{n+1} = s, history)`` by summing over every hidden-state path."""
    k = model.num_states
    n = len(history)
    if k ** (n + 1) > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"{k}^{n + 1} state paths exceed the limit of {ENUMERATION_LIMIT}"
        )
    paths = _state_paths(k, n + 1)
    weight = model.mu[paths[:, 0]]
    for t, (a, o) in enumerate(history):
        s, s_next = paths[:, t], paths[:, t + 1]
        weight = weight * pi[s, a] * model.T[s, a, s_next] * model.Z[s_next, a, o]
    return np.bincount(paths[:, n], weights=weight, minlength=k)


def oracle_prob(model, policy, history):
    """Brute-force ``P(history)`` under a state-level policy."""
    pi = _policy_matrix(model, policy)
    word = as_word(history, model.num_actions, model.num_obs)
    return float(_enumerated_joint(model, pi, word).sum())


def oracle_g(model, policy, history):
    """Brute-force ``E[R(S, A) | history] * P(history)``."""
    pi = _policy_matrix(model, policy)
    word = as_word(history, model.num_actions, model.num_obs)
    joint = _enumerated_joint(model, pi, word)
    return float(joint @ np.einsum("sa,sa->s", pi, model.R))


def oracle_v_tilde(model, policy, history, gamma, horizon, method="auto"):
    """Truncated ``sum_{|z| <= horizon} gamma^|z| g(history z)``.

    The neglected tail is bounded by
    ``gamma^(horizon+1) * max|R| * P(history) / (1 - gamma)``.

    ``method="enumerate"`` sums :func:`oracle_g` over every suffix word.
    ``method="marginal"`` sums over suffixes of each length at once by
    pushing the enumerated joint through the policy-induced state chain
    (observations marginalise out because emission rows sum to one).
    ``"auto"`` enumerates when that stays under the path limit.
    """
    pi = _policy_matrix(model, policy)
    word = as_word(history, model.num_actions, model.num_obs)
    nS = model.num_symbols
    k = model.num_states
    if method == "auto":
        cost = sum(nS**t * k ** (len(word) + t + 1) for t in range(horizon + 1))
        method = "enumerate" if cost <= ENUMERATION_LIMIT else "marginal"
    if method == "enumerate":
        cost = sum(nS**t * k ** (len(word) + t + 1) for t in range(horizon + 1))
        if cost > ENUMERATION_LIMIT:
            raise EnumerationLimitError(
                f"suffix enumeration needs ~{cost} path evaluations"
            )
        symbols = [Symbol(a, o) for a in range(model.num_actions) for o in range(model.num_obs)]
        total = 0.0
        for t in range(horizon + 1):
            level = sum(
                oracle_g(model, pi, word + z) for z in itertools.product(symbols, repeat=t)
            )
            total += gamma**t * level
        return total
    if method != "marginal":
        raise ValueError(f"unknown method {method!r}")
    joint = _enumerated_joint(model, pi, word)
    chain = np.einsum("sa,sat->st", pi, model.T)
    reward = np.einsum("sa,sa->s", pi, model.R)
    total = 0.0
    for t in range(horizon + 1):
        total += gamma**t * float(joint @ reward)
        joint = joint @ chain
    return total


def induced_action_prob(model, policy, history, action):
    """``Pi(a | h) = sum_s P(s | h) pi[s, a]`` by enumeration."""
    pi = _policy_matrix(model, policy)
    word = as_word(history, model.num_actions, model.num_obs)
    joint = _enumerated_joint(model, pi, word)
    total = joint.sum()
    if total <= 0:
        raise ZeroSamplingProbability(f"history {word} has probability zero")
    return float(joint @ pi[:, action] / total)


def oracle_q(model, policy, history, action, gamma, horizon, method="auto"):
    """Brute-force unnormalised action value ``sum_o V~(h a o) / Pi(a | h)``."""
    pi = _policy_matrix(model, policy)
    word = as_word(history, model.num_actions, model.num_obs)
    prob = induced_action_prob(model, pi, word, action)
    if prob <= 0:
        raise ZeroSamplingProbability(f"action {action} has zero probability after {word}")
    total = sum(
        oracle_v_tilde(model, pi, word + (Symbol(action, o),), gamma, horizon, method)
        for o in range(model.num_obs)
    )
    return total / prob


def mdp_optimal(model, gamma=None, tol=1e-10, max_iter=1_000_000):
    """Value iteration on the fully observable MDP underlying ``model``.

    Returns ``(values, actions)``; ties go to the lowest action id.
    """
    check_model(model)
    gamma = model.gamma if gamma is None else float(gamma)
    V = np.zeros(model.num_states)
    for _ in range(max_iter):
        Q = model.R + gamma * model.T @ V
        V_new = Q.max(axis=1)
        delta = np.max(np.abs(V_new - V))
        V = V_new
        if delta < tol:
            break
    else:
        logger.warning("value iteration stopped after %d sweeps", max_iter)
    Q = model.R + gamma * model.T @ V
    return V, np.argmax(Q, axis=1)
