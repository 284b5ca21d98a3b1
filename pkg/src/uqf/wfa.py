"""Weighted finite automata over the alphabet ``actions x observations``.

A :class:`Wfa` computes ``f(x) = alpha^T A_{x_1} ... A_{x_n} omega``.
Transition matrices are stored in one array indexed by symbol id
``action * num_obs + observation``.
"""
import json
from dataclasses import dataclass

import numpy as np

from ._validation import as_symbol, check_finite, check_square, symbol_id, word_ids
from .exceptions import InvalidModelError, SpectralRadiusTooLarge, ZeroSamplingProbability

RADIUS_MARGIN = 1e-9
MIN_SAMPLING_PROB = 1e-12


@dataclass(frozen=True, eq=False)
class Wfa:
    alpha: np.ndarray
    transitions: np.ndarray
    omega: np.ndarray
    num_actions: int
    num_obs: int

    def __post_init__(self):
        alpha = check_finite("alpha", self.alpha)
        omega = check_finite("omega", self.omega)
        mats = check_finite("transitions", self.transitions)
        n = alpha.shape[0]
        nsym = int(self.num_actions) * int(self.num_obs)
        if alpha.ndim != 1 or omega.shape != (n,):
            raise InvalidModelError("alpha and omega must be vectors of equal length")
        if mats.shape != (nsym, n, n):
            raise InvalidModelError(
                f"transitions must have shape ({nsym}, {n}, {n}), got {mats.shape}"
            )
        for name, arr in (("alpha", alpha), ("omega", omega), ("transitions", mats)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "num_actions", int(self.num_actions))
        object.__setattr__(self, "num_obs", int(self.num_obs))

    @property
    def num_states(self):
        return self.alpha.shape[0]

    @property
    def num_symbols(self):
        return self.num_actions * self.num_obs

    def matrix(self, symbol):
        s = as_symbol(symbol, self.num_actions, self.num_obs)
        return self.transitions[symbol_id(s, self.num_obs)]

    def __call__(self, word):
        return evaluate(self, word)

    def __repr__(self):
        return (
            f"Wfa(num_states={self.num_states}, "
            f"alphabet={self.num_actions}x{self.num_obs})"
        )

    def replace(self, **changes):
        d = dict(
            alpha=self.alpha,
            transitions=self.transitions,
            omega=self.omega,
            num_actions=self.num_actions,
            num_obs=self.num_obs,
        )
        d.update(changes)
        return Wfa(**d)

    def to_dict(self):
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "num_obs": self.num_obs,
            "alpha": self.alpha.tolist(),
            "omega": self.omega.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        n = int(d["num_states"])
        nsym = int(d["num_actions"]) * int(d["num_obs"])
        mats = np.asarray(d["transitions"], dtype=float).reshape(nsym, n, n)
        return cls(
            alpha=d["alpha"],
            transitions=mats,
            omega=d["omega"],
            num_actions=d["num_actions"],
            num_obs=d["num_obs"],
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class ForwardState:
    """Running prefix product ``alpha^T A_h`` and the length of ``h``."""

    vector: np.ndarray
    history_len: int = 0


def evaluate(wfa: Wfa, word) -> float:
    v = wfa.alpha
    for i in word_ids(word, wfa.num_actions, wfa.num_obs):
        v = v @ wfa.transitions[i]
    return float(v @ wfa.omega)


def initial_state(wfa: Wfa) -> ForwardState:
    return ForwardState(wfa.alpha.copy(), 0)


def step(state: ForwardState, wfa: Wfa, symbol) -> ForwardState:
    s = as_symbol(symbol, wfa.num_actions, wfa.num_obs)
    mat = wfa.transitions[symbol_id(s, wfa.num_obs)]
    return ForwardState(state.vector @ mat, state.history_len + 1)


def symbol_sum(wfa: Wfa) -> np.ndarray:
    return wfa.transitions.sum(axis=0)


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus, from a dense eigendecomposition."""
    m = check_square("matrix", m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def to_uqf(b: Wfa, gamma: float) -> Wfa:
    """Fold the discounted suffix sum into the terminal vector.

    Returns ``<alpha, {B_sigma}, (I - gamma * sum B_sigma)^{-1} tau>``, which
    computes ``sum_z gamma^|z| g(h z)`` when ``b`` computes ``g``.
    """
    gamma = float(gamma)
    m = gamma * symbol_sum(b)
    rho = spectral_radius(m)
    limit = 1.0 - RADIUS_MARGIN
    if not rho < limit:
        raise SpectralRadiusTooLarge(rho, limit)
    system = np.eye(b.num_states) - m
    try:
        omega = np.linalg.solve(system, b.omega)
    except np.linalg.LinAlgError as exc:
        raise SpectralRadiusTooLarge(rho, limit) from exc
    return b.replace(omega=omega)


def neumann_omega(b: Wfa, gamma: float, terms: int) -> np.ndarray:
    """Partial sum ``sum_{i<=terms} (gamma M)^i tau`` with ``M = sum B_sigma``."""
    m = gamma * symbol_sum(b)
    acc = term = np.asarray(b.omega, dtype=float)
    for _ in range(terms):
        term = m @ term
        acc = acc + term
    return acc


def neumann_tail_bound(b: Wfa, gamma: float, terms: int) -> float:
    """``gamma^(terms+1) rho / (1 - gamma rho) * |tau|_inf`` with ``rho = rho(M)``.

    Exact for automata whose ``M`` has unit infinity norm and radius, such as
    those built from a model; only indicative otherwise.
    """
    rho = spectral_radius(symbol_sum(b))
    if gamma * rho >= 1.0:
        return float("inf")
    return gamma ** (terms + 1) * rho / (1.0 - gamma * rho) * float(np.max(np.abs(b.omega)))


def action_value_weights(uqf: Wfa) -> np.ndarray:
    """``W[:, a] = sum_o A_(a,o) omega``, so raw action scores are ``state @ W``."""
    per_symbol = uqf.transitions @ uqf.omega
    return per_symbol.reshape(uqf.num_actions, uqf.num_obs, -1).sum(axis=1).T


def action_scores(uqf: Wfa, state: ForwardState, sampling_prob) -> np.ndarray:
    """Unnormalised action values ``sum_o state^T A_(a,o) omega / Pi(a | h)``.

    ``sampling_prob`` is either a callable ``action -> probability`` or an
    array of per-action probabilities.
    """
    if callable(sampling_prob):
        probs = np.array([sampling_prob(a) for a in range(uqf.num_actions)], dtype=float)
    else:
        probs = np.asarray(sampling_prob, dtype=float)
    if probs.shape != (uqf.num_actions,):
        raise ValueError(f"expected {uqf.num_actions} sampling probabilities")
    if np.any(probs < MIN_SAMPLING_PROB):
        bad = int(np.argmin(probs))
        raise ZeroSamplingProbability(
            f"action {bad} has sampling probability {probs[bad]:.3g}"
        )
    return (state.vector @ action_value_weights(uqf)) / probs
