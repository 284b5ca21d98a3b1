"""Input validation helpers.

Words (histories) are accepted either as sequences of ``(action, observation)``
pairs or as flat symbol ids ``action * num_obs + observation``.
"""
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from .exceptions import InvalidModelError


class Symbol(NamedTuple):
    action: int
    observation: int


Word = Tuple[Symbol, ...]


def symbol_id(symbol, num_obs):
    return symbol[0] * num_obs + symbol[1]


def as_symbol(item, num_actions, num_obs):
    """Coerce a pair or a flat id to a :class:`Symbol`, checking ranges."""
    if isinstance(item, (int, np.integer)):
        item = int(item)
        if not 0 <= item < num_actions * num_obs:
            raise InvalidModelError(f"symbol id {item} out of range")
        return Symbol(item // num_obs, item % num_obs)
    try:
        a, o = item
    except (TypeError, ValueError):
        raise InvalidModelError(f"cannot interpret {item!r} as a symbol") from None
    a, o = int(a), int(o)
    if not (0 <= a < num_actions and 0 <= o < num_obs):
        raise InvalidModelError(
            f"symbol ({a}, {o}) outside alphabet {num_actions}x{num_obs}"
        )
    return Symbol(a, o)


def as_word(word, num_actions, num_obs) -> Word:
    return tuple(as_symbol(s, num_actions, num_obs) for s in word)


def word_ids(word, num_actions, num_obs):
    return [symbol_id(s, num_obs) for s in as_word(word, num_actions, num_obs)]


def check_finite(name, array):
    array = np.asarray(array, dtype=float)
    if not np.all(np.isfinite(array)):
        raise InvalidModelError(f"{name} contains non-finite entries")
    return array


def check_square(name, m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def stochastic_rows_report(name, array, atol=1e-12):
    """List the rows of ``array`` (last axis) that are not distributions."""
    problems = []
    array = np.asarray(array, dtype=float)
    if np.any(array < 0):
        for idx in zip(*np.nonzero(array < 0)):
            path = ",".join(str(int(i)) for i in idx)
            problems.append(f"{name}[{path}] is negative ({array[idx]:.6g})")
    sums = array.sum(axis=-1)
    bad = np.abs(sums - 1.0) > atol
    for idx in zip(*np.nonzero(np.atleast_1d(bad))):
        if array.ndim == 1:
            problems.append(f"{name} sums to {float(sums):.12g} (expected 1)")
        else:
            path = ",".join(str(int(i)) for i in idx)
            problems.append(
                f"{name} row ({path}) sums to {float(sums[idx]):.12g} (expected 1)"
            )
    return problems


def check_policy_matrix(pi, num_states, num_actions):
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (num_states, num_actions):
        raise InvalidModelError(
            f"policy shape {pi.shape} does not match ({num_states}, {num_actions})"
        )
    problems = stochastic_rows_report("pi", pi)
    if problems:
        raise InvalidModelError("; ".join(problems))
    return pi


def check_probability(name, value, low=0.0, high=1.0):
    value = float(value)
    if not low <= value <= high:
        raise ValueError(f"{name} must lie in [{low}, {high}], got {value}")
    return value


def words_up_to(num_symbols: int, max_len: int) -> Sequence[Tuple[int, ...]]:
    """All symbol-id words of length <= max_len in length-lexicographic order."""
    import itertools

    out = [()]
    for n in range(1, max_len + 1):
        out.extend(itertools.product(range(num_symbols), repeat=n))
    return out
