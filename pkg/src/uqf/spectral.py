"""Hankel-matrix estimation and spectral recovery of weighted automata.

The target function is ``g(h) = E[R | h] P(h)``.  Each episode of length
``L`` yields one labelled example per prefix length ``t < L``: the prefix
``a_1 o_1 ... a_t o_t`` labelled with the reward of step ``t + 1``.  A
Hankel cell ``(u, v)`` estimates ``g(uv)`` as the summed labels of examples
whose prefix is exactly ``uv``, divided by the number of examples of that
length.

Two estimation routes are provided: explicit Hankel blocks followed by a
truncated SVD, and a single-pass sketch through Gaussian random projections
of the prefix and suffix spaces.
"""
import hashlib
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._validation import Symbol, Word, as_word, symbol_id
from .exceptions import RankDeficiencyError
from .wfa import Wfa

SV_RTOL = 1e-12


@dataclass(frozen=True)
class LabeledExample:
    prefix: Word
    label: float


@dataclass(frozen=True, eq=False)
class Dataset:
    examples: Tuple[LabeledExample, ...]
    count_by_length: Dict[int, int]
    num_actions: int
    num_obs: int

    def __len__(self):
        return len(self.examples)

    @cached_property
    def totals(self) -> Dict[Word, float]:
        """Summed labels per distinct prefix."""
        acc = defaultdict(float)
        for ex in self.examples:
            acc[ex.prefix] += ex.label
        return dict(acc)

    @cached_property
    def normalized(self) -> Dict[Word, float]:
        """Empirical ``g`` for every observed prefix (per-length normalised)."""
        return {w: y / self.count_by_length[len(w)] for w, y in self.totals.items()}

    def value(self, word) -> float:
        return self.normalized.get(word, 0.0)

    @classmethod
    def from_function(cls, f, words, num_actions, num_obs):
        """Synthetic dataset whose Hankel estimates equal ``f`` exactly.

        One example per word; labels are scaled by the number of words of the
        same length so that per-length normalisation returns ``f(word)``.
        """
        words = [as_word(w, num_actions, num_obs) for w in words]
        counts = Counter(len(w) for w in words)
        examples = tuple(LabeledExample(w, float(f(w)) * counts[len(w)]) for w in words)
        return cls(examples, dict(counts), num_actions, num_obs)


def _infer_alphabet(episodes):
    nA = nO = 0
    for ep in episodes:
        for s in ep.steps:
            nA = max(nA, s.action + 1)
            nO = max(nO, s.observation + 1)
    return max(nA, 1), max(nO, 1)


def extract_examples(episodes, num_actions=None, num_obs=None) -> Dataset:
    """One example per episode and prefix length ``t = 0 .. L - 1``."""
    episodes = list(episodes)
    if num_actions is None or num_obs is None:
        nA, nO = _infer_alphabet(episodes)
        num_actions = nA if num_actions is None else num_actions
        num_obs = nO if num_obs is None else num_obs
    examples = []
    counts = Counter()
    for ep in episodes:
        symbols = tuple(Symbol(s.action, s.observation) for s in ep.steps)
        for t, st in enumerate(ep.steps):
            examples.append(LabeledExample(symbols[:t], float(st.reward)))
            counts[t] += 1
    return Dataset(tuple(examples), dict(counts), int(num_actions), int(num_obs))


@dataclass(frozen=True, eq=False)
class Basis:
    prefixes: Tuple[Word, ...]
    suffixes: Tuple[Word, ...]

    def __post_init__(self):
        for name, words in (("prefixes", self.prefixes), ("suffixes", self.suffixes)):
            if not words or words[0] != ():
                raise ValueError(f"{name} must start with the empty word")
            if len(set(words)) != len(words):
                raise ValueError(f"{name} contain duplicates")

    @cached_property
    def prefix_index(self):
        return {u: i for i, u in enumerate(self.prefixes)}

    @cached_property
    def suffix_index(self):
        return {v: j for j, v in enumerate(self.suffixes)}

    @classmethod
    def complete(cls, num_actions, num_obs, max_len):
        """All words of length <= ``max_len`` as both prefixes and suffixes."""
        import itertools

        symbols = [Symbol(a, o) for a in range(num_actions) for o in range(num_obs)]
        words = [()]
        for n in range(1, max_len + 1):
            words.extend(itertools.product(symbols, repeat=n))
        words = tuple(tuple(w) for w in words)
        return cls(words, words)


def _top_words(counts, limit):
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [w for w, _ in ranked[: max(limit - 1, 0)]]


def select_basis(data: Dataset, max_prefixes: int, max_suffixes: int, max_len: int) -> Basis:
    """Most frequent prefixes and suffixes of the example prefixes.

    The empty word comes first in both lists; ties are broken
    lexicographically by symbol id.
    """
    if min(max_prefixes, max_suffixes, max_len) < 1:
        raise ValueError("basis limits must be >= 1")
    pre, suf = Counter(), Counter()
    multiplicity = Counter(ex.prefix for ex in data.examples)
    for x, m in multiplicity.items():
        for ell in range(1, min(max_len, len(x)) + 1):
            pre[x[:ell]] += m
            suf[x[-ell:]] += m
    prefixes = ((),) + tuple(_top_words(pre, max_prefixes))
    suffixes = ((),) + tuple(_top_words(suf, max_suffixes))
    return Basis(prefixes, suffixes)


@dataclass(frozen=True, eq=False)
class HankelEstimate:
    basis: Basis
    H_lambda: np.ndarray
    H_sigma: np.ndarray  # (num_symbols, |U|, |V|), indexed by symbol id
    num_actions: int
    num_obs: int

    def block(self, symbol):
        return self.H_sigma[symbol_id(symbol, self.num_obs)]


def _symbols(num_actions, num_obs):
    return [Symbol(a, o) for a in range(num_actions) for o in range(num_obs)]


def estimate_hankel(data: Dataset, basis: Basis) -> HankelEstimate:
    g = data.normalized
    U, V = basis.prefixes, basis.suffixes
    symbols = _symbols(data.num_actions, data.num_obs)
    H = np.array([[g.get(u + v, 0.0) for v in V] for u in U])
    Hs = np.array(
        [[[g.get(u + (s,) + v, 0.0) for v in V] for u in U] for s in symbols]
    ).reshape(len(symbols), len(U), len(V))
    return HankelEstimate(basis, H, Hs, data.num_actions, data.num_obs)


class TruncatedSVD(NamedTuple):
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray
    singular_values: np.ndarray
    negligible: int  # how many of the kept values fall below SV_RTOL * D[0]


def truncated_svd(m, k: int) -> TruncatedSVD:
    """Best rank-``k`` factorisation ``m ~ U diag(D) V^T``."""
    m = np.asarray(m, dtype=float)
    if not 1 <= k <= min(m.shape):
        raise ValueError(f"rank {k} not in [1, {min(m.shape)}] for shape {m.shape}")
    U, s, Vt = np.linalg.svd(m, full_matrices=False)
    cutoff = SV_RTOL * s[0] if s[0] > 0 else np.inf
    negligible = int(np.sum(s[:k] <= cutoff))
    return TruncatedSVD(U[:, :k], s[:k], Vt[:k].T, s, negligible)


def _checked_svd(m, k):
    if k > min(m.shape):
        s = np.linalg.svd(m, compute_uv=False)
        raise RankDeficiencyError(k, int(np.sum(s > SV_RTOL * s[0])) if s[0] > 0 else 0, s)
    svd = truncated_svd(m, k)
    if svd.negligible:
        raise RankDeficiencyError(k, k - svd.negligible, svd.singular_values)
    return svd


def recover_from_hankel(h: HankelEstimate, k: int):
    """Spectral recovery; returns the automaton and the full singular spectrum."""
    if h.basis.prefixes[0] != () or h.basis.suffixes[0] != ():
        raise ValueError("the empty word must be at index 0 of both basis lists")
    svd = _checked_svd(h.H_lambda, k)
    UD = svd.U * svd.D
    left = svd.U.T / svd.D[:, None]  # (UD)^+
    mats = left @ h.H_sigma @ svd.V
    wfa = Wfa(alpha=UD[0], transitions=mats, omega=svd.V[0], num_actions=h.num_actions, num_obs=h.num_obs)
    return wfa, svd.singular_values


def recover_wfa(h: HankelEstimate, k: int) -> Wfa:
    """Rank-``k`` automaton from Hankel blocks.

    With ``H_lambda ~ U D V^T``: ``alpha`` is the empty-prefix row of ``UD``,
    ``omega`` the empty-suffix row of ``V`` and ``B_sigma = (UD)^+ H_sigma V``.
    Only function values are meaningful; the parameters are determined up to
    a change of basis.
    """
    return recover_from_hankel(h, k)[0]


# -- random projections ------------------------------------------------------


def word_key(word) -> bytes:
    """Canonical byte encoding ``"a.o|a.o|..."`` of a word."""
    return "|".join(f"{a}.{o}" for a, o in word).encode("ascii")


def stable_row_id(word) -> int:
    """64-bit BLAKE2b digest of :func:`word_key`, read big-endian."""
    return int.from_bytes(hashlib.blake2b(word_key(word), digest_size=8).digest(), "big")


class JlProjection:
    """Gaussian projection rows ``phi(word)`` with entries ``N(0, 1/d)``.

    Rows are generated on demand from ``(seed, stable_row_id(word))`` so any
    row can be regenerated without storing the matrix.  A projection built
    with :meth:`from_table` uses explicitly supplied rows instead.
    """

    def __init__(self, d: int, seed: int = 0, universe_hint: int = 0):
        if d < 1:
            raise ValueError("projection dimension must be >= 1")
        self.d = int(d)
        self.seed = int(seed)
        self.universe_hint = int(universe_hint)
        self._rows = {}
        self._table = None

    @classmethod
    def from_table(cls, rows: Dict[Word, np.ndarray]):
        rows = {tuple(w): np.asarray(r, dtype=float) for w, r in rows.items()}
        dims = {r.shape for r in rows.values()}
        if len(dims) != 1:
            raise ValueError("all rows must share one dimension")
        proj = cls(dims.pop()[0])
        proj._table = rows
        proj._ids = {w: i for i, w in enumerate(rows)}
        return proj

    @classmethod
    def identity(cls, words):
        """Unit rows in the order of ``words``; sketches equal plain Hankel blocks."""
        eye = np.eye(len(words))
        return cls.from_table({tuple(w): eye[i] for i, w in enumerate(words)})

    def row_id(self, word) -> int:
        word = tuple(word)
        if self._table is not None:
            return self._ids[word]
        return stable_row_id(word)

    @property
    def index(self) -> Dict[Word, int]:
        if self._table is not None:
            return dict(self._ids)
        return {w: stable_row_id(w) for w in self._rows}

    def row(self, word) -> np.ndarray:
        word = tuple(word)
        if self._table is not None:
            return self._table[word]
        r = self._rows.get(word)
        if r is None:
            rng = np.random.default_rng([self.seed, stable_row_id(word)])
            r = rng.normal(0.0, 1.0 / np.sqrt(self.d), self.d)
            self._rows[word] = r
        return r

    def matrix(self, words) -> np.ndarray:
        return np.array([self.row(w) for w in words]).reshape(len(words), self.d)


def make_projection(universe_hint: int, d: int, seed: int) -> JlProjection:
    return JlProjection(d, seed, universe_hint)


@dataclass(frozen=True, eq=False)
class CompressedSketch:
    c_U: np.ndarray
    C_UV: np.ndarray
    C_sigma: np.ndarray  # (num_symbols, d_U, d_V)
    num_actions: int
    num_obs: int


def _weighted_prefixes(data):
    """Per-distinct-prefix weights ``sum(y) / count_by_length[len]``."""
    return data.normalized.items()


def compressed_estimate(data: Dataset, basis: Basis, proj_U: JlProjection, proj_V: JlProjection) -> CompressedSketch:
    """Sketch ``Phi_U^T H Phi_V`` in one pass over the example prefixes.

    Every split of a prefix into ``u v`` or ``u sigma v`` with ``u`` in the
    prefix basis and ``v`` in the suffix basis adds ``y * phi(u) (x) phi(v)``.
    """
    nsym = data.num_actions * data.num_obs
    pre, suf = basis.prefix_index, basis.suffix_index
    phi_u = {u: proj_U.row(u) for u in basis.prefixes}
    phi_v = {v: proj_V.row(v) for v in basis.suffixes}
    c_U = np.zeros(proj_U.d)
    C = np.zeros((proj_U.d, proj_V.d))
    Cs = np.zeros((nsym, proj_U.d, proj_V.d))
    for x, w in _weighted_prefixes(data):
        if w == 0.0:
            continue
        if x in pre:
            c_U += w * phi_u[x]
        for i in range(len(x) + 1):
            u, v = x[:i], x[i:]
            if u in pre and v in suf:
                C += w * np.outer(phi_u[u], phi_v[v])
            if i < len(x):
                v = x[i + 1 :]
                if u in pre and v in suf:
                    Cs[symbol_id(x[i], data.num_obs)] += w * np.outer(phi_u[u], phi_v[v])
    return CompressedSketch(c_U, C, Cs, data.num_actions, data.num_obs)


def recover_from_sketch(sketch, basis, proj_U, k, data=None, proj_V=None):
    svd = _checked_svd(sketch.C_UV, k)
    Phi_U = proj_U.matrix(basis.prefixes)
    e_lambda = np.zeros(len(basis.prefixes))
    e_lambda[basis.prefix_index[()]] = 1.0
    e, *_ = np.linalg.lstsq(Phi_U, e_lambda, rcond=None)
    left = svd.U.T / svd.D[:, None]  # D^-1 U^T
    alpha = e @ (svd.U * svd.D)
    omega = left @ sketch.c_U
    if data is None:
        mats = left @ sketch.C_sigma @ svd.V
    else:
        mats = _second_pass_transitions(data, basis, proj_U, proj_V, left, svd.V)
    wfa = Wfa(alpha=alpha, transitions=mats, omega=omega, num_actions=sketch.num_actions, num_obs=sketch.num_obs)
    return wfa, svd.singular_values, e


def _second_pass_transitions(data, basis, proj_U, proj_V, left, V):
    k = left.shape[0]
    mats = np.zeros((data.num_actions * data.num_obs, k, k))
    pre, suf = basis.prefix_index, basis.suffix_index
    for x, w in _weighted_prefixes(data):
        if w == 0.0:
            continue
        for i in range(len(x)):
            u, v = x[:i], x[i + 1 :]
            if u in pre and v in suf:
                mats[symbol_id(x[i], data.num_obs)] += w * np.outer(
                    left @ proj_U.row(u), V.T @ proj_V.row(v)
                )
    return mats


def recover_wfa_compressed(sketch, data, basis, proj_U, proj_V, k, second_pass=False) -> Wfa:
    """Rank-``k`` automaton from a compressed sketch.

    With ``C_UV ~ U D V^T``: ``alpha = e^T U D`` where ``Phi_U e = e_lambda``
    (least squares), ``omega = D^-1 U^T c_U`` and
    ``B_sigma = D^-1 U^T C_sigma V``.  ``second_pass=True`` recomputes the
    transition matrices by a fresh pass over ``data`` instead of reusing the
    accumulated ``C_sigma``.
    """
    if second_pass:
        return recover_from_sketch(sketch, basis, proj_U, k, data, proj_V)[0]
    return recover_from_sketch(sketch, basis, proj_U, k)[0]
