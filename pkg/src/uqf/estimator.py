"""Scikit-learn style estimator for unnormalised Q functions."""
import time
from dataclasses import asdict, dataclass
from typing import ClassVar, List

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import spectral
from .exceptions import InvalidModelError, UQFError
from .policies import GreedyPolicy, UniformPolicy, replay
from .wfa import spectral_radius, symbol_sum, to_uqf


@dataclass
class LearningReport:
    singular_values: List[float]
    spectral_radius: float
    rank: int
    num_prefixes: int
    num_suffixes: int
    num_examples: int
    compressed: bool
    seconds: float = 0.0

    def to_dict(self):
        return asdict(self)


class SpectralUQF(BaseEstimator):
    """Learn an automaton whose action scores are proportional to Q values.

    Parameters
    ----------
    rank : int
        Number of automaton states (truncated SVD rank).
    gamma : float
        Discount folded into the terminal vector.
    max_prefixes, max_suffixes, max_len : int
        Basis selection limits; see :func:`uqf.spectral.select_basis`.
    compressed : bool
        Estimate a Gaussian sketch of the Hankel blocks instead of the blocks.
    d_u, d_v, projection_seed : int
        Sketch dimensions and the seed of the projection rows.
    projection : {"gaussian", "identity"}
        ``"identity"`` uses unit rows over the basis (``d_u``/``d_v`` are
        ignored), which makes the sketch equal to the plain Hankel blocks.

    Attributes
    ----------
    automaton_ : Wfa
        Learned automaton for the reward-weighted trajectory measure.
    uqf_ : Wfa
        ``automaton_`` with the discounted-sum terminal vector.
    sampling_ : policy
        Policy used as the divisor of the action scores.
    report_ : LearningReport
    """

    def __init__(
        self,
        rank=4,
        gamma=0.8,
        max_prefixes=80,
        max_suffixes=80,
        max_len=2,
        compressed=False,
        d_u=64,
        d_v=64,
        projection_seed=0,
        projection="gaussian",
    ):
        self.rank = rank
        self.gamma = gamma
        self.max_prefixes = max_prefixes
        self.max_suffixes = max_suffixes
        self.max_len = max_len
        self.compressed = compressed
        self.d_u = d_u
        self.d_v = d_v
        self.projection_seed = projection_seed
        self.projection = projection

    def _check_params(self):
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidModelError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.rank < 1:
            raise InvalidModelError("rank must be >= 1")
        if self.projection not in ("gaussian", "identity"):
            raise InvalidModelError(f"projection must be 'gaussian' or 'identity', got {self.projection!r}")

    def fit(self, X, y=None, sampling=None, num_actions=None, num_obs=None):
        """Fit on a list of episodes (or a prepared :class:`Dataset`).

        ``y`` is ignored; labels are the rewards stored in the episodes.
        """
        self._check_params()
        start = time.perf_counter()
        if isinstance(X, spectral.Dataset):
            data = X
        else:
            data = spectral.extract_examples(X, num_actions, num_obs)
        basis = spectral.select_basis(data, self.max_prefixes, self.max_suffixes, self.max_len)
        if self.compressed:
            if self.projection == "identity":
                proj_u = spectral.JlProjection.identity(basis.prefixes)
                proj_v = spectral.JlProjection.identity(basis.suffixes)
            else:
                proj_u = spectral.make_projection(len(basis.prefixes), self.d_u, self.projection_seed)
                proj_v = spectral.make_projection(len(basis.suffixes), self.d_v, self.projection_seed + 1)
            sketch = spectral.compressed_estimate(data, basis, proj_u, proj_v)
            automaton, svals, _ = spectral.recover_from_sketch(sketch, basis, proj_u, self.rank)
        else:
            hankel = spectral.estimate_hankel(data, basis)
            automaton, svals = spectral.recover_from_hankel(hankel, self.rank)
        rho = spectral_radius(self.gamma * symbol_sum(automaton))
        self.dataset_ = data
        self.basis_ = basis
        self.automaton_ = automaton
        self.report_ = LearningReport(
            singular_values=[float(s) for s in svals],
            spectral_radius=rho,
            rank=self.rank,
            num_prefixes=len(basis.prefixes),
            num_suffixes=len(basis.suffixes),
            num_examples=len(data),
            compressed=bool(self.compressed),
        )
        try:
            self.uqf_ = to_uqf(automaton, self.gamma)
        except UQFError as exc:
            exc.report = self.report_
            raise
        self.sampling_ = sampling if sampling is not None else UniformPolicy(data.num_actions)
        self.report_.seconds = time.perf_counter() - start
        return self

    def policy(self) -> GreedyPolicy:
        check_is_fitted(self, "uqf_")
        return GreedyPolicy(self.uqf_, self.sampling_)

    def decision_function(self, histories):
        """Action scores for each history, shape ``(n_histories, num_actions)``."""
        policy = self.policy()
        return np.array([replay(policy, h).scores() for h in histories])

    def predict(self, histories):
        return np.argmax(self.decision_function(histories), axis=1)


@dataclass
class LearnConfig:
    max_prefixes: int = 80
    max_suffixes: int = 80
    max_len: int = 2
    rank: int = 4
    gamma: float = 0.8
    compressed: bool = False
    d_u: int = 64
    d_v: int = 64
    seed: int = 0
    projection: str = "gaussian"

    _KEYS: ClassVar[dict] = {
        "basis.max_prefixes": "max_prefixes",
        "basis.max_suffixes": "max_suffixes",
        "basis.max_len": "max_len",
        "rank": "rank",
        "gamma": "gamma",
        "compressed.enabled": "compressed",
        "compressed.d_u": "d_u",
        "compressed.d_v": "d_v",
        "compressed.seed": "seed",
        "compressed.projection": "projection",
    }

    @classmethod
    def from_dict(cls, d):
        """Accept nested (``{"basis": {"max_len": 3}}``) or dotted keys."""
        flat = {}

        def walk(prefix, node):
            for key, value in node.items():
                name = f"{prefix}{key}"
                if isinstance(value, dict):
                    walk(name + ".", value)
                else:
                    flat[name] = value

        walk("", d or {})
        unknown = sorted(set(flat) - set(cls._KEYS))
        if unknown:
            raise InvalidModelError(f"unknown learn config keys: {', '.join(unknown)}")
        return cls(**{cls._KEYS[k]: v for k, v in flat.items()})

    def to_dict(self):
        return {
            "basis": {
                "max_prefixes": self.max_prefixes,
                "max_suffixes": self.max_suffixes,
                "max_len": self.max_len,
            },
            "rank": self.rank,
            "gamma": self.gamma,
            "compressed": {
                "enabled": self.compressed,
                "d_u": self.d_u,
                "d_v": self.d_v,
                "seed": self.seed,
                "projection": self.projection,
            },
        }

    def estimator(self) -> SpectralUQF:
        return SpectralUQF(
            rank=self.rank,
            gamma=self.gamma,
            max_prefixes=self.max_prefixes,
            max_suffixes=self.max_suffixes,
            max_len=self.max_len,
            compressed=self.compressed,
            d_u=self.d_u,
            d_v=self.d_v,
            projection_seed=self.seed,
            projection=self.projection,
        )


def learn_uqf(episodes, config=None, sampling=None, num_actions=None, num_obs=None):
    """Episodes -> basis -> Hankel (or sketch) -> automaton -> UQF.

    Returns ``(uqf, report)``.
    """
    if config is None:
        config = LearnConfig()
    elif isinstance(config, dict):
        config = LearnConfig.from_dict(config)
    est = config.estimator().fit(episodes, sampling=sampling, num_actions=num_actions, num_obs=num_obs)
    return est.uqf_, est.report_
