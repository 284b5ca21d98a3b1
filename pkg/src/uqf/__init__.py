"""Spectral learning of unnormalised Q functions for POMDP planning."""
from ._validation import Symbol
from .estimator import LearnConfig, LearningReport, SpectralUQF, learn_uqf
from .exceptions import (
    EnumerationLimitError,
    InvalidModelError,
    RankDeficiencyError,
    SpectralRadiusTooLarge,
    UQFError,
    ZeroSamplingProbability,
)
from .pomdp import Episode, Pomdp, StatePolicy, Step
from .wfa import ForwardState, Wfa

__version__ = "0.1.0"
