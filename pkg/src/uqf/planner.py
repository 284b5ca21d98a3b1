"""Policy evaluation and policy iteration with learned UQF automata."""
import csv
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .estimator import LearnConfig, learn_uqf
from .exceptions import UQFError
from .pomdp import StatePolicy, _Sampler, check_model, episode_seeds, mdp_optimal, rollout, sample_episodes
from .policies import GreedyPolicy, UniformPolicy, epsilon_greedy

logger = logging.getLogger(__name__)

METRIC_FIELDS = ("iter", "epsilon", "episodes", "mean_return", "stderr", "spectral_radius", "rank_used")


@dataclass
class EvalResult:
    mean_return: float
    stderr: float
    returns: np.ndarray = field(repr=False, default=None)


def discounted_return(rewards, gamma):
    return float(sum(r * gamma**t for t, r in enumerate(rewards)))


def evaluate_policy(model, policy, episodes=1000, max_len=100, gamma_eval=0.99, seed=0) -> EvalResult:
    """Mean discounted return over ``episodes`` rollouts.

    Rollouts stop early once the hidden state is absorbing and reward-free,
    which leaves the return unchanged.
    """
    check_model(model)
    if isinstance(policy, np.ndarray):
        policy = StatePolicy(policy)
    sampler = _Sampler(model)
    returns = np.array([
        discounted_return(
            rollout(model, policy, max_len, s, sampler, stop_when_absorbed=True).rewards,
            gamma_eval,
        )
        for s in episode_seeds(seed, episodes)
    ])
    stderr = float(returns.std(ddof=1) / np.sqrt(len(returns))) if len(returns) > 1 else 0.0
    return EvalResult(float(returns.mean()), stderr, returns)


def optimal_reference(model, gamma_eval=0.99) -> StatePolicy:
    """Fully observable optimal policy; an upper bound for any history policy."""
    _, actions = mdp_optimal(model, gamma=gamma_eval)
    return StatePolicy.deterministic(actions, model.num_actions)


@dataclass
class IterationConfig:
    epsilon0: float = 1.0
    eta: float = 2.0
    iterations: int = 3
    episodes_per_iter: int = 2000
    episode_length: int = 6
    learn: LearnConfig = field(default_factory=LearnConfig)
    eval_episodes: int = 1000
    eval_max_len: int = 100
    gamma_eval: float = 0.99
    eval_seed: int = 12345

    def __post_init__(self):
        if not 0.0 <= self.epsilon0 <= 1.0:
            raise ValueError("epsilon0 must lie in [0, 1]")
        if self.eta <= 1.0:
            raise ValueError("eta must be > 1")
        if isinstance(self.learn, dict):
            self.learn = LearnConfig.from_dict(self.learn)


@dataclass
class PolicyIterationResult:
    policy: Optional[GreedyPolicy]
    metrics: List[dict]


def policy_iteration(model, config: IterationConfig, seed=0, initial_policy=None) -> PolicyIterationResult:
    """Alternate epsilon-greedy sampling and UQF learning.

    Each iteration wraps the current policy epsilon-greedily (uniform when
    there is none yet), samples fresh episodes, learns a new UQF using the
    wrapper as the score divisor, then divides epsilon by ``eta``.  A failed
    learning step keeps the previous policy and is recorded in the metrics.
    """
    policy = initial_policy
    epsilon = config.epsilon0
    seeds = np.random.SeedSequence(seed).spawn(config.iterations)
    metrics = []
    for it, ss in enumerate(seeds, start=1):
        data_seed = int(ss.generate_state(1, np.uint64)[0])
        if policy is None:
            eps_used = 1.0
            sampler = UniformPolicy(model.num_actions)
        else:
            eps_used = epsilon
            sampler = epsilon_greedy(policy, epsilon)
        episodes = sample_episodes(model, sampler, config.episodes_per_iter, config.episode_length, data_seed)
        row = {"iter": it, "epsilon": eps_used, "episodes": len(episodes)}
        try:
            uqf, report = learn_uqf(
                episodes, config.learn, sampling=sampler,
                num_actions=model.num_actions, num_obs=model.num_obs,
            )
        except UQFError as exc:
            logger.warning("iteration %d: learning failed (%s); keeping previous policy", it, exc)
            report = getattr(exc, "report", None)
            row["error"] = str(exc)
            row["spectral_radius"] = report.spectral_radius if report else float("nan")
            row["rank_used"] = config.learn.rank
        else:
            policy = GreedyPolicy(uqf, sampler)
            row["spectral_radius"] = report.spectral_radius
            row["rank_used"] = report.rank
        if policy is not None:
            res = evaluate_policy(model, policy, config.eval_episodes, config.eval_max_len, config.gamma_eval, config.eval_seed)
            row["mean_return"], row["stderr"] = res.mean_return, res.stderr
        else:
            row["mean_return"] = row["stderr"] = float("nan")
        metrics.append(row)
        epsilon = epsilon / config.eta
    return PolicyIterationResult(policy, metrics)


def append_metrics_csv(rows, path):
    """Append rows to ``path``; the header is written only for a new file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="ignore")
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)
