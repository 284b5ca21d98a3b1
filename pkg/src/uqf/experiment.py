"""Experiment configuration and the sample / learn / evaluate pipeline."""
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .envs import builtin_gridworlds, compile_gridworld, load_layout
from .estimator import LearnConfig, learn_uqf
from .exceptions import InvalidModelError, UQFError
from .planner import IterationConfig, evaluate_policy, optimal_reference
from .pomdp import Pomdp, StatePolicy, sample_episodes
from .policies import GreedyPolicy, UniformPolicy

CURVE_FIELDS = ("env", "policy", "train_size", "seed", "mean_return", "stderr", "spectral_radius", "rank", "error")
EVAL_FIELDS = ("env", "train_size", "seed", "mean_return", "stderr")


class ConfigError(InvalidModelError):
    """Configuration or environment reference cannot be used."""


@dataclass
class EvalConfig:
    episodes: int = 1000
    max_len: int = 100
    gamma_eval: float = 0.99
    seed: int = 12345


@dataclass
class ExperimentConfig:
    env: str = "builtin:A"
    slip: float = 0.2
    count: int = 800
    length: int = 6
    seed: int = 0
    sizes: List[int] = field(default_factory=lambda: [100, 200, 400, 800])
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    baselines: List[str] = field(default_factory=lambda: ["random", "optimal"])
    learn: LearnConfig = field(default_factory=LearnConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    iterate: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def __post_init__(self):
        if any(int(s) <= 0 for s in self.sizes) or self.count <= 0 or self.length <= 0:
            raise ConfigError("sizes, count and length must be positive")
        unknown = set(self.baselines) - {"random", "optimal"}
        if unknown:
            raise ConfigError(f"unknown baselines {sorted(unknown)}")

    def iteration_config(self) -> IterationConfig:
        opts = {"episode_length": self.length, **self.iterate}
        try:
            cfg = IterationConfig(learn=self.learn, eval_episodes=self.eval.episodes, eval_max_len=self.eval.max_len,
                                  gamma_eval=self.eval.gamma_eval, eval_seed=self.eval.seed, **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"iterate: {exc}") from exc
        return cfg


_TOP_KEYS = {"env", "slip", "count", "length", "seed", "sizes", "seeds", "baselines", "learn", "eval", "iterate"}


def config_from_dict(d, base_dir=None) -> ExperimentConfig:
    d = dict(d or {})
    unknown = sorted(set(d) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        learn = LearnConfig.from_dict(d.pop("learn", {}))
        ev = EvalConfig(**d.pop("eval", {}))
        return ExperimentConfig(learn=learn, eval=ev, base_dir=Path(base_dir or Path.cwd()), **d)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(data, base_dir=path.parent)


# -- environments --------------------------------------------------------------


def resolve_env(ref, slip=0.2, base_dir=None) -> Pomdp:
    """``builtin:A``, a model JSON file or a grid layout text file."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        variants = builtin_gridworlds(slip)
        if name not in variants:
            raise ConfigError(f"unknown builtin env {name!r}; choose from {sorted(variants)}")
        return compile_gridworld(variants[name])
    path = Path(ref)
    if base_dir is not None and not path.is_absolute() and not path.exists():
        path = Path(base_dir) / path
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read env {path}: {exc.strerror}") from exc
    try:
        if path.suffix == ".json":
            return Pomdp.from_json(text)
        return compile_gridworld(load_layout(path, slip=slip))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid env {path}: {exc}") from exc


def env_hash(model: Pomdp) -> str:
    return hashlib.sha256(model.to_json().encode()).hexdigest()


# -- pipeline steps -----------------------------------------------------------


def sample_uniform(model, count, length, seed):
    return sample_episodes(model, StatePolicy.uniform(model.num_states, model.num_actions), count, length, seed)


def learn_policy(model, episodes, learn: LearnConfig):
    uqf, report = learn_uqf(episodes, learn, UniformPolicy(model.num_actions), model.num_actions, model.num_obs)
    return GreedyPolicy(uqf, UniformPolicy(model.num_actions)), report


def baseline_policy(model, name, gamma_eval):
    if name == "random":
        return StatePolicy.uniform(model.num_states, model.num_actions)
    if name == "optimal":
        return optimal_reference(model, gamma_eval)
    raise ConfigError(f"unknown baseline {name!r}")


def _fmt(x):
    return "" if x is None else repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _curve_cell(args) -> dict:
    model, cfg, size, seed = args
    row = {"env": cfg.env, "policy": "uqf", "train_size": size, "seed": seed}
    try:
        episodes = sample_uniform(model, size, cfg.length, seed)
        policy, report = learn_policy(model, episodes, cfg.learn)
        res = evaluate_policy(model, policy, cfg.eval.episodes, cfg.eval.max_len, cfg.eval.gamma_eval, cfg.eval.seed + seed)
    except (UQFError, np.linalg.LinAlgError) as exc:
        report = getattr(exc, "report", None)
        row.update(mean_return=None, stderr=None, rank=cfg.learn.rank,
                   spectral_radius=report.spectral_radius if report else None,
                   error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
        return row
    row.update(mean_return=res.mean_return, stderr=res.stderr, spectral_radius=report.spectral_radius,
               rank=report.rank, error="")
    return row


def curve_rows(model, cfg: ExperimentConfig, jobs=1) -> List[dict]:
    """One row per (size, seed) plus one row per (baseline, size).

    Baselines are evaluated once with the fixed evaluation seed and repeated
    for every size so they plot as flat reference lines.
    """
    cells = [(model, cfg, int(size), int(seed)) for size in cfg.sizes for seed in cfg.seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_curve_cell, cells))
    else:
        rows = [_curve_cell(c) for c in cells]
    for name in cfg.baselines:
        res = evaluate_policy(model, baseline_policy(model, name, cfg.eval.gamma_eval), cfg.eval.episodes,
                              cfg.eval.max_len, cfg.eval.gamma_eval, cfg.eval.seed)
        for size in cfg.sizes:
            rows.append({"env": cfg.env, "policy": name, "train_size": int(size), "seed": "",
                         "mean_return": res.mean_return, "stderr": res.stderr,
                         "spectral_radius": None, "rank": None, "error": ""})
    return rows


def format_rows(rows, fields) -> List[List[str]]:
    return [[_fmt(row.get(f)) for f in fields] for row in rows]


def read_curve(path) -> Tuple[List[str], List[dict]]:
    import csv

    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return reader.fieldnames, list(reader)
