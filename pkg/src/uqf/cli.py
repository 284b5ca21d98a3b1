"""Command line driver.

Exit codes: 0 success, 1 self-check failure, 2 configuration error,
3 learning error, 4 I/O error.
"""
import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import experiment as ex
from .exceptions import InvalidModelError, UQFError
from .planner import append_metrics_csv, evaluate_policy, policy_iteration
from .pomdp import dump_episodes, load_episodes
from .policies import policy_from_description

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_LEARN, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("uqf")


class IOFailure(Exception):
    pass


def _config(args):
    cfg = ex.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "env", None):
        cfg.env = args.env
        cfg.base_dir = Path.cwd()
    return cfg


def _model(cfg):
    return ex.resolve_env(cfg.env, cfg.slip, cfg.base_dir)


def _out_dir(args):
    out = Path(args.out or ".")
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IOFailure(f"cannot create {out}: {exc.strerror}") from exc
    return out


def _write_json(path, obj):
    try:
        Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror}") from exc


def _read_json(path, what):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IOFailure(f"cannot read {what} {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise IOFailure(f"{what} {path} is not valid JSON: {exc}") from exc


# -- commands ------------------------------------------------------------------


def cmd_sample(args):
    cfg = _config(args)
    model = _model(cfg)
    count = args.count if args.count is not None else cfg.count
    if count <= 0:
        raise ex.ConfigError("count must be positive")
    episodes = ex.sample_uniform(model, count, cfg.length, cfg.seed)
    out = _out_dir(args)
    path = out / "episodes.jsonl"
    try:
        with open(path, "w") as fh:
            dump_episodes(episodes, fh)
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror}") from exc
    _write_json(out / "manifest.json", {
        "env": cfg.env,
        "env_sha256": ex.env_hash(model),
        "seed": cfg.seed,
        "count": count,
        "length": cfg.length,
        "num_actions": model.num_actions,
        "num_obs": model.num_obs,
    })
    print(f"wrote {count} episodes to {path}")
    return EXIT_OK


def cmd_learn(args):
    cfg = _config(args)
    if not args.episodes:
        raise ex.ConfigError("--episodes is required")
    try:
        with open(args.episodes) as fh:
            episodes = load_episodes(fh)
    except OSError as exc:
        raise IOFailure(f"cannot read episodes {args.episodes}: {exc.strerror}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise IOFailure(f"episodes file {args.episodes} is malformed: {exc}") from exc
    model = _model(cfg)
    policy, report = ex.learn_policy(model, episodes, cfg.learn)
    out = _out_dir(args)
    _write_json(out / "model.json", {
        "env": cfg.env,
        "train_size": len(episodes),
        "seed": cfg.seed,
        "learn": cfg.learn.to_dict(),
        "policy": policy.describe(),
    })
    _write_json(out / "report.json", report.to_dict())
    print(f"rank {report.rank}, spectral radius {report.spectral_radius:.4f}, "
          f"basis {report.num_prefixes}x{report.num_suffixes}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _config(args)
    model = _model(cfg)
    seed = cfg.eval.seed if args.seed is None else args.seed
    if args.baseline:
        policy = ex.baseline_policy(model, args.baseline, cfg.eval.gamma_eval)
        train_size = 0
    else:
        if not args.model:
            raise ex.ConfigError("either --model or --baseline is required")
        saved = _read_json(args.model, "model")
        try:
            policy = policy_from_description(saved["policy"])
        except (KeyError, ValueError, TypeError) as exc:
            raise IOFailure(f"model {args.model} is malformed: {exc}") from exc
        if (policy.num_actions, policy.uqf.num_obs) != (model.num_actions, model.num_obs):
            raise ex.ConfigError("model alphabet does not match the environment")
        train_size = saved.get("train_size", "")
    res = evaluate_policy(model, policy, cfg.eval.episodes, cfg.eval.max_len, cfg.eval.gamma_eval, seed)
    row = {"env": cfg.env, "train_size": train_size, "seed": seed,
           "mean_return": res.mean_return, "stderr": res.stderr}
    path = Path(args.out or "eval.csv")
    if path.is_dir():
        path = path / "eval.csv"
    _append_csv(path, ex.EVAL_FIELDS, [row])
    print(f"{cfg.env}: mean return {res.mean_return:.4f} +- {res.stderr:.4f}")
    return EXIT_OK


def _append_csv(path, fields, rows):
    try:
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if new:
                writer.writerow(fields)
            writer.writerows(ex.format_rows(rows, fields))
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror}") from exc


def cmd_curve(args):
    cfg = _config(args)
    model = _model(cfg)
    rows = ex.curve_rows(model, cfg, jobs=args.jobs)
    path = _out_dir(args) / "curve.csv"
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ex.CURVE_FIELDS)
            writer.writerows(ex.format_rows(rows, ex.CURVE_FIELDS))
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc.strerror}") from exc
    failed = sum(1 for r in rows if r.get("error"))
    print(f"wrote {len(rows)} rows to {path} ({failed} failed cells)")
    return EXIT_OK


def cmd_iterate(args):
    cfg = _config(args)
    model = _model(cfg)
    result = policy_iteration(model, cfg.iteration_config(), seed=cfg.seed)
    out = _out_dir(args)
    try:
        append_metrics_csv(result.metrics, out / "metrics.csv")
    except OSError as exc:
        raise IOFailure(f"cannot write metrics: {exc.strerror}") from exc
    if result.policy is not None:
        _write_json(out / "model.json", {"env": cfg.env, "seed": cfg.seed, "policy": result.policy.describe()})
    for row in result.metrics:
        print(f"iter {row['iter']}: eps {row['epsilon']:.3f} return {row['mean_return']:.4f}"
              + (f" ({row['error']})" if "error" in row else ""))
    return EXIT_OK if result.policy is not None else EXIT_LEARN


def cmd_selfcheck(args):
    from .selfcheck import perturb_transition, run_selfcheck

    hook = perturb_transition(args.perturb) if args.perturb else None
    results = run_selfcheck(hook)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


# -- parser --------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="uqf", description="Spectral learning of unnormalised Q functions.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="experiment config (JSON)")
        sp.add_argument("--env", help="builtin:A|B|C, a model .json or a grid layout file")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("sample", help="sample uniform-policy episodes")
    common(sp, "output directory (episodes.jsonl, manifest.json)")
    sp.add_argument("--count", type=int, help="number of episodes (overrides config)")
    sp.set_defaults(func=cmd_sample)

    sp = sub.add_parser("learn", help="learn a UQF policy from episodes")
    common(sp, "output directory (model.json, report.json)")
    sp.add_argument("--episodes", help="episodes JSONL")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("eval", help="evaluate a model or a baseline; appends one CSV row")
    common(sp, "CSV file to append to (default eval.csv)")
    sp.add_argument("--model", help="model.json written by learn")
    sp.add_argument("--baseline", choices=("random", "optimal"))
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("curve", help="learning curve over sizes x seeds")
    common(sp, "output directory (curve.csv)")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes (1 = single shard)")
    sp.set_defaults(func=cmd_curve)

    sp = sub.add_parser("iterate", help="epsilon-greedy policy iteration")
    common(sp, "output directory (metrics.csv, model.json)")
    sp.set_defaults(func=cmd_iterate)

    sp = sub.add_parser("selfcheck", help="compare automata against brute-force oracles")
    sp.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvalidModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UQFError as exc:
        print(f"learning error: {exc}", file=sys.stderr)
        return EXIT_LEARN
    except IOFailure as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
