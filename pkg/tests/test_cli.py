import csv
import json

import numpy as np
import pytest

from conftest import make_chain
from uqf.cli import EXIT_CONFIG, EXIT_IO, EXIT_LEARN, EXIT_OK, main
from uqf.policies import policy_from_description, replay
from uqf.wfa import Wfa, evaluate


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def chain_setup(tmp_path):
    env = tmp_path / "chain.json"
    env.write_text(make_chain().to_json())
    cfg = _write(tmp_path / "cfg.json", {
        "env": "chain.json", "count": 2000, "length": 6,
        "learn": {"rank": 2, "gamma": 0.5, "basis": {"max_prefixes": 10, "max_suffixes": 10, "max_len": 3}},
        "eval": {"episodes": 50, "max_len": 20},
    })
    assert main(["sample", "--config", cfg, "--out", str(tmp_path / "data")]) == EXIT_OK
    return tmp_path, cfg


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- sample ---------------------------------------------------------------------


def test_sample_writes_count_and_manifest(tmp_path):
    out = tmp_path / "s"
    assert main(["sample", "--env", "builtin:A", "--count", "10", "--out", str(out), "--seed", "3"]) == EXIT_OK
    assert len((out / "episodes.jsonl").read_text().splitlines()) == 10
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["count"] == 10 and manifest["seed"] == 3
    assert len(manifest["env_sha256"]) == 64


def test_sample_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        main(["sample", "--env", "builtin:B", "--count", "25", "--out", str(tmp_path / name)])
    for f in ("episodes.jsonl", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_corrupt_env_is_config_error(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json")
    assert main(["sample", "--env", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert str(bad) in capsys.readouterr().err


def test_missing_env_and_config(tmp_path, capsys):
    assert main(["sample", "--env", str(tmp_path / "nope.txt")]) == EXIT_CONFIG
    assert "nope.txt" in capsys.readouterr().err
    assert main(["sample", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG


def test_unknown_config_key(tmp_path):
    cfg = _write(tmp_path / "c.json", {"envv": "builtin:A"})
    assert main(["sample", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


def test_layout_file_env(tmp_path):
    layout = tmp_path / "room.txt"
    layout.write_text("#####\n#S..#\n#..G#\n#####\n")
    assert main(["sample", "--env", str(layout), "--count", "3", "--out", str(tmp_path / "o")]) == EXIT_OK


# -- learn ---------------------------------------------------------------------------


def test_learn_chain_prefers_swap(chain_setup):
    tmp, cfg = chain_setup
    assert main(["learn", "--config", cfg, "--episodes", str(tmp / "data/episodes.jsonl"),
                 "--out", str(tmp / "m")]) == EXIT_OK
    saved = json.loads((tmp / "m/model.json").read_text())
    assert saved["train_size"] == 2000
    assert policy_from_description(saved["policy"]).greedy_action() == 1
    report = json.loads((tmp / "m/report.json").read_text())
    assert {"singular_values", "spectral_radius", "num_prefixes", "num_suffixes", "seconds"} <= set(report)


def test_learn_rank_too_high(chain_setup, capsys):
    tmp, _ = chain_setup
    cfg = _write(tmp / "hi.json", {"env": "chain.json", "learn": {"rank": 50}})
    code = main(["learn", "--config", cfg, "--episodes", str(tmp / "data/episodes.jsonl"), "--out", str(tmp / "m")])
    assert code == EXIT_LEARN
    assert "rank" in capsys.readouterr().err


def test_learn_missing_episodes(chain_setup):
    tmp, cfg = chain_setup
    assert main(["learn", "--config", cfg, "--episodes", str(tmp / "missing.jsonl")]) == EXIT_IO


def test_learn_identity_compression_matches_plain(chain_setup):
    tmp, _ = chain_setup
    learn = {"rank": 2, "gamma": 0.5, "basis": {"max_prefixes": 10, "max_suffixes": 10, "max_len": 3}}
    comp = dict(learn, compressed={"enabled": True, "projection": "identity"})
    models = []
    for name, lc in (("plain", learn), ("comp", comp)):
        cfg = _write(tmp / f"{name}.json", {"env": "chain.json", "learn": lc})
        main(["learn", "--config", cfg, "--episodes", str(tmp / "data/episodes.jsonl"), "--out", str(tmp / name)])
        models.append(Wfa.from_dict(json.loads((tmp / name / "model.json").read_text())["policy"]["uqf"]))
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = [(int(rng.integers(2)), 0) for _ in range(int(rng.integers(0, 6)))]
        assert abs(evaluate(models[0], w) - evaluate(models[1], w)) <= 1e-10


# -- eval --------------------------------------------------------------------------------


def test_eval_baselines_append_rows(tmp_path):
    out = tmp_path / "eval.csv"
    cfg = _write(tmp_path / "c.json", {"eval": {"episodes": 100}})
    for baseline in ("random", "optimal", "random"):
        assert main(["eval", "--config", cfg, "--env", "builtin:A", "--baseline", baseline, "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert list(rows[0]) == ["env", "train_size", "seed", "mean_return", "stderr"]
    assert len(rows) == 3
    assert rows[0] == rows[2]
    assert float(rows[1]["mean_return"]) > float(rows[0]["mean_return"])


def test_eval_model(chain_setup):
    tmp, cfg = chain_setup
    main(["learn", "--config", cfg, "--episodes", str(tmp / "data/episodes.jsonl"), "--out", str(tmp / "m")])
    out = tmp / "e.csv"
    assert main(["eval", "--config", cfg, "--model", str(tmp / "m/model.json"), "--out", str(out)]) == EXIT_OK
    (row,) = _rows(out)
    assert row["train_size"] == "2000"
    assert float(row["mean_return"]) > 0


def test_eval_requires_model_or_baseline(tmp_path):
    assert main(["eval", "--env", "builtin:A", "--out", str(tmp_path / "e.csv")]) == EXIT_CONFIG
    assert main(["eval", "--env", "builtin:A", "--model", str(tmp_path / "no.json")]) == EXIT_IO


# -- curve ---------------------------------------------------------------------------------


def _curve_config(tmp_path, **extra):
    cfg = {"env": "builtin:A", "sizes": [100, 800], "seeds": [0, 1], "eval": {"episodes": 100}}
    cfg.update(extra)
    return _write(tmp_path / "curve.json", cfg)


def test_curve_rows_and_determinism(tmp_path):
    cfg = _curve_config(tmp_path)
    assert main(["curve", "--config", cfg, "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["curve", "--config", cfg, "--out", str(tmp_path / "b")]) == EXIT_OK
    a = (tmp_path / "a/curve.csv").read_bytes()
    assert a == (tmp_path / "b/curve.csv").read_bytes()
    rows = _rows(tmp_path / "a/curve.csv")
    uqf_rows = [r for r in rows if r["policy"] == "uqf"]
    assert len(uqf_rows) == 4
    assert {(r["train_size"], r["seed"]) for r in uqf_rows} == {("100", "0"), ("100", "1"), ("800", "0"), ("800", "1")}
    random_rows = [r for r in rows if r["policy"] == "random"]
    assert len(random_rows) == 2 and len({r["mean_return"] for r in random_rows}) == 1
    assert len([r for r in rows if r["policy"] == "optimal"]) == 2


def test_curve_isolates_failures(tmp_path):
    cfg = _curve_config(tmp_path, learn={"rank": 60, "basis": {"max_prefixes": 10}}, baselines=[])
    assert main(["curve", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "curve.csv")
    assert len(rows) == 4
    assert all(r["mean_return"] == "" and "RankDeficiencyError" in r["error"] for r in rows)


# -- iterate / selfcheck ---------------------------------------------------------------------


def test_iterate_writes_metrics(tmp_path):
    cfg = _write(tmp_path / "it.json", {
        "env": "builtin:A", "eval": {"episodes": 50},
        "iterate": {"iterations": 2, "episodes_per_iter": 300},
    })
    assert main(["iterate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "metrics.csv")
    assert [r["epsilon"] for r in rows] == ["1.0", "0.5"]
    assert (tmp_path / "model.json").exists()


def test_selfcheck_passes(capsys):
    assert main(["selfcheck"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "max_error" in out


def test_selfcheck_detects_perturbation(capsys):
    assert main(["selfcheck", "--perturb", "1e-3"]) != EXIT_OK
    first = capsys.readouterr().out.splitlines()[0]
    assert first.startswith("FAIL") and "reward-automaton" in first
