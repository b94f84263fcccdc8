import csv

import pytest

from rl4rec import cli, gradsuite
from rl4rec.config import (RunConfig, apply_overrides, dump_config, load_config, parse_config,
                           set_key, valid_keys, validate)
from rl4rec.errors import ConfigError, NumericError


def test_defaults_are_prepopulated():
    cfg = RunConfig()
    assert cfg.dqn.memory_size == 6000
    assert cfg.dqn.gamma == 0.9
    assert cfg.dqn.minibatch == 128
    assert cfg.dqn.target_sync_every == 20
    assert cfg.dqn.epsilon(0) == 0.8


def test_dump_parse_roundtrip():
    cfg = apply_overrides(RunConfig(), ["encoder.kind=GRU", "dqn.gamma=0.5", "record_wallclock=false",
                                        "out=runs/x y"])
    assert parse_config(dump_config(cfg)) == cfg


def test_parse_comments_and_types():
    cfg = parse_config("# header\n\nseed = 7  # inline\nsim.threshold = 3.5\nsim.debias = no\n")
    assert (cfg.seed, cfg.sim.threshold, cfg.sim.debias) == (7, 3.5, False)


@pytest.mark.parametrize("text,msg", [
    ("nope = 1", "unknown config key 'nope'"),
    ("dqn.nope = 1", "unknown config key"),
    ("seed = abc", "bad value for seed"),
    ("seed", "expected 'key = value'"),
    ("dqn = 1", "names a section"),
])
def test_parse_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_unknown_key_lists_valid_keys():
    with pytest.raises(ConfigError) as e:
        set_key(RunConfig(), "encoder.kinds", "GRU")
    for key in ("encoder.kind", "dqn.gamma", "total_steps"):
        assert key in str(e.value)
    assert "encoder.kind" in valid_keys()


def test_validate_rejects_bad_choices(tmp_path):
    with pytest.raises(ConfigError):
        validate(set_key(RunConfig(), "agent", "sarsa"))
    with pytest.raises(ConfigError, match="train_path"):
        validate(set_key(RunConfig(), "dataset.kind", "coat"))
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.cfg")


# --- CLI ---------------------------------------------------------------------------------


def tiny_args(tmp_path, *extra):
    return ["--override", "dataset.kind=tiny", "--override", "total_steps=200",
            "--override", "eval_interval=100", "--override", "eval_batch=10",
            "--override", "dqn.minibatch=32", "--out", str(tmp_path / "run"), *extra]


def test_cli_run_then_eval(tmp_path, capsys):
    assert cli.main(["run", *tiny_args(tmp_path)]) == 0
    assert (tmp_path / "run" / "curve.csv").is_file()
    assert cli.main(["eval", str(tmp_path / "run"), "--batch", "5"]) == 0
    rows = list(csv.reader(open(tmp_path / "run" / "eval.csv")))
    assert rows[0][0] == "step" and len(rows) == 2
    assert "mean clicks" in capsys.readouterr().out


def test_cli_run_from_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("dataset.kind = tiny\ntotal_steps = 0\neval_batch = 5\n")
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    assert load_config(tmp_path / "o" / "config.cfg").seed == 3


def test_cli_missing_dataset_exits_one(tmp_path, capsys):
    code = cli.main(["run", "--override", "dataset.kind=coat",
                     "--override", f"dataset.train_path={tmp_path / 'nope'}",
                     "--override", f"dataset.test_path={tmp_path / 'nope'}"])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_cli_unknown_key_exits_one(capsys):
    assert cli.main(["run", "--override", "dqn.gama=0.5"]) == 1
    assert "valid keys" in capsys.readouterr().err


def test_cli_numeric_failure_exits_two(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise NumericError("loss became nan at learn step 3")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["run", *tiny_args(tmp_path)]) == 2
    assert "numeric failure" in capsys.readouterr().err


def test_cli_simfit_then_run_fitted(tmp_path):
    out = tmp_path / "sim"
    args = ["--override", "dataset.n_users=40", "--override", "dataset.n_items=30",
            "--override", "mf.epochs=5", "--out", str(out)]
    assert cli.main(["simfit", *args]) == 0
    for name in ("train_sim.mat", "eval_sim.mat", "propensities.mat"):
        assert (out / name).is_file()
    code = cli.main(["run", "--override", "dataset.kind=fitted",
                     "--override", f"dataset.train_sim={out / 'train_sim.mat'}",
                     "--override", f"dataset.eval_sim={out / 'eval_sim.mat'}",
                     "--override", "total_steps=0", "--override", "eval_batch=5",
                     "--out", str(tmp_path / "r")])
    assert code == 0


def test_cli_simfit_rejects_tiny(capsys):
    assert cli.main(["simfit", "--override", "dataset.kind=tiny"]) == 1


def test_cli_bench_prints_two_by_seven(tmp_path, monkeypatch, capsys):
    from rl4rec import harness

    monkeypatch.setattr(harness, "BENCH_SHAPES", {"Yahoo! R3": 40, "Coat": 30})
    code = cli.main(["bench", "--steps", "3", "--repeats", "1", "--warmup", "1",
                     "--override", "dqn.minibatch=2", "--out", str(tmp_path)])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3 and all(len(l.split(",")) == 8 for l in lines)
    assert (tmp_path / "bench.csv").read_text().strip().splitlines() == lines


def _fake_suite(rel):
    def run_suite(seed=0, **kw):
        return [gradsuite.GradResult("Avg", 1, 1e-7), gradsuite.GradResult("GRU", 3, rel)]
    return run_suite


def test_cli_gradcheck_exit_codes(monkeypatch, capsys):
    monkeypatch.setattr(gradsuite, "run_suite", _fake_suite(2e-5))
    assert cli.main(["gradcheck"]) == 0
    monkeypatch.setattr(gradsuite, "run_suite", _fake_suite(3e-4))
    assert cli.main(["gradcheck"]) == 2
    assert "1/2 checks passed" in capsys.readouterr().out


def test_gradcheck_suite_subset_passes():
    results = gradsuite.run_suite(seed=1, kinds=("Avg", "PLD"), n_states=3)
    assert results and all(r.ok for r in results)


def test_eval_batch_defaults_per_dataset():
    from rl4rec.config import eval_batch_size

    assert eval_batch_size(RunConfig()) == 256
    assert eval_batch_size(set_key(RunConfig(), "dataset.kind", "coat")) == 100
    assert eval_batch_size(set_key(RunConfig(), "eval_batch", 7)) == 7
