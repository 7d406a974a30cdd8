import subprocess
import sys

import numpy as np
import pytest

from drlmcts import cli
from drlmcts.agent import Agent
from drlmcts.bench import read_csv
from drlmcts.errors import TrainingDivergenceError

TINY = """
n_t = 2
n_r = 2
modulation = BPSK
snr_grid_db = 4 10
trials = 60
seed = 1
detectors = ml | mmse | mcts playouts=5 | drl | drl_mcts playouts=4 c_puct=5
train.total_updates = 3
train.episodes_per_update = 4
train.learning_rate = 1e-3
"""


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text(TINY)
    return path


@pytest.fixture
def trained(tiny, tmp_path):
    ckpt = tmp_path / "tiny.ckpt"
    assert cli.main(["train", "--scenario", str(tiny), "--out", str(ckpt),
                     "--log", str(tmp_path / "log.csv")]) == 0
    return ckpt


def test_train_writes_loadable_checkpoint_and_log(trained, tmp_path):
    agent = Agent.load(trained, 0.25)
    assert agent.actor.out_dim == 2
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert len(lines) == 1 + 3


def test_bench_writes_sorted_csv(tiny, trained, tmp_path):
    out = tmp_path / "ser.csv"
    assert cli.main(["bench", "--scenario", str(tiny), "--ckpt", str(trained),
                     "--out", str(out), "--workers", "1"]) == 0
    rows = read_csv(out, 2)
    assert len(rows) == 5 * 2
    assert [(r.detector, r.snr_db) for r in rows] == sorted((r.detector, r.snr_db) for r in rows)
    assert all(r.trials == 60 for r in rows)


def test_bench_is_reproducible(tiny, trained, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        cli.main(["bench", "--scenario", str(tiny), "--ckpt", str(trained),
                  "--out", str(tmp_path / name)])
        outs.append([(r.detector, r.snr_db, r.symbol_errors) for r in read_csv(tmp_path / name, 2)])
    assert outs[0] == outs[1]


def test_detect_prints_rows(tiny, trained, capsys):
    assert cli.main(["detect", "--scenario", str(tiny), "--ckpt", str(trained),
                     "--snr", "10", "--n", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "trial,detector,x_true,x_hat,symbol_errors"
    assert len(lines) == 1 + 3 * 5
    trial, det, truth, est, errs = lines[1].split(",")
    assert det == "ml" and len(truth.split()) == 2
    assert int(errs) == sum(a != b for a, b in zip(truth.split(), est.split()))


def test_missing_checkpoint_is_configuration_error(tiny, tmp_path):
    assert cli.main(["bench", "--scenario", str(tiny), "--out", str(tmp_path / "x.csv")]) == 2
    assert cli.main(["bench", "--scenario", str(tiny), "--ckpt", str(tmp_path / "none"),
                     "--out", str(tmp_path / "x.csv")]) == 2


def test_bad_scenario_and_checkpoint(tmp_path, tiny):
    bad = tmp_path / "bad.txt"
    bad.write_text("n_t = 2\n")
    assert cli.main(["detect", "--scenario", str(bad), "--snr", "5"]) == 2
    assert cli.main(["detect", "--scenario", str(tmp_path / "absent.txt"), "--snr", "5"]) == 2
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a checkpoint")
    assert cli.main(["detect", "--scenario", str(tiny), "--ckpt", str(junk), "--snr", "5"]) == 2


def test_baseline_only_scenario_needs_no_checkpoint(tmp_path, capsys):
    path = tmp_path / "ml.txt"
    path.write_text("n_t = 2\nn_r = 2\ndetectors = ml | mmse\n")
    assert cli.main(["detect", "--scenario", str(path), "--snr", "20", "--n", "2"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 5


def test_divergence_exits_3_and_keeps_last_good(tiny, tmp_path, monkeypatch):
    good = Agent.create(2, 2, 2, 2, seed=0)

    def diverging(cfg, scenario, **kw):
        raise TrainingDivergenceError("loss is NaN", last_good=good)

    monkeypatch.setattr(cli, "train", diverging)
    out = tmp_path / "diverged.ckpt"
    assert cli.main(["train", "--scenario", str(tiny), "--out", str(out)]) == 3
    loaded = Agent.load(out, 0.25)
    x = np.ones(loaded.actor.in_dim)
    assert np.array_equal(loaded.actor(x), good.actor(x))


def test_module_entry_point(tmp_path):
    path = tmp_path / "ml.txt"
    path.write_text("n_t = 1\nn_r = 1\ndetectors = ml\n")
    done = subprocess.run([sys.executable, "-m", "drlmcts", "detect", "--scenario", str(path),
                           "--snr", "10", "--n", "1"], capture_output=True, text=True)
    assert done.returncode == 0
    assert done.stdout.startswith("trial,detector")
    bad = subprocess.run([sys.executable, "-m", "drlmcts", "bench", "--scenario",
                          str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o.csv")],
                         capture_output=True, text=True)
    assert bad.returncode == 2
