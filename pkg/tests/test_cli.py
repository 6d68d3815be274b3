import csv
import json
import subprocess
import sys

import pytest

from follow_object import cli

TINY = dict(env="Push-Simple", algo="her", seeds=[0], epochs=1, episodes_per_epoch=2,
            updates_per_epoch=4, cycles_per_epoch=2, batch_size=8, eval_rollouts=2,
            agent={"hidden": [8]},
            pipeline={"object_epochs": 1, "dataset_episodes": 30, "imaginer_epochs": 2})


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY))
    return p


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["--help"])
    assert e.value.code == 0
    assert "train-robot" in capsys.readouterr().out


def test_unknown_subcommand_and_flag_exit_two(capsys, config):
    with pytest.raises(SystemExit) as e:
        cli.main(["fly"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["train-robot", "--config", str(config), "--turbo"])
    assert e.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_missing_config_exits_two(tmp_path, capsys):
    assert cli.main(["train-robot", "--config", str(tmp_path / "nope.json")]) == 2
    assert "not found" in capsys.readouterr().err


def test_bad_config_key_exits_two(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({**TINY, "learning_rate": 1}))
    assert cli.main(["train-robot", "--config", str(p)]) == 2


def test_pipeline_commands(tmp_path, config):
    out = tmp_path / "out"
    assert cli.main(["train-object", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "object_policy" / "manifest.json").exists()
    assert cli.main(["gen-dataset", "--config", str(config), "--out", str(out), "--keep-failures"]) == 0
    assert (out / "locomotion_dataset.csv").exists()
    assert cli.main(["train-imaginer", "--config", str(config), "--out", str(out)]) == 0
    assert (out / "imaginer" / "imaginer.json").exists()
    robot = tmp_path / "robot"
    assert cli.main(["train-robot", "--config", str(config), "--algo", "fo", "--seed", "3",
                     "--imaginer", str(out / "imaginer"), "--out", str(robot)]) == 0
    rows = list(csv.DictReader(open(robot / "metrics.csv")))
    assert [(r["seed"], r["algo"]) for r in rows] == [("3", "fo")]
    assert cli.main(["evaluate", "--config", str(config), "--agent", str(robot / "seed_3" / "agent"),
                     "--rollouts", "3"]) == 0
    assert cli.main(["plot", str(robot / "metrics.csv"), "--out", str(tmp_path / "c.svg")]) == 0
    assert (tmp_path / "c.svg").read_text().startswith("<svg")


def test_missing_checkpoint_is_a_failure(tmp_path, config):
    assert cli.main(["evaluate", "--config", str(config), "--agent", str(tmp_path / "none")]) == 1


def test_repro_v1v2_matrix(tmp_path, config):
    out = tmp_path / "rep"
    assert cli.main(["repro-v1v2", "--config", str(config), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "matrix.csv")))
    assert rows[0] == ["trained_on", "test_PnP-Simple-v1", "test_PnP-Simple-v2"]
    assert [r[0] for r in rows[1:]] == ["PnP-Simple-v1", "PnP-Simple-v2"]
    assert all(0.0 <= float(v) <= 1.0 for r in rows[1:] for v in r[1:])


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "follow_object.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "repro-v1v2" in r.stdout
