import json
import subprocess
import sys

import pytest

from nptlab.cli import main

SMALL = {"seeds": [0], "taus": [0.01], "train": {"steps": 20}}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(SMALL))
    return str(path)


def test_etf(capsys):
    assert main(["etf", "--K", "4", "--d", "6"]) == 0
    assert "Gram" in capsys.readouterr().out


def test_etf_bad_dims_exit_1():
    assert main(["etf", "--K", "5", "--d", "3"]) == 1


def test_unknown_subcommand_exit_1():
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_gradcheck(capsys, small_config):
    assert main(["gradcheck", "--config", small_config]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["max_rel_error"] < 1e-5 and rep["n_checked"] == 64


def test_gradcheck_vision_prompt(capsys, small_config):
    assert main(["gradcheck", "--config", small_config, "--vision-prompt"]) == 0
    assert json.loads(capsys.readouterr().out)["n_checked"] == 80


def test_train_writes_outputs(tmp_path, small_config):
    out = tmp_path / "t"
    assert main(["train", "--config", small_config, "--out", str(out)]) == 0
    assert (out / "trajectory.csv").exists() and (out / "checkpoint.npz").exists()


def test_b2n(tmp_path, capsys, small_config):
    assert main(["b2n", "--config", small_config, "--method", "baseline", "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["method"] == "baseline"


def test_sweep_then_plot(tmp_path, small_config):
    out = tmp_path / "s"
    assert main(["sweep", "--config", small_config, "--out", str(out)]) == 0
    (out / "fig_lcd.svg").unlink()
    assert main(["plot", "--out", str(out)]) == 0
    assert (out / "fig_lcd.svg").exists()


def test_plot_missing_file_exit_1(tmp_path):
    assert main(["plot", "--csv", str(tmp_path / "nope.csv")]) == 1


def test_bad_config_exit_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"taus": [2.0]}))
    assert main(["sweep", "--config", str(bad), "--out", str(tmp_path)]) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nptlab", "etf", "--K", "3", "--d", "3"], capture_output=True, text=True)
    assert r.returncode == 0 and "simplex ETF" in r.stdout
