import filecmp
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from gaitsea.cli import build_parser, main
from gaitsea.config import DEFAULTS, RunConfig, parse_config
from gaitsea.errors import ParseError
from gaitsea.gaitdata import load_dataset
from gaitsea.mlpnet import load_network

SMALL = """\
# tiny run for tests
generator.speeds = 1.0, 2.5
generator.cycles_per_speed = 6
network.hidden_width = 8
network.hidden_stage1 = 2
network.hidden_stage2 = 2
training.epochs = 3
training.k_folds = 3
plant.cycles = 3
"""

COMMANDS = ("gen-data", "train", "eval", "infer", "simulate", "doe-stats", "report")


def _run(tmp, *argv, cfg=None):
    args = list(argv) + ["--out-dir", str(tmp)]
    if cfg is not None:
        args += ["--config", str(cfg)]
    return main(args)


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return p


def _pipeline(out, cfg, seed=3):
    codes = [
        _run(out, "gen-data", "--seed", str(seed), cfg=cfg),
        _run(out, "train", "--seed", str(seed), cfg=cfg),
        _run(out, "eval", "--seed", str(seed), cfg=cfg),
        _run(out, "infer", "--seed", str(seed), "--cycles", "2", "--impulse-fraction", "0.05", cfg=cfg),
        _run(out, "simulate", "--seed", str(seed), cfg=cfg),
        _run(out, "doe-stats", "--demo", "--seed", str(seed), cfg=cfg),
        _run(out, "report", "--seed", str(seed), cfg=cfg),
    ]
    return codes


# -- config -------------------------------------------------------------------


def test_config_defaults_and_overrides():
    assert parse_config("default").values == RunConfig().values
    cfg = parse_config("training.epochs = 7\n# comment\n\nplant.hard_stops = yes\n")
    assert cfg["training.epochs"] == 7 and cfg["plant.hard_stops"] is True
    assert cfg["network.hidden_width"] == DEFAULTS["network"]["hidden_width"]


def test_config_render_round_trip():
    cfg = parse_config(SMALL)
    assert parse_config(cfg.render()).values == cfg.values
    assert parse_config(RunConfig().render()).values == RunConfig().values


def test_config_errors_name_line():
    with pytest.raises(ParseError) as err:
        parse_config("training.epochs = 3\ntraining.nope = 1\n")
    assert err.value.line == 2
    with pytest.raises(ParseError):
        parse_config("training.epochs = three\n")
    with pytest.raises(ParseError):
        parse_config("just words\n")


def test_with_seed_sets_every_seed():
    cfg = RunConfig().with_seed(9)
    assert cfg["generator.seed"] == cfg["network.seed"] == cfg["training.fold_seed"] == 9
    assert RunConfig()["generator.seed"] == 0


# -- dispatch -----------------------------------------------------------------


def test_no_arguments_prints_help(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command_and_flag(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err
    assert _run(tmp_path, "gen-data", "--bogus") == 1
    assert "unrecognized" in capsys.readouterr().err


def test_bad_config_is_data_error(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("training.nope = 1\n")
    assert _run(tmp_path, "gen-data", cfg=bad) == 2
    assert _run(tmp_path, "gen-data", cfg=tmp_path / "missing.cfg") == 2


def test_missing_model_is_data_error(tmp_path):
    assert _run(tmp_path, "infer") == 2
    assert _run(tmp_path, "report") == 2


@pytest.mark.parametrize("command", COMMANDS)
def test_help_lists_every_flag(command, capsys):
    assert main([command, "--help"]) == 0
    text = capsys.readouterr().out
    sub = build_parser()._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for opt in action.option_strings:
            assert opt in text
    assert "default" in text


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "gaitsea.cli"], capture_output=True, text=True)
    assert res.returncode == 1 and "usage" in res.stderr


# -- end to end ----------------------------------------------------------------


def test_pipeline_outputs(tmp_path, small_cfg):
    out = tmp_path / "run"
    assert _pipeline(out, small_cfg) == [0] * 7
    for sub in ("data", "models", "reports", "plots"):
        assert (out / sub).is_dir()
    net = load_network(out / "models" / "model.gmlp")
    assert net.weights[0].shape == (8, 6)
    assert (out / "reports" / "metrics.csv").read_text().startswith("dimension,mse,rmse,mae,count")
    head = (out / "reports" / "tracking_summary.csv").read_text().splitlines()[0]
    assert "delay_pct" in head.split(",")
    for svg in ("angle.svg", "torque.svg", "power.svg", "loss.svg", "stream.svg"):
        assert (out / "plots" / svg).read_text().startswith("<svg")
    assert "pearson" in (out / "reports" / "doe_report.csv").read_text()
    assert parse_config((out / "effective_config.txt").read_text())["training.epochs"] == 3


def test_simulate_default_speed(tmp_path, small_cfg):
    assert _run(tmp_path, "simulate", "--speed", "1.2", cfg=small_cfg) == 0
    lines = (tmp_path / "reports" / "tracking_summary.csv").read_text().splitlines()
    assert lines[0].split(",")[1] == "delay_pct" and len(lines) == 4


def _strip_latency(path: Path) -> list[str]:
    rows = path.read_text().splitlines()
    col = rows[0].split(",").index("latency_us")
    return [",".join(v for i, v in enumerate(r.split(",")) if i != col) for r in rows]


def test_seeded_runs_are_reproducible(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _pipeline(a, small_cfg) == [0] * 7
    assert _pipeline(b, small_cfg) == [0] * 7
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    for rel in files:
        if rel.name in ("stream.csv", "stream.svg"):
            continue
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
    assert _strip_latency(a / "reports" / "stream.csv") == _strip_latency(b / "reports" / "stream.csv")


def test_effective_config_round_trip(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run(a, "gen-data", "--seed", "5", cfg=small_cfg) == 0
    echoed = a / "effective_config.txt"
    assert _run(b, "gen-data", cfg=echoed) == 0
    assert (b / "effective_config.txt").read_text() == echoed.read_text()
    assert filecmp.cmp(a / "data" / "dataset.csv", b / "data" / "dataset.csv", shallow=False)


def test_different_seed_changes_data(tmp_path, small_cfg):
    assert _run(tmp_path / "a", "gen-data", "--seed", "1", cfg=small_cfg) == 0
    assert _run(tmp_path / "b", "gen-data", "--seed", "2", cfg=small_cfg) == 0
    da = load_dataset(tmp_path / "a" / "data" / "dataset.csv")
    db = load_dataset(tmp_path / "b" / "data" / "dataset.csv")
    assert not np.array_equal(da.imu, db.imu)
    assert np.array_equal(da.outputs, db.outputs)
