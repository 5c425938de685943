"""CLI surface: config parsing, subcommands, output layout, determinism."""

import json
import os

import numpy as np
import pytest

from se3track.cli import load_config, main
from se3track.errors import ConfigError
from se3track.report import METRICS_COLUMNS


def write_config(path, text):
    path.write_text(text)
    return str(path)


def test_load_config_roundtrip(tmp_path):
    cfg_path = write_config(
        tmp_path / "exp.cfg",
        """
[run]
n_epochs = 6
mc_runs = 2
policy = parallel
seed = 99

[noise]
xi_w_std = 0.05 0.05 0.05 0.005 0.005 0.005
snr_db = 12.5

[flags]
perfect_init = true
""",
    )
    cfg = load_config(cfg_path)
    assert cfg.n_epochs == 6
    assert cfg.mc_runs == 2
    assert cfg.policy == "parallel"
    assert cfg.seed == 99
    assert cfg.snr_db == 12.5
    assert cfg.perfect_init is True
    assert cfg.xi_w_std == (0.05, 0.05, 0.05, 0.005, 0.005, 0.005)


def test_load_config_unknown_key(tmp_path):
    path = write_config(tmp_path / "bad.cfg", "[x]\nwarp_speed = 9\n")
    with pytest.raises(ConfigError, match="warp_speed"):
        load_config(path)


def test_load_config_bad_value(tmp_path):
    path = write_config(tmp_path / "bad.cfg", "[x]\nn_epochs = pony\n")
    with pytest.raises(ConfigError, match="n_epochs"):
        load_config(path)


def test_load_config_syntax_error(tmp_path):
    path = write_config(tmp_path / "bad.cfg", "[x]\nno equals sign here\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_run_missing_config_exits_one(tmp_path, capsys):
    rc = main(["run", "--config", str(tmp_path / "absent.cfg"), "--out", str(tmp_path)])
    assert rc == 1
    assert "absent.cfg" in capsys.readouterr().err


def test_run_writes_expected_tree(tmp_path):
    out = tmp_path / "out"
    rc = main([
        "run", "--policy", "parallel", "--epochs", "5", "--mc-runs", "2",
        "--seed", "3", "--out", str(out), "--no-figures",
    ])
    assert rc == 0
    names = sorted(os.listdir(out))
    assert names == ["manifest.json", "metrics_parallel.csv", "trajectory_parallel.csv"]
    header = (out / "metrics_parallel.csv").read_text().splitlines()[0]
    assert header == ",".join(METRICS_COLUMNS)
    rows = (out / "metrics_parallel.csv").read_text().splitlines()
    assert len(rows) == 1 + 5  # header + one row per epoch
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3
    assert manifest["config"]["n_epochs"] == 5


def test_run_determinism_across_invocations_and_threads(tmp_path):
    outs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        rc = main([
            "run", "--policy", "all", "--epochs", "4", "--mc-runs", "2",
            "--seed", "7", "--threads", threads, "--out", str(out), "--no-figures",
        ])
        assert rc == 0
        outs.append(out)
    for fname in os.listdir(outs[0]):
        if not fname.endswith(".csv"):
            continue
        ref = (outs[0] / fname).read_bytes()
        assert (outs[1] / fname).read_bytes() == ref
        assert (outs[2] / fname).read_bytes() == ref


def test_run_epoch_override_shortens_traces(tmp_path):
    out = tmp_path / "short"
    main([
        "run", "--policy", "parallel", "--epochs", "3", "--mc-runs", "1",
        "--out", str(out), "--no-figures",
    ])
    rows = (out / "metrics_parallel.csv").read_text().splitlines()
    assert len(rows) == 4


def test_fig1_emits_six_csv_panels(tmp_path):
    out = tmp_path / "fig"
    rc = main([
        "fig1", "--epochs", "4", "--mc-runs", "2", "--seed", "5",
        "--out", str(out), "--no-figures",
    ])
    assert rc == 0
    files = sorted(os.listdir(out))
    csvs = [f for f in files if f.endswith(".csv")]
    assert len(csvs) == 6
    assert "manifest.json" in files


def test_fig1_renders_figures(tmp_path):
    out = tmp_path / "figpng"
    rc = main([
        "fig1", "--epochs", "4", "--mc-runs", "2", "--seed", "5", "--out", str(out),
    ])
    assert rc == 0
    pngs = [f for f in os.listdir(out) if f.endswith(".png")]
    assert len(pngs) == 3
    for png in pngs:
        assert (out / png).stat().st_size > 10_000


def test_check_fast_passes(capsys):
    rc = main(["check", "--level", "fast"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out and "FAIL" not in out


def test_check_detects_corrupted_jacobian():
    from se3track.verify import jacobian_battery

    def corrupt(name, mat):
        return mat * 1.001 if name == "J_h" else mat

    result = jacobian_battery(n_cases=5, corrupt=corrupt)
    assert not result.ok
