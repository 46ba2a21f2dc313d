"""End-to-end tests for the command-line workflow.

Every command runs in-process through Typer's test runner on small
generated datasets.
"""
from pathlib import Path

import pandas as pd
import pytest
import yaml
from typer.testing import CliRunner

from paeekit import __version__
from paeekit.cli import app
from paeekit.models import load_artifact

runner = CliRunner()

QUICK_CONFIG = {
    "generator": {"n_subjects": 3, "seed": 7, "duration_scale": 0.2},
    "cnn_lstm": {"conv_channels": [4, 4], "lstm_hidden": 6},
    "train": {"epochs": 1, "batch_size": 64},
}


@pytest.fixture
def quick_config(temp_dir: Path) -> Path:
    path = temp_dir / "quick.yml"
    path.write_text(yaml.safe_dump(QUICK_CONFIG))
    return path


def _invoke(*args: str):
    return runner.invoke(app, list(args))


@pytest.mark.e2e
def test_cli_help_and_version():
    """Test the help text and version command."""
    result = _invoke("--help")
    assert result.exit_code == 0
    for command in ("synth", "run", "stats", "report", "all"):
        assert command in result.output

    result = _invoke("version")
    assert result.exit_code == 0
    assert __version__ in result.output


@pytest.mark.e2e
def test_synth_command(quick_config: Path, temp_dir: Path):
    """Test synth writes one directory per subject and the manifest."""
    out = temp_dir / "data"
    result = _invoke("synth", "--config", str(quick_config), "--out", str(out), "--n-subjects", "2")
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in out.iterdir()) == ["S01", "S02", "manifest.txt"]
    assert (out / "S01" / "truth_paee.csv").is_file()


@pytest.mark.e2e
def test_run_stats_and_report(quick_config: Path, synthetic_root: Path, temp_dir: Path):
    """Test run -> stats -> report on a partial grid."""
    out = temp_dir / "run"
    result = _invoke(
        "run", "--config", str(quick_config), "--data", str(synthetic_root), "--out", str(out),
        "--compositions", "pelvis-acc,l-wrist-acc", "--models", "lr",
    )
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out / "results.csv")
    assert list(frame.columns) == ["composition", "model", "subject", "nrmse", "r2"]
    assert len(frame) == 6
    assert (out / "traces" / "trace_pelvis-acc_LR_S01.csv").is_file()
    assert (out / "traces" / "labels_S01.csv").is_file()
    assert (out / "models" / "l-wrist-acc_LR_S03.json").is_file()
    assert not (out / "failures.csv").exists()

    # half the grid is missing
    result = _invoke("stats", "--results", str(out / "results.csv"))
    assert result.exit_code == 4
    assert not (out / "stats_report.txt").exists()

    result = _invoke("report", "--traces", str(out / "traces"))
    assert result.exit_code == 0, result.output
    plots = sorted((out / "report").glob("*.svg"))
    assert len(plots) == 6
    summary = (out / "report" / "summary.md").read_text()
    assert "pelvis-acc" in summary
    assert "## Fitted linear models" in summary


@pytest.mark.e2e
def test_repeated_runs_are_identical(quick_config: Path, synthetic_root: Path, temp_dir: Path):
    """Test two runs with the same configuration write byte-identical results."""
    for name in ("a", "b"):
        result = _invoke(
            "run", "--config", str(quick_config), "--data", str(synthetic_root), "--out", str(temp_dir / name),
            "--compositions", "3-acc", "--models", "LR", "--seed", "3",
        )
        assert result.exit_code == 0, result.output
    assert (temp_dir / "a" / "results.csv").read_bytes() == (temp_dir / "b" / "results.csv").read_bytes()
    assert (
        (temp_dir / "a" / "models" / "3-acc_LR_S02.json").read_bytes()
        == (temp_dir / "b" / "models" / "3-acc_LR_S02.json").read_bytes()
    )


@pytest.mark.e2e
def test_error_exit_codes(quick_config: Path, synthetic_root: Path, temp_dir: Path):
    """Test configuration, I/O and missing-input failures map to their exit codes."""
    result = _invoke("run", "--config", str(quick_config), "--data", str(synthetic_root), "--models", "XGB")
    assert result.exit_code == 2
    assert "Error:" in result.output

    result = _invoke("run", "--config", str(quick_config))
    assert result.exit_code == 2

    result = _invoke("synth", "--no-such-flag")
    assert result.exit_code == 2

    (temp_dir / "empty").mkdir()
    result = _invoke("report", "--traces", str(temp_dir / "empty"))
    assert result.exit_code == 3

    blocker = temp_dir / "occupied"
    blocker.write_text("not a directory")
    result = _invoke("synth", "--config", str(quick_config), "--out", str(blocker))
    assert result.exit_code == 3

    result = _invoke("run", "--config", str(quick_config), "--data", str(temp_dir / "missing"))
    assert result.exit_code == 3


@pytest.mark.e2e
def test_config_generate(temp_dir: Path):
    """Test a generated configuration file loads back."""
    path = temp_dir / "paeekit.yml"
    result = _invoke("config", "--generate", "--path", str(path))
    assert result.exit_code == 0
    data = yaml.safe_load(path.read_text())
    assert data["window"]["window"] == 30
    result = _invoke("config", "--show", "--path", str(path))
    assert result.exit_code == 0
    assert "n_subjects: 9" in result.output


@pytest.mark.e2e
@pytest.mark.slow
def test_all_command(quick_config: Path, temp_dir: Path):
    """Test the full pipeline over the complete grid."""
    out = temp_dir / "all"
    result = _invoke("all", "--config", str(quick_config), "--out", str(out))
    assert result.exit_code == 0, result.output
    assert (out / "data" / "manifest.txt").is_file()
    frame = pd.read_csv(out / "results.csv")
    assert len(frame) == 4 * 2 * 3
    report = (out / "stats_report.txt").read_text()
    assert "Repeated-measures ANOVA" in report
    assert "Paired t-tests between compositions (Bonferroni)" in report
    assert len(list((out / "report").glob("*.svg"))) == 24
    summary = pd.read_csv(out / "report" / "summary.csv")
    assert len(summary) == 8


@pytest.mark.e2e
def test_run_seed_reaches_network_initialisation(quick_config: Path, synthetic_root: Path, temp_dir: Path):
    """Test --seed sets both the initialisation and the shuffling seed of saved networks."""
    params = {}
    for seed in ("11", "12"):
        out = temp_dir / f"seed{seed}"
        result = _invoke(
            "run", "--config", str(quick_config), "--data", str(synthetic_root), "--out", str(out),
            "--compositions", "pelvis-acc", "--models", "CNN-LSTM", "--seed", seed,
        )
        assert result.exit_code == 0, result.output
        artifact = load_artifact(out / "models" / "pelvis-acc_CNN-LSTM_S01.json")
        assert artifact.config["cnn_lstm"]["seed"] == int(seed)
        assert artifact.config["train"]["seed"] == int(seed)
        params[seed] = artifact.params["conv1_w"].values
    assert params["11"] != params["12"]
