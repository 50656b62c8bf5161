import json

import pytest
from click.testing import CliRunner

from runner.cli import cli


@pytest.fixture
def runner(monkeypatch, tmp_path):
    monkeypatch.setenv("VLASOVKIT_JSON_LOGS", "0")
    monkeypatch.setenv("VLASOVKIT_LOG_DIR", str(tmp_path / "logs"))
    return CliRunner()


class TestListScenarios:
    def test_lists_bundled_names(self, runner):
        result = runner.invoke(cli, ["list-scenarios"])
        assert result.exit_code == 0
        assert "null-labtime" in result.output
        assert "minkowski-lorentz-massshell" in result.output


class TestRun:
    """vlasovkit run CONFIG"""

    def test_unknown_model_exits_2(self, runner, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("name: bad\nmodel: {name: kerr}\nrun: drift\nnumeric: {seed: 1}\n")
        result = runner.invoke(cli, ["run", str(path), "--out", str(tmp_path)])
        assert result.exit_code == 2
        assert "model.name" in result.output

    def test_bad_tolerance_flag_exits_2(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", "null-labtime", "--tol", "-1", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_runs_file_with_overrides(self, runner, tmp_path):
        result = runner.invoke(cli, ["run", "minkowski-lorentz-massshell", "--steps", "200", "--seed", "3",
                                     "--out", str(tmp_path)])
        assert result.exit_code == 0, result.output
        summary = json.loads((tmp_path / "minkowski-lorentz-massshell" / "summary.json").read_text())
        assert summary["seed"] == 3
        assert summary["config"]["numeric"]["steps"] == 200
        assert "mass-shell" in result.output


class TestCheck:
    """vlasovkit check SUITE_NAME"""

    def test_unknown_suite_exits_2(self, runner):
        result = runner.invoke(cli, ["check", "no-such-suite"])
        assert result.exit_code == 2
        assert "Unknown suite" in result.output

    def test_null_labtime_passes(self, runner, tmp_path):
        result = runner.invoke(cli, ["check", "null-labtime", "--out", str(tmp_path), "--quiet"])
        assert result.exit_code == 0
        assert (tmp_path / "null-labtime" / "summary.json").is_file()


class TestEmitPlots:
    def test_after_trajectory_run(self, runner, tmp_path):
        run = runner.invoke(cli, ["run", "trajectories-efield", "--steps", "50", "--out", str(tmp_path), "--quiet"])
        assert run.exit_code == 0, run.output
        result = runner.invoke(cli, ["emit-plots", str(tmp_path / "trajectories-efield")])
        assert result.exit_code == 0
        assert (tmp_path / "trajectories-efield" / "plots" / "trajectories.csv").is_file()

    def test_nothing_plottable_exits_1(self, runner, tmp_path):
        result = runner.invoke(cli, ["emit-plots", str(tmp_path)])
        assert result.exit_code == 1
