"""
Integration tests for the command-line entry point.
Tests the subcommands, the result directory and the exit codes.
"""
import json

import pytest

from histories_sim.config import config
from histories_sim.main import EXIT_FAILURE, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from histories_sim.scenarios import ScenarioRunner
from histories_sim.utils.errors import NumericalGuardError


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Keep results and logs of CLI runs inside tmp_path."""
    monkeypatch.setattr(config, "OUTPUT_DIR", tmp_path / "results")
    monkeypatch.setattr(config, "LOGS_DIR", tmp_path / "logs")
    monkeypatch.setattr(config, "LOG_TO_FILE", False)
    return tmp_path


def cli(*argv: str) -> int:
    return main(["--no-log-file", "--log-level", "WARNING", *argv])


@pytest.mark.integration
class TestCommands:
    """Subcommands that succeed."""

    def test_list_scenarios(self, capsys):
        assert cli("list-scenarios") == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        count = int(lines[-1].split()[0])
        assert count >= 9
        assert any(line.startswith("arrival-antisymmetric") for line in lines)

    def test_validate(self, capsys, scenario_dir):
        assert cli("validate", str(scenario_dir / "records.json")) == EXIT_OK
        assert "valid records scenario 'records'" in capsys.readouterr().out

    def test_validate_every_bundled_file(self, scenario_dir, capsys):
        paths = sorted(scenario_dir.glob("*.json"))
        for path in paths:
            assert cli("validate", str(path)) == EXIT_OK
        assert capsys.readouterr().out.count(": valid ") == len(paths)

    def test_run_writes_bundle(self, tmp_path, scenario_dir, capsys):
        out = tmp_path / "histories-run"
        assert cli("run", str(scenario_dir / "histories.json"), "--out", str(out)) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["kind"] == "histories"
        assert summary["summary"]["consistent"] is False
        assert (out / "decoherence_matrix.csv").is_file()
        assert f"Results: {out}" in capsys.readouterr().out

    def test_bundled_subcommand_with_seed(self, isolated_output):
        assert cli("records", "--seed", "5") == EXIT_OK
        summary = json.loads((isolated_output / "results" / "records" / "summary.json").read_text(encoding="utf-8"))
        assert summary["provenance"]["seed"] == 5
        assert summary["scenario"]["seed"] == 5

    def test_repeated_runs_match(self, tmp_path, scenario_dir):
        """Same scenario, same seed: identical summaries."""
        summaries = []
        for name in ("first", "second"):
            assert cli("run", str(scenario_dir / "arrival-antisymmetric.json"), "--out", str(tmp_path / name)) == EXIT_OK
            summaries.append(json.loads((tmp_path / name / "summary.json").read_text(encoding="utf-8"))["summary"])
        assert summaries[0] == summaries[1]


@pytest.mark.integration
class TestExitCodes:
    """Failures map to distinct exit codes."""

    def test_invalid_scenario(self, write_scenario, bundled, capsys):
        raw = bundled("qbm")
        raw["parameters"]["sigma"] = 0.0
        path = write_scenario(raw, "bad-qbm.json")
        assert cli("validate", str(path)) == EXIT_VALIDATION
        assert "parameters.sigma" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli("run", str(tmp_path / "absent.json")) == EXIT_VALIDATION

    def test_bad_thread_count(self, scenario_dir, capsys):
        assert cli("run", str(scenario_dir / "histories.json"), "--threads", "0") == EXIT_VALIDATION
        assert "--threads" in capsys.readouterr().err

    def test_numerical_guard(self, scenario_dir, mocker, capsys):
        mocker.patch.object(
            ScenarioRunner, "run", side_effect=NumericalGuardError("lindblad", "positivity", "eigenvalue -1.2e-3")
        )
        assert cli("run", str(scenario_dir / "lindblad.json")) == EXIT_NUMERICAL
        assert "positivity" in capsys.readouterr().err

    def test_unexpected_failure(self, scenario_dir, mocker):
        mocker.patch.object(ScenarioRunner, "run", side_effect=RuntimeError("boom"))
        assert cli("run", str(scenario_dir / "histories.json")) == EXIT_FAILURE

    def test_failed_run_leaves_no_directory(self, tmp_path, scenario_dir, mocker):
        mocker.patch.object(ScenarioRunner, "run", side_effect=RuntimeError("boom"))
        cli("run", str(scenario_dir / "histories.json"), "--out", str(tmp_path / "never"))
        assert not (tmp_path / "never").exists()
