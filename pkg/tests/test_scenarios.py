"""
Unit tests for scenario files, the bundled catalog, runners and the
atomic result writer.
"""
import json
import logging
from pathlib import Path

import pytest

from histories_sim.scenarios import (
    ResultBundle,
    ResultWriter,
    ScenarioRunner,
    bundled_scenario,
    list_scenarios,
    load_scenario,
    parse_scenario_text,
    validate_scenario,
)
from histories_sim.scenarios.results import format_cell
from histories_sim.utils.errors import ValidationError
from histories_sim.utils.logger import ScenarioFilter, current_scenario, scenario_context, setup_logging


def issue_paths(error: ValidationError) -> set:
    return {path for path, _ in error.issues}


# ==================== SCHEMA TESTS ====================

def test_bundled_files_validate_with_defaults(bundled):
    scenario = validate_scenario(bundled("histories"))
    assert scenario.kind == "histories"
    assert scenario.parameters["hbar"] == 1.0
    assert scenario.output == {}


def test_errors_carry_field_paths(bundled):
    raw = bundled("arrival")
    raw["parameters"]["tau"] = -1.0
    raw["parameters"]["lattice"]["n_sites"] = "many"
    raw["parameters"]["colour"] = "blue"
    del raw["seed"]
    with pytest.raises(ValidationError) as exc:
        validate_scenario(raw)
    assert issue_paths(exc.value) == {
        "parameters.tau",
        "parameters.lattice.n_sites",
        "parameters.colour",
        "seed",
    }


def test_cross_field_checks(bundled):
    raw = bundled("histories")
    raw["parameters"]["times"] = [1.0, 0.5, 2.0]
    with pytest.raises(ValidationError) as exc:
        validate_scenario(raw)
    assert issue_paths(exc.value) == {"parameters.times", "parameters.families"}

    arrival = bundled("arrival-antisymmetric")
    arrival["parameters"]["environments"] = [{"D_loc": 1.0, "dt": 0.01}]
    with pytest.raises(ValidationError) as exc:
        validate_scenario(arrival)
    assert "parameters.method" in issue_paths(exc.value)


def test_unknown_kind_and_schema_version(bundled):
    raw = bundled("qsd")
    raw["kind"] = "teleport"
    raw["schema_version"] = 2
    with pytest.raises(ValidationError) as exc:
        validate_scenario(raw)
    assert issue_paths(exc.value) == {"kind", "schema_version"}
    with pytest.raises(ValidationError):
        validate_scenario(["not", "a", "mapping"])


def test_seed_range(bundled):
    raw = bundled("histories")
    raw["seed"] = 2 ** 64
    with pytest.raises(ValidationError) as exc:
        validate_scenario(raw)
    assert issue_paths(exc.value) == {"seed"}
    scenario = validate_scenario(bundled("histories"))
    assert scenario.with_seed(7).seed == 7
    assert scenario.with_seed(None) is scenario
    with pytest.raises(ValidationError):
        scenario.with_seed(-1)


def test_yaml_and_json_read_the_same(bundled):
    raw = bundled("lindblad")
    from_json = parse_scenario_text(json.dumps(raw))
    yaml_text = "\n".join(
        [
            "schema_version: 1",
            "kind: lindblad",
            "name: lindblad",
            f"description: {json.dumps(raw['description'])}",
            f"seed: {raw['seed']}",
            f"parameters: {json.dumps(raw['parameters'])}",
        ]
    )
    assert parse_scenario_text(yaml_text).fingerprint() == from_json.fingerprint()
    with pytest.raises(ValidationError):
        parse_scenario_text("kind: [unclosed")


def test_every_bundled_file_loads_from_disk(scenario_dir):
    """Exponents without a decimal point (1e-8) stay numbers."""
    for path in sorted(scenario_dir.glob("*.json")):
        scenario = load_scenario(path)
        assert scenario.name == path.stem
    records = load_scenario(scenario_dir / "records.json")
    assert records.parameters["record_tolerance"] == pytest.approx(1e-8)
    assert isinstance(load_scenario(scenario_dir / "histories.json").parameters["tolerance"], float)


def test_yaml_reads_bare_exponents(bundled, tmp_path):
    raw = bundled("records")
    lines = [
        "schema_version: 1",
        "kind: records",
        "name: records-yaml",
        f"seed: {raw['seed']}",
        "parameters:",
    ]
    lines += [f"  {key}: {json.dumps(value)}" for key, value in raw["parameters"].items() if key != "record_tolerance"]
    lines.append("  record_tolerance: 1e-8")
    path = tmp_path / "records.yaml"
    path.write_text("\n".join(lines), encoding="utf-8")
    scenario = load_scenario(path)
    assert scenario.parameters["record_tolerance"] == 1e-8


def test_load_missing_file(tmp_path):
    with pytest.raises(ValidationError) as exc:
        load_scenario(tmp_path / "absent.json")
    assert "no such file" in str(exc.value)


# ==================== CATALOG TESTS ====================

def test_catalog_lists_every_kind():
    entries = list_scenarios()
    assert len(entries) >= 9
    assert {e.kind for e in entries} >= {"histories", "records", "lindblad", "qsd", "qbm", "hybrid", "timeless", "arrival"}
    assert [e.path.name for e in entries] == sorted(e.path.name for e in entries)


def test_bundled_scenario_prefers_file_named_after_kind():
    assert bundled_scenario("arrival").name == "arrival"
    assert bundled_scenario("timeless").name == "timeless"
    with pytest.raises(ValidationError):
        bundled_scenario("teleport")


# ==================== RUNNER TESTS ====================

def test_histories_runner(bundled):
    bundle = ScenarioRunner(threads=1).run(validate_scenario(bundled("histories")))
    assert bundle.summary["n_histories"] == 4
    assert not bundle.summary["consistent"]
    assert bundle.summary["normalization_error"] < 1e-12
    assert len(bundle.tables["decoherence_matrix"]) == 16
    assert "retrodiction" not in bundle.tables


def test_records_runner(bundled):
    bundle = ScenarioRunner(threads=1).run(validate_scenario(bundled("records")))
    assert bundle.summary["records_pass"]
    assert not bundle.summary["swapped_records_pass"]
    assert bundle.summary["n_records"] == 3


def test_antisymmetric_arrival_runner(bundled):
    bundle = ScenarioRunner(threads=1).run(validate_scenario(bundled("arrival-antisymmetric")))
    assert bundle.summary["p_enter"] <= 1e-8
    assert bundle.summary["exhaustiveness_defect"] <= 1e-12
    assert bundle.summary["labels"] == ["stay", "cross"]


def test_seeded_runs_are_reproducible(bundled):
    raw = bundled("qsd")
    raw["parameters"].update({"n_traj": 24, "steps": 200, "chunk": 8})
    scenario = validate_scenario(raw)
    first = ScenarioRunner(threads=1).run(scenario).to_dict()
    second = ScenarioRunner(threads=3).run(scenario).to_dict()
    assert first["summary"] == second["summary"]
    assert first["provenance"]["scenario_hash"] == second["provenance"]["scenario_hash"]


# ==================== WRITER TESTS ====================

@pytest.fixture
def small_bundle(bundled):
    bundle = ResultBundle(validate_scenario(bundled("histories")))
    bundle.summary.update({"epsilon": 0.25, "passed": True, "ratio": float("inf")})
    bundle.table("values", ["t", "value"]).extend([(0.0, 1.0 / 3.0), (1.0, 2.0)])
    return bundle


def test_writer_produces_summary_and_tables(tmp_path, small_bundle):
    target = ResultWriter(tmp_path).write(small_bundle)
    assert target == tmp_path / "histories"
    summary = json.loads((target / "summary.json").read_text(encoding="utf-8"))
    assert summary["summary"] == {"epsilon": 0.25, "passed": True, "ratio": "inf"}
    assert summary["tables"]["values"] == {"file": "values.csv", "rows": 2}
    assert summary["provenance"]["seed"] == small_bundle.scenario.seed
    lines = (target / "values.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "t,value"
    assert lines[1] == f"{format_cell(0.0)},{format_cell(1.0 / 3.0)}"


def test_writer_rolls_back_on_failure(tmp_path, small_bundle, mocker):
    """A failed write leaves the previous run directory untouched."""
    writer = ResultWriter(tmp_path)
    target = writer.write(small_bundle)
    mocker.patch("histories_sim.scenarios.results.format_cell", side_effect=RuntimeError("disk full"))
    with pytest.raises(RuntimeError):
        writer.write(small_bundle)
    assert json.loads((target / "summary.json").read_text(encoding="utf-8"))["name"] == "histories"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["histories"]


def test_writer_keeps_previous_run_until_swap(tmp_path, small_bundle, mocker):
    """The old directory is set aside, never deleted, before the new one lands."""
    writer = ResultWriter(tmp_path)
    target = writer.write(small_bundle)
    real_rename = Path.rename
    aside = []

    def failing_swap(self, destination):
        if Path(destination) == target and not self.name.endswith(".previous"):
            aside.extend(p.name for p in tmp_path.iterdir() if p.name.endswith(".previous"))
            raise OSError("rename failed")
        return real_rename(self, destination)

    mocker.patch.object(Path, "rename", autospec=True, side_effect=failing_swap)
    with pytest.raises(OSError):
        writer.write(small_bundle)
    assert len(aside) == 1
    assert json.loads((target / "summary.json").read_text(encoding="utf-8"))["name"] == "histories"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["histories"]
    mocker.stopall()
    writer.write(small_bundle)
    assert sorted(p.name for p in tmp_path.iterdir()) == ["histories"]


def test_format_cell_keeps_full_precision():
    assert float(format_cell(0.1 + 0.2)) == 0.1 + 0.2
    assert format_cell(True) == "true"
    assert format_cell(3) == "3"


# ==================== BUNDLED RUN TESTS ====================

@pytest.mark.slow
class TestBundledRuns:
    """End-to-end runs of the heavier bundled scenarios."""

    def test_double_slit(self, bundled):
        summary = ScenarioRunner(threads=2).run(validate_scenario(bundled("double-slit"))).summary
        assert summary["epsilon_no_env"] > 0.5
        assert summary["epsilon_env"] < 1e-4
        assert summary["visibility_env"] < summary["visibility_no_env"]
        assert summary["normalization_error_env"] < 1e-8

    def test_qbm(self, bundled):
        summary = ScenarioRunner(threads=1).run(validate_scenario(bundled("qbm"))).summary
        assert summary["cgs_thermal_dominates"]
        assert summary["argmax_displacement_exact"] == 0.0
        assert abs(summary["argmax_displacement_mc"]) <= 0.2
        assert summary["offdiagonal_suppression"] < 1.0
        assert summary["curvature_relative_difference"] <= 0.1

    def test_timeless(self, bundled):
        summary = ScenarioRunner(threads=2).run(validate_scenario(bundled("timeless"))).summary
        for i in range(5):
            tolerance = 4.0 * summary[f"region_{i}_stderr"] + 0.01
            assert summary[f"region_{i}_probability"] == pytest.approx(summary[f"region_{i}_analytic"], abs=tolerance)

    def test_arrival_with_environment(self, bundled):
        """Closed: no consistency. Strongest environment: Fokker-Planck probability within 10%."""
        bundle = ScenarioRunner(threads=2).run(validate_scenario(bundled("arrival")))
        summary = bundle.summary
        assert summary["epsilon"] > 0.1
        assert summary["environment_suppression_exponent"] >= 10.0
        assert summary["epsilon_monotone"]
        assert summary["environment_epsilon"] < 0.05
        assert summary["environment_normalization_error"] < 1e-8
        assert summary["langevin_relative_difference"] <= 0.1
        sweep = bundle.tables["environment_sweep"]
        assert len(sweep) == 4

    def test_hybrid(self, bundled):
        summary = ScenarioRunner(threads=2).run(validate_scenario(bundled("hybrid"))).summary
        assert 0.3 < summary["stochastic_fraction_upper"] < 0.7
        assert summary["stochastic_separation_ratio"] > 3.0
        assert summary["mean_field_std"] < 1e-12


# ==================== LOGGING TESTS ====================

def test_scenario_context_labels_records():
    logger = logging.getLogger("histories_sim.tests")
    stamp = ScenarioFilter()
    record = logger.makeRecord(logger.name, logging.INFO, __file__, 0, "inside", None, None)
    with scenario_context(logger, "records", "records", 5):
        assert current_scenario() == "records"
        stamp.filter(record)
    assert record.scenario == "records"
    assert current_scenario() == "-"


def test_scenario_context_resets_after_failure():
    logger = logging.getLogger("histories_sim.tests")
    with pytest.raises(RuntimeError):
        with scenario_context(logger, "qsd", "qsd", 1):
            raise RuntimeError("boom")
    assert current_scenario() == "-"


def test_setup_logging_does_not_stack_handlers(tmp_path):
    setup_logging(log_level="DEBUG", log_dir=tmp_path, to_file=True)
    root = setup_logging(log_level="DEBUG", log_dir=tmp_path, to_file=True)
    assert len(root.handlers) == 2
    assert all(any(isinstance(f, ScenarioFilter) for f in h.filters) for h in root.handlers)
    assert (tmp_path / "histories.log").is_file()
    root = setup_logging(log_level="WARNING", to_file=False)
    assert len(root.handlers) == 1
