"""
Integration tests for the experiment runner and the command-line entry point.
Small sweeps run end to end and write a CSV plus a run manifest.
"""

import json
from pathlib import Path

import pytest

from backend.errors import ConfigurationError
from backend.runner import ExperimentRunner
from common.config import load_experiment_config
from helmdd.decomp import rcb_parts, write_partition
from helmdd.fem import FemSpace
from helmdd.impmap import gamma, rho
from helmdd.mesh import build_uniform_rect_mesh
from main import main


def _config_file(directory: Path, payload: dict, name: str = "config.json") -> Path:
    path = directory / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


ONED = {
    "table_id": "oned_small",
    "kind": "oned_verify",
    "seed": 11,
    "params": {"k_values": [1, 10], "N_values": [2, 3], "delta": {"rule": "L/3"}, "random_starts": 5},
}

ALGEBRA = {
    "table_id": "algebra_small",
    "kind": "algebra_verify",
    "seed": 3,
    "params": {"k_values": [1], "orders": [1, 2, 3, 4], "dims": [3]},
}

FEM = {
    "table_id": "fem_small",
    "kind": "fem_convergence",
    "params": {"k_values": [3], "mesh": {"rule": "absolute", "h": 0.25}, "refinements": 1},
}


@pytest.mark.integration
class TestExperimentRunner:
    """Sweep expansion and table output."""

    def test_oned_table(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, ONED))
        outcome = ExperimentRunner(config, "oned", temp_dir / "out").run()
        assert outcome.rows == 4
        assert outcome.exit_status == 0
        assert bool(outcome.frame["passed"].all())
        header = outcome.csv_path.read_text(encoding="utf-8").splitlines()[0]
        assert header.startswith("k,L,N,delta,nilpotency")

    def test_manifest_records_every_point(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, ONED))
        outcome = ExperimentRunner(config, "oned", temp_dir / "out").run()
        manifest = json.loads(outcome.manifest_path.read_text(encoding="utf-8"))
        assert manifest["table_id"] == "oned_small"
        assert manifest["seed"] == 11
        assert manifest["csv_file"] == "oned_small.csv"
        assert [r["index"] for r in manifest["runs"]] == [0, 1, 2, 3]
        assert all(r["status"] == "ok" for r in manifest["runs"])

    def test_rerun_is_byte_identical_deterministic(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, ONED))
        first = ExperimentRunner(config, "oned", temp_dir / "a").run()
        second = ExperimentRunner(config, "oned", temp_dir / "b", workers=2).run()
        assert first.csv_path.read_bytes() == second.csv_path.read_bytes()

    def test_algebra_table(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, ALGEBRA))
        outcome = ExperimentRunner(config, "algebra", temp_dir / "out").run()
        assert list(outcome.frame["total_monomials"]) == [2, 4, 8, 16]
        assert bool(outcome.frame["cardinality_ok"].all())
        assert outcome.frame["expansion_defect"].max() <= 1e-10

    def test_fem_rows_per_level(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, FEM))
        outcome = ExperimentRunner(config, "femcheck", temp_dir / "out").run()
        assert list(outcome.frame["level"]) == [0, 1]
        assert outcome.frame["ratio"].iloc[1] > 1.0

    def test_resource_guard_skips(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, FEM))
        outcome = ExperimentRunner(config, "femcheck", temp_dir / "out", max_dofs=10).run()
        assert outcome.rows == 0
        assert outcome.skipped == 1
        assert outcome.csv_path is None
        assert outcome.exit_status == 0

    def test_command_kind_mismatch(self, temp_dir):
        config = load_experiment_config(_config_file(temp_dir, ONED))
        with pytest.raises(ConfigurationError):
            ExperimentRunner(config, "impmap", temp_dir / "out")

    def test_impmap_points(self, temp_dir):
        payload = {
            "table_id": "grid",
            "kind": "impmap_table",
            "params": {"k_values": [10, 20], "L_values": [1, 2], "mesh": {"multiples": [2, 1]}},
        }
        config = load_experiment_config(_config_file(temp_dir, payload))
        points = ExperimentRunner(config, "impmap", temp_dir / "out").points()
        assert len(points) == 2 * 2 * 2 * 2
        assert [p.index for p in points] == list(range(16))

    def test_gamma_rows_read_at_next_subdomain_edge(self, temp_dir):
        """rho at x = delta, gamma at x = L - delta."""
        payload = {
            "table_id": "maps",
            "kind": "impmap_table",
            "params": {
                "k_values": [5], "L_values": [1], "delta": {"rule": "absolute", "value": 0.25},
                "mesh": {"rule": "absolute", "h": 0.125},
            },
        }
        config = load_experiment_config(_config_file(temp_dir, payload))
        outcome = ExperimentRunner(config, "impmap", temp_dir / "out").run()
        frame = outcome.frame.set_index("quantity")
        assert frame.loc["rho", "x_target"] == pytest.approx(0.25)
        assert frame.loc["gamma", "x_target"] == pytest.approx(0.75)
        assert frame.loc["gamma", "delta"] == pytest.approx(0.25)
        assert frame.loc["gamma", "value"] == pytest.approx(gamma(5.0, 0.75, 1.0, 0.125), rel=1e-10)
        assert frame.loc["rho", "value"] == pytest.approx(rho(5.0, 0.25, 1.0, 0.125), rel=1e-10)

    def test_partition_file_placeholder(self, temp_dir):
        """partition_file '{N}' resolves next to the config."""
        space = FemSpace(build_uniform_rect_mesh(1.0, 1.0, 0.125))
        write_partition(temp_dir / "unit_2.part", rcb_parts(space, 2))
        payload = {
            "table_id": "parts",
            "kind": "metis_iterate",
            "params": {
                "k_values": [2], "N_values": [2], "delta": {"rule": "h"},
                "mesh": {"rule": "absolute", "h": 0.125}, "random_starts": 1,
                "tol": 1e-4, "maxit": 100, "partition_file": "unit_{N}.part",
            },
        }
        config = load_experiment_config(_config_file(temp_dir, payload))
        outcome = ExperimentRunner(config, "iterate", temp_dir / "out", config_dir=temp_dir).run()
        assert outcome.rows == 1
        assert outcome.frame["partition"].iloc[0].endswith("unit_2.part")
        assert "fixed_point_mean" in outcome.frame.columns

    def test_missing_partition_file_fails_point(self, temp_dir):
        payload = {
            "table_id": "noparts",
            "kind": "metis_iterate",
            "params": {
                "k_values": [2], "N_values": [2], "delta": {"rule": "h"},
                "mesh": {"rule": "absolute", "h": 0.125}, "random_starts": 1,
                "partition_file": "absent_{N}.part",
            },
        }
        config = load_experiment_config(_config_file(temp_dir, payload))
        outcome = ExperimentRunner(config, "iterate", temp_dir / "out", config_dir=temp_dir).run()
        assert outcome.failed == 1
        assert outcome.exit_status == 1


@pytest.mark.integration
class TestMain:
    """Exit statuses of the command-line entry point."""

    def test_success(self, temp_dir):
        path = _config_file(temp_dir, ALGEBRA)
        assert main(["algebra", "--config", str(path), "--out", str(temp_dir / "out")]) == 0
        assert (temp_dir / "out" / "algebra_small.csv").exists()
        assert (temp_dir / "out" / "algebra_small.manifest.json").exists()

    def test_seed_override_recorded(self, temp_dir):
        path = _config_file(temp_dir, ALGEBRA)
        main(["algebra", "--config", str(path), "--out", str(temp_dir / "out"), "--seed", "99"])
        manifest = json.loads((temp_dir / "out" / "algebra_small.manifest.json").read_text(encoding="utf-8"))
        assert manifest["seed"] == 99

    def test_malformed_config_exit_two(self, temp_dir):
        path = temp_dir / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["oned", "--config", str(path), "--out", str(temp_dir / "out")]) == 2

    def test_wrong_command_exit_two(self, temp_dir):
        path = _config_file(temp_dir, ONED)
        assert main(["zeta", "--config", str(path), "--out", str(temp_dir / "out")]) == 2

    def test_bad_seed_exit_two(self, temp_dir):
        path = _config_file(temp_dir, ONED)
        assert main(["oned", "--config", str(path), "--out", str(temp_dir / "out"), "--seed", "-1"]) == 2

    def test_failed_point_exit_one(self, temp_dir):
        payload = {
            "table_id": "noparts",
            "kind": "metis_iterate",
            "params": {
                "k_values": [2], "N_values": [2], "delta": {"rule": "h"},
                "mesh": {"rule": "absolute", "h": 0.125}, "partition_file": "absent_{N}.part",
            },
        }
        path = _config_file(temp_dir, payload)
        assert main(["iterate", "--config", str(path), "--out", str(temp_dir / "out")]) == 1
