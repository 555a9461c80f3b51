import json
from pathlib import Path

import numpy as np
import pytest

from tekiflow.cli import main
from tekiflow.config import ConfigError, ExperimentConfig, load_config
from tekiflow.runner import read_manifest_config, run_experiment

REPO = Path(__file__).resolve().parent.parent


def minimal_config(out_dir, **overrides):
    data = {
        "problem": {"kind": "linear", "n_param": 8, "n_obs": 8, "noise": 0.01},
        "prior": {"amplitude": 10.0, "exponent": 1.0},
        "ensemble": {"size": 4, "init": "random", "seed": 3},
        "flow": {"rho": 0.0, "kappa": 1.0},
        "integrator": {"t_final": 50.0, "checkpoints": 7},
        "output": {"directory": str(out_dir)},
    }
    for section, values in overrides.items():
        data.setdefault(section, {}).update(values)
    return data


class TestConfigValidation:
    def test_load_bundled_config(self):
        cfg = load_config(REPO / "configs" / "linear_small.json")
        assert cfg.problem.kind == "linear"
        assert cfg.integrator.t_final == 1000.0

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.json")

    def test_load_invalid_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(Exception, match="invalid JSON"):
            load_config(bad)

    def test_unknown_key_reports_path(self):
        data = minimal_config("x")
        data["flow"]["rho_typo"] = 1
        with pytest.raises(ConfigError) as err:
            ExperimentConfig.from_dict(data)
        assert "flow.rho_typo" in str(err.value)

    def test_unknown_section(self):
        data = minimal_config("x")
        data["extra"] = {}
        with pytest.raises(ConfigError, match="config.extra"):
            ExperimentConfig.from_dict(data)

    def test_rho_upper_bound(self):
        data = minimal_config("x", flow={"rho": 1.0})
        with pytest.raises(ConfigError, match="rho must be < 1"):
            ExperimentConfig.from_dict(data)

    def test_basis_size_against_dimension(self):
        data = minimal_config("x", ensemble={"init": "basis", "size": 9})
        with pytest.raises(ConfigError, match="ensemble.size"):
            ExperimentConfig.from_dict(data)

    def test_darcy_observation_divisibility(self):
        data = minimal_config("x")
        data["problem"] = {"kind": "darcy", "refinement": 6, "n_obs": 30}
        with pytest.raises(ConfigError, match="n_obs"):
            ExperimentConfig.from_dict(data)

    def test_type_errors_carry_paths(self):
        data = minimal_config("x", integrator={"checkpoints": "many"})
        with pytest.raises(ConfigError, match="integrator.checkpoints"):
            ExperimentConfig.from_dict(data)

    def test_defaults_round_trip(self):
        cfg = ExperimentConfig.from_dict(minimal_config("somewhere"))
        again = ExperimentConfig.from_dict(cfg.to_dict())
        assert again == cfg


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = ExperimentConfig.from_dict(minimal_config(out))
    result = run_experiment(cfg, write=True)
    return out, result


class TestRunArtifacts:

    def test_artifacts_exist(self, run_dir):
        out, _ = run_dir
        for name in ("trajectory.csv", "diagnostics.csv", "manifest.txt", "plot_trajectory.py"):
            assert (out / name).exists()

    def test_trajectory_schema(self, run_dir):
        out, result = run_dir
        lines = (out / "trajectory.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header == [
            "t", "V_e", "spread_bound", "zeta", "zeta_bound", "loss_mean",
            "loss_particle_avg", "loss_gap", "grad_approx_err", "subspace_drift",
            "theta_min", "theta_max",
        ]
        assert len(lines) - 1 == result.config.integrator.checkpoints
        # theta columns empty for non-adaptive runs
        row = lines[1].split(",")
        assert row[-1] == "" and row[-2] == ""

    def test_seventeen_digit_floats(self, run_dir):
        out, _ = run_dir
        row = (out / "trajectory.csv").read_text().splitlines()[2].split(",")
        value = row[1]
        assert float(value) == float(f"{float(value):.17g}")

    def test_manifest_round_trip(self, run_dir, tmp_path):
        out, result = run_dir
        cfg = read_manifest_config(out / "manifest.txt")
        rerun_cfg = ExperimentConfig.from_dict(
            {**cfg.to_dict(), "output": {"directory": str(tmp_path)}}
        )
        rerun = run_experiment(rerun_cfg, write=True)
        assert (out / "trajectory.csv").read_bytes() == (tmp_path / "trajectory.csv").read_bytes()

    def test_manifest_contains_constants(self, run_dir):
        out, _ = run_dir
        text = (out / "manifest.txt").read_text()
        for key in (
            "constants.c_lip", "constants.sigma_min", "constants.m",
            "subspace.zeta0", "reference.phi_star", "reference.kkt_residual",
        ):
            assert key in text

    def test_manifest_stores_data_vector(self, run_dir):
        out, result = run_dir
        for line in (out / "manifest.txt").read_text().splitlines():
            if line.startswith("data.y ="):
                stored = json.loads(line.split(" = ", 1)[1])
                np.testing.assert_allclose(stored, result.bundle.problem.data, rtol=1e-15)
                return
        raise AssertionError("data.y missing from manifest")


class TestDeterminism:
    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            cfg = ExperimentConfig.from_dict(minimal_config(out))
            run_experiment(cfg, write=True)
            outs.append(out)
        for fname in ("trajectory.csv", "diagnostics.csv"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


class TestCLI:
    def write_config(self, tmp_path, data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data))
        return path

    def test_run_success(self, tmp_path, capsys):
        path = self.write_config(tmp_path, minimal_config(tmp_path / "out"))
        assert main(["run", str(path)]) == 0
        assert "bound checks passed" in capsys.readouterr().out

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.json")]) == 2

    def test_invalid_config_exit_2(self, tmp_path, capsys):
        data = minimal_config(tmp_path / "out", flow={"rho": 1.0})
        path = self.write_config(tmp_path, data)
        assert main(["run", str(path)]) == 2
        assert "rho" in capsys.readouterr().err

    def test_check_subcommand(self, tmp_path, capsys):
        path = self.write_config(tmp_path, minimal_config(tmp_path / "out"))
        assert main(["check", str(path)]) == 0
        verdict = json.loads((tmp_path / "out" / "verdict.json").read_text())
        assert verdict["passed"] is True
        assert any(c["name"] == "trajectory_bounds" for c in verdict["checks"])

    def test_bundled_linear_small(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        config = json.loads((REPO / "configs" / "linear_small.json").read_text())
        path = self.write_config(tmp_path, config)
        assert main(["run", str(path)]) == 0

    def test_console_entry_point(self, tmp_path):
        # the installed module runs as a subprocess with the same contract
        import subprocess
        import sys

        data = minimal_config(tmp_path / "out")
        path = self.write_config(tmp_path, data)
        proc = subprocess.run(
            [sys.executable, "-m", "tekiflow.cli", "run", str(path)],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0, proc.stderr
        assert "bound checks passed" in proc.stdout


class TestNpzOutput:
    def test_states_archive(self, tmp_path):
        data = minimal_config(tmp_path / "out")
        data["output"]["formats"] = ["csv", "npz"]
        cfg = ExperimentConfig.from_dict(data)
        result = run_experiment(cfg, write=True)
        archive = np.load(tmp_path / "out" / "states.npz")
        assert archive["times"].size == cfg.integrator.checkpoints
        np.testing.assert_array_equal(
            archive["members_0000"], result.trajectory.checkpoints[0].members
        )
