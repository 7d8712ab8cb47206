# tests/services/test_config.py
import json
from pathlib import Path

import numpy as np
import pytest

from app.physics.hilbert import Gauge
from app.services.config import OUTPUT_DIR_ENV, GridSpec, RunConfig, config_hash, load_config
from app.services.errors import ConfigError


@pytest.fixture(autouse=True)
def no_output_env(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)


def write_config(tmp_path, payload, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload, indent=2))
    return path


class TestDefaults:
    def test_defaults_describe_the_measured_device(self):
        config = load_config()
        circuit = config.circuit.to_circuit()
        assert circuit.e_j[3] == 8.20
        assert circuit.phi_ext == 0.5
        assert config.solver.n_max == 6
        assert config.solver.gauge is Gauge.SINGLE_JUNCTION
        assert config.output.directory == "results"
        assert config.workers is None

    def test_settings_carry_workers(self):
        config = load_config(overrides={"workers": 3})
        assert config.settings().workers == 3

    def test_grid_spec(self):
        np.testing.assert_allclose(GridSpec(start=0.0, stop=1.0, points=5).grid(), [0, 0.25, 0.5, 0.75, 1.0])
        np.testing.assert_array_equal(GridSpec(values=[0.4, 0.5]).grid(), [0.4, 0.5])


class TestValidation:
    def test_json_syntax_error_reports_position(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{\n  "solver": {"n_max": 4},\n  "sweep": }\n')
        with pytest.raises(ConfigError, match=r"broken\.json:3:"):
            load_config(str(path))

    def test_schema_error_names_the_field(self, tmp_path):
        path = write_config(tmp_path, {"solver": {"n_max": 0}})
        with pytest.raises(ConfigError, match=r"solver\.n_max"):
            load_config(str(path))

    def test_unknown_keys_are_rejected(self, tmp_path):
        path = write_config(tmp_path, {"solver": {"nmax": 4}})
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_one_circuit_source_only(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {"preset": "measured_device", "ec": [[0.2, 0, 0], [0, 0.2, 0], [0, 0, 0.2]]}})
        with pytest.raises(ConfigError, match="exactly one"):
            load_config(str(path))

    def test_physics_errors_surface_as_config_errors(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {"ec": [[0.2, 0, 0], [0, -0.2, 0], [0, 0, 0.2]], "e_j": [1, 1, 1, 1]}})
        with pytest.raises(ConfigError, match="positive-definite"):
            load_config(str(path))

    def test_grid_needs_values_or_range(self, tmp_path):
        path = write_config(tmp_path, {"sweep": {"flux": {"start": 0.0}}})
        with pytest.raises(ConfigError):
            load_config(str(path))

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.json"))


class TestSources:
    def test_capacitance_network_config(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {
            "capacitances": {
                "pairs": {"1-2": 45.0, "2-3": 45.0, "3-4": 45.0, "1-4": 45.0},
                "ground": [20.0, 20.0, 20.0, 20.0],
                "res": [4.0, 0.0, 0.0, 0.0],
                "drive": [0.0, 0.0, 0.5, 0.0],
            },
            "e_j": [13.0, 13.0, 13.0, 8.2],
        }})
        circuit = load_config(str(path)).circuit.to_circuit()
        assert circuit.beta_drive is not None
        assert circuit.beta_res[0] != 0

    def test_written_key_names(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {
            "ec_ghz": [[0.28, -0.1, -0.05], [-0.1, 0.28, -0.1], [-0.05, -0.1, 0.28]],
            "junctions_ghz": [13.0, 13.0, 13.0, 8.2],
            "offset_charges": [0.0, 0.5, 0.0],
            "flux_phi0": 0.45,
            "beta_res": [0.01, 0.0, 0.0],
        }})
        circuit = load_config(str(path)).circuit.to_circuit()
        assert circuit.phi_ext == 0.45
        assert circuit.n_g[1] == 0.5
        assert circuit.ec[0, 1] == -0.1
        assert circuit.e_j[3] == 8.2

    def test_pair_matrix(self, tmp_path):
        pair = [[0, 45.0, 2.0, 45.0], [0, 0, 45.0, 0], [0, 0, 0, 45.0], [0, 0, 0, 0]]
        by_matrix = write_config(tmp_path, {"circuit": {
            "capacitances_fF": {"pair": pair, "ground": [20.0] * 4}, "junctions_ghz": [13.0, 13.0, 13.0, 8.2],
        }}, name="matrix.json")
        by_label = write_config(tmp_path, {"circuit": {
            "capacitances": {"pairs": {"1-2": 45.0, "1-3": 2.0, "1-4": 45.0, "2-3": 45.0, "3-4": 45.0},
                             "ground": [20.0] * 4},
            "e_j": [13.0, 13.0, 13.0, 8.2],
        }}, name="labels.json")
        np.testing.assert_array_equal(load_config(str(by_matrix)).circuit.to_circuit().ec,
                                      load_config(str(by_label)).circuit.to_circuit().ec)

    def test_pair_matrix_must_be_square(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {
            "capacitances_fF": {"pair": [[0, 45.0]], "ground": [20.0] * 4}, "junctions_ghz": [13.0] * 4,
        }})
        with pytest.raises(ConfigError, match="4x4"):
            load_config(str(path))

    def test_bad_pair_key(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {
            "capacitances": {"pairs": {"1:2": 45.0}, "ground": [20.0] * 4},
            "e_j": [13.0, 13.0, 13.0, 8.2],
        }})
        with pytest.raises(ConfigError, match="1-2"):
            load_config(str(path))

    def test_circuit_file_is_relative_to_the_config(self, tmp_path):
        (tmp_path / "circuits").mkdir()
        write_config(tmp_path / "circuits", {"preset": "measured_device", "alpha": 0.63}, name="device.json")
        path = write_config(tmp_path, {"circuit_file": "circuits/device.json"})
        config = load_config(str(path))
        assert config.circuit.to_circuit().alpha == pytest.approx(0.63)

    def test_missing_circuit_file(self, tmp_path):
        path = write_config(tmp_path, {"circuit_file": "absent.json"})
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(str(path))

    def test_dataset_is_relative_to_the_config(self, tmp_path):
        (tmp_path / "data.csv").write_text("flux_phi0,freq_ghz\n0.4,1.0\n")
        path = write_config(tmp_path, {"fit": {"dataset": "data.csv"}})
        assert Path(load_config(str(path)).fit.dataset).resolve() == (tmp_path / "data.csv").resolve()

    def test_missing_dataset(self, tmp_path):
        path = write_config(tmp_path, {"fit": {"dataset": "data.csv"}})
        with pytest.raises(ConfigError, match="dataset"):
            load_config(str(path))


class TestOverrides:
    def test_flags_win_over_file(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {"preset": "measured_device", "phi_ext": 0.5}, "solver": {"n_max": 6}})
        config = load_config(str(path), {"flux": 0.3, "nmax": 4, "alpha": 0.8, "seed": 11, "out": "elsewhere"})
        circuit = config.circuit.to_circuit()
        assert circuit.phi_ext == 0.3
        assert circuit.alpha == pytest.approx(0.8)
        assert config.solver.n_max == 4
        assert config.seed == 11
        assert config.output.directory == "elsewhere"

    def test_flux_flag_replaces_written_flux(self, tmp_path):
        path = write_config(tmp_path, {"circuit": {"preset": "measured_device", "flux_phi0": 0.45}})
        assert load_config(str(path)).circuit.to_circuit().phi_ext == 0.45
        assert load_config(str(path), {"flux": 0.3}).circuit.to_circuit().phi_ext == 0.3

    def test_unset_flags_are_ignored(self):
        assert load_config(overrides={"flux": None, "nmax": None}).solver.n_max == 6

    def test_environment_sets_output_directory(self, monkeypatch):
        monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/rhombus-out")
        assert load_config().output.directory == "/tmp/rhombus-out"
        assert load_config(overrides={"out": "flagged"}).output.directory == "flagged"

    def test_invalid_override_is_a_config_error(self):
        with pytest.raises(ConfigError):
            load_config(overrides={"alpha": 2.0})


class TestHash:
    def test_hash_is_stable_and_sensitive(self):
        assert config_hash(RunConfig()) == config_hash(RunConfig())
        assert config_hash(RunConfig()) != config_hash(load_config(overrides={"nmax": 4}))

    def test_hash_ignores_workers_and_output_location(self):
        assert config_hash(RunConfig()) == config_hash(load_config(overrides={"workers": 4, "out": "elsewhere"}))
