# app/services/config.py
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.physics.circuit import (CapacitanceNetwork, JunctionSet, ReducedCircuit,
                                 circuit_from_charging_energies,
                                 measured_device_circuit, reduce_to_three_modes)
from app.physics.hilbert import Gauge, ResonatorModel
from app.physics.noise import NoiseEnvironment
from app.physics.solver import SolverSettings
from app.services.errors import ConfigError, RhombusError


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


OUTPUT_DIR_ENV = "RHOMBUS_OUTPUT_DIR"


class CapacitancesConfig(BaseModel):
    """Network capacitances in fF. `pairs` (or `pair`) is either {"1-2": C12, ...} with
    1-based node labels or the full 4x4 matrix c_pair[i][j]."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    pairs: Union[Dict[str, float], List[List[float]]] = Field(alias="pair")
    ground: List[float] = Field(min_length=4, max_length=4)
    res: List[float] = Field(default_factory=lambda: [0.0] * 4, min_length=4, max_length=4)
    drive: List[float] = Field(default_factory=lambda: [0.0] * 4, min_length=4, max_length=4)

    @model_validator(mode="after")
    def check_pairs(self):
        if isinstance(self.pairs, list):
            if len(self.pairs) != 4 or any(len(row) != 4 for row in self.pairs):
                raise ValueError("pair matrix must be 4x4")
            return self
        for key in self.pairs:
            parts = key.split("-")
            if len(parts) != 2 or not all(p.strip().isdigit() for p in parts):
                raise ValueError(f"pair key {key!r} must look like '1-2'")
        return self

    def to_network(self) -> CapacitanceNetwork:
        if isinstance(self.pairs, list):
            return CapacitanceNetwork(np.array(self.pairs, dtype=float), self.ground, self.res, self.drive)
        pairs = {tuple(int(p) for p in key.split("-")): value for key, value in self.pairs.items()}
        return CapacitanceNetwork.from_pairs(pairs, self.ground, self.res, self.drive)


class CircuitConfig(BaseModel):
    """Exactly one of `preset`, `ec_ghz` or `capacitances_fF` defines the charging part.

    Keys follow ReducedCircuit.to_dict (`junctions_ghz`, `offset_charges`, `flux_phi0`),
    so a circuit written by `quantize` loads back unchanged; the short field names work too.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    preset: Optional[Literal["measured_device"]] = None
    ec: Optional[List[List[float]]] = Field(None, alias="ec_ghz")
    capacitances: Optional[CapacitancesConfig] = Field(None, alias="capacitances_fF")
    e_j: Optional[List[float]] = Field(None, alias="junctions_ghz", min_length=4, max_length=4)
    alpha: Optional[float] = Field(None, gt=0, le=1.2)
    n_g: List[float] = Field(default_factory=lambda: [0.0] * 3, alias="offset_charges", min_length=3, max_length=3)
    phi_ext: float = Field(0.5, alias="flux_phi0")
    beta_res: Optional[List[float]] = Field(None, min_length=3, max_length=3)
    beta_drive: Optional[List[float]] = Field(None, min_length=3, max_length=3)

    @model_validator(mode="after")
    def check_source(self):
        sources = [s for s in (self.preset, self.ec, self.capacitances) if s is not None]
        if len(sources) != 1:
            raise ValueError("set exactly one of 'preset', 'ec_ghz' or 'capacitances_fF'")
        if self.preset is None and self.e_j is None:
            raise ValueError("'junctions_ghz' is required unless a preset is used")
        if self.capacitances is not None and (self.beta_res is not None or self.beta_drive is not None):
            raise ValueError("coupling coefficients follow from 'capacitances_fF'; do not set them as well")
        return self

    def to_circuit(self) -> ReducedCircuit:
        if self.preset == "measured_device":
            circuit = measured_device_circuit(self.phi_ext)
            if self.e_j is not None:
                circuit = circuit.with_junctions(self.e_j)
            circuit = circuit.with_offsets(self.n_g)
        elif self.capacitances is not None:
            circuit = reduce_to_three_modes(self.capacitances.to_network(), JunctionSet(self.e_j), self.n_g, self.phi_ext)
        else:
            circuit = circuit_from_charging_energies(
                ec=self.ec,
                e_j=self.e_j,
                n_g=self.n_g,
                phi_ext=self.phi_ext,
                beta_res=self.beta_res or [0.0, 0.0, 0.0],
                beta_drive=self.beta_drive,
            )
        # a written circuit carries its own alpha; only a different value moves junction 4
        if self.alpha is not None and not np.isclose(self.alpha, circuit.alpha, rtol=1e-12, atol=0):
            circuit = circuit.with_alpha(self.alpha)
        return circuit


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_max: int = Field(6, ge=1)
    dense_threshold: int = Field(3500, ge=1)
    tol_conv: float = Field(1e-6, gt=0)
    n_max_step: int = Field(2, ge=1)
    max_n_max: int = Field(12, ge=1)
    converge: bool = True
    levels: int = Field(6, ge=2)
    gauge: Gauge = Gauge.SINGLE_JUNCTION
    flux_step: float = Field(1e-5, gt=0)
    charge_step: float = Field(1e-4, gt=0)
    curvature_step: float = Field(5e-4, gt=0)
    phase_grid_size: int = Field(64, ge=3)

    def to_settings(self, workers: Optional[int] = 1) -> SolverSettings:
        return SolverSettings(workers=workers, **self.model_dump())


class GridSpec(BaseModel):
    """Either explicit `values` or an inclusive linear range."""

    model_config = ConfigDict(extra="forbid")

    start: Optional[float] = None
    stop: Optional[float] = None
    points: Optional[int] = Field(None, ge=1)
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def check(self):
        if self.values is not None:
            if not self.values:
                raise ValueError("grid 'values' must not be empty")
        elif None in (self.start, self.stop, self.points):
            raise ValueError("give 'values' or all of 'start', 'stop', 'points'")
        return self

    def grid(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        return np.linspace(self.start, self.stop, self.points)


class SweepConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    flux: GridSpec = GridSpec(start=0.0, stop=1.0, points=101)
    charge: GridSpec = GridSpec(start=0.0, stop=1.0, points=51)
    charge_mode: int = Field(1, ge=1, le=3)
    alpha: GridSpec = GridSpec(start=0.5, stop=1.0, points=11)
    alpha_flux: float = 0.5
    keep_vectors: bool = False
    track: bool = True


class ResonatorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    enabled: bool = True
    f_res: float = Field(6.7198, gt=0)
    z_r: float = Field(50.0, gt=0)
    n_photon_max: int = Field(4, ge=1)

    def to_model(self) -> Optional[ResonatorModel]:
        if not self.enabled:
            return None
        return ResonatorModel(f_res=self.f_res, z_r=self.z_r, n_photon_max=self.n_photon_max)


class FitConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dataset: Optional[str] = None
    free: List[str] = Field(default_factory=lambda: ["ej1", "ej2", "ej3", "ej4", "f_res"])
    rel_bound: float = Field(0.2, gt=0)
    initial: Dict[str, float] = Field(default_factory=dict)
    max_evals: int = Field(3000, ge=1)
    restarts: int = Field(2, ge=0)
    robust_cap: Optional[float] = Field(None, gt=0)
    qubit_levels: int = Field(4, ge=2)
    n_photon_max: int = Field(3, ge=1)
    n_max: int = Field(5, ge=1)


class WavefunctionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    flux: float = 0.49
    levels: List[int] = Field(default_factory=lambda: [0, 1])
    grid_size: int = Field(64, ge=3)
    slice_mode: int = Field(3, ge=1, le=3)
    charge_slice_n3: int = 0
    full_grid: bool = False
    delta_n_max: int = Field(4, ge=1)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: str = "results"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    circuit: CircuitConfig = CircuitConfig(preset="measured_device")
    circuit_file: Optional[str] = None
    solver: SolverConfig = SolverConfig()
    sweep: SweepConfig = SweepConfig()
    resonator: ResonatorConfig = ResonatorConfig()
    noise: NoiseEnvironment = NoiseEnvironment()
    fit: FitConfig = FitConfig()
    wavefunction: WavefunctionConfig = WavefunctionConfig()
    output: OutputConfig = OutputConfig()
    workers: Optional[int] = Field(None, ge=1)
    seed: int = 0

    def settings(self) -> SolverSettings:
        return self.solver.to_settings(self.workers)


def _read_json(path: Path) -> dict:
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _format_validation(error: ValidationError, source: str) -> str:
    lines = [f"{source}: invalid configuration"]
    for item in error.errors():
        where = ".".join(str(part) for part in item["loc"]) or "(root)"
        lines.append(f"  {where}: {item['msg']}")
    return "\n".join(lines)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Read, merge flag overrides into and fully validate a run configuration."""
    raw: dict = {}
    source = "<defaults>"
    base_dir = Path.cwd()
    if path:
        config_path = Path(path)
        raw = _read_json(config_path)
        source = str(config_path)
        base_dir = config_path.resolve().parent

    if raw.get("circuit_file"):
        circuit_path = Path(raw["circuit_file"])
        if not circuit_path.is_absolute():
            circuit_path = base_dir / circuit_path
        if not circuit_path.exists():
            raise ConfigError(f"{source}: circuit_file {circuit_path} does not exist")
        if "circuit" in raw:
            raise ConfigError(f"{source}: give either 'circuit' or 'circuit_file', not both")
        circuit_data = _read_json(circuit_path)
        # a quantize report holds the circuit under its own key
        if isinstance(circuit_data.get("circuit"), dict):
            circuit_data = circuit_data["circuit"]
        raw["circuit"] = circuit_data
        raw["circuit_file"] = str(circuit_path)

    env_output = os.environ.get(OUTPUT_DIR_ENV)
    if env_output:
        raw.setdefault("output", {})["directory"] = env_output

    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    if overrides:
        circuit = raw.setdefault("circuit", {"preset": "measured_device"})
        if "flux" in overrides:
            circuit.pop("flux_phi0", None)
            circuit["phi_ext"] = overrides["flux"]
        if "alpha" in overrides:
            circuit["alpha"] = overrides["alpha"]
        if "nmax" in overrides:
            raw.setdefault("solver", {})["n_max"] = overrides["nmax"]
        if "out" in overrides:
            raw.setdefault("output", {})["directory"] = overrides["out"]
        if "workers" in overrides:
            raw["workers"] = overrides["workers"]
        if "seed" in overrides:
            raw["seed"] = overrides["seed"]
        if "dataset" in overrides:
            # a dataset given on the command line is relative to the working directory
            raw.setdefault("fit", {})["dataset"] = str(Path(overrides["dataset"]).resolve())

    try:
        config = RunConfig.model_validate(raw)
        # building the circuit here surfaces physics-level input errors before any work starts
        config.circuit.to_circuit()
    except ValidationError as e:
        raise ConfigError(_format_validation(e, source))
    except RhombusError as e:
        raise ConfigError(f"{source}: {e}")

    if config.fit.dataset:
        dataset_path = Path(config.fit.dataset)
        if not dataset_path.is_absolute():
            dataset_path = base_dir / dataset_path
        if not dataset_path.exists():
            raise ConfigError(f"{source}: dataset {dataset_path} does not exist")
        config.fit.dataset = str(dataset_path)
    logger.debug(f"Loaded configuration from {source}")
    return config


def config_hash(config: RunConfig) -> str:
    """Digest of everything that shapes the results; worker count and output location do not."""
    payload = json.dumps(
        config.model_dump(mode="json", exclude={"workers": True, "output": {"directory"}}), sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()
