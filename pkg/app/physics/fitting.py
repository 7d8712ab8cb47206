# app/physics/fitting.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import linalg, optimize

from app.physics.circuit import (N_MODES, CapacitanceNetwork, JunctionSet,
                                 ReducedCircuit,
                                 circuit_from_charging_energies,
                                 reduce_to_three_modes)
from app.physics.hilbert import (ChargeBasis, ResonatorModel,
                                 assemble_rhombus, charge_operator,
                                 dressed_composite)
from app.physics.solver import SolverSettings, eigensolve
from app.services.errors import FitError, InvalidInputError
from app.services.pool import map_ordered


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


PARAMETER_NAMES = (
    "ec11", "ec22", "ec33", "ec12", "ec23", "ec13",
    "ej1", "ej2", "ej3", "ej4",
    "beta_r1", "beta_r2", "beta_r3",
    "f_res",
)
EC_INDEX = {"ec11": (0, 0), "ec22": (1, 1), "ec33": (2, 2), "ec12": (0, 1), "ec23": (1, 2), "ec13": (0, 2)}
DEFAULT_TIES = [["ec11", "ec22", "ec33"], ["ec12", "ec23"]]
RESONATOR_LABEL = "res"
UNASSIGNED = "unassigned"
DATASET_COLUMNS = ["flux_phi0", "freq_ghz", "label", "weight"]


class TransitionDataset:
    """Measured transition frequencies: flux in flux quanta, frequency in GHz."""

    def __init__(self, frame: pd.DataFrame):
        missing = {"flux_phi0", "freq_ghz"} - set(frame.columns)
        if missing:
            raise InvalidInputError("dataset is missing columns", missing=sorted(missing))
        frame = frame.copy()
        if "label" not in frame.columns:
            frame["label"] = UNASSIGNED
        if "weight" not in frame.columns:
            frame["weight"] = 1.0
        frame["label"] = frame["label"].fillna(UNASSIGNED).astype(str)
        frame = frame[DATASET_COLUMNS].astype({"flux_phi0": float, "freq_ghz": float, "weight": float})
        if len(frame) == 0:
            raise InvalidInputError("dataset is empty")
        if not np.all(np.isfinite(frame["flux_phi0"])):
            raise InvalidInputError("dataset contains non-finite flux values")
        if not np.all(frame["freq_ghz"] > 0):
            bad = int(np.argmax(~(frame["freq_ghz"] > 0)))
            raise InvalidInputError("dataset frequencies must be positive", row=bad)
        if not np.all(frame["weight"] >= 0):
            raise InvalidInputError("dataset weights must be nonnegative")
        self.frame = frame.reset_index(drop=True)

    @classmethod
    def from_csv(cls, path) -> "TransitionDataset":
        path = Path(path)
        try:
            frame = pd.read_csv(path, comment="#")
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise InvalidInputError(f"cannot parse dataset {path}: {e}")
        return cls(frame)

    @classmethod
    def from_rows(cls, rows: Sequence[Tuple]) -> "TransitionDataset":
        return cls(pd.DataFrame(list(rows), columns=DATASET_COLUMNS))

    def __len__(self) -> int:
        return len(self.frame)

    def to_csv(self, path) -> Path:
        path = Path(path)
        self.frame.to_csv(path, index=False, float_format="%.12g")
        return path

    def shuffled(self, seed: int) -> "TransitionDataset":
        return TransitionDataset(self.frame.sample(frac=1.0, random_state=seed))


class FitParameterSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    initial: float
    lower: float
    upper: float
    fixed: bool = False

    @model_validator(mode="after")
    def check(self):
        if self.name not in PARAMETER_NAMES:
            raise ValueError(f"unknown fit parameter {self.name!r}")
        if self.lower > self.upper:
            raise ValueError(f"{self.name}: lower bound above upper bound")
        return self


class FitProblem(BaseModel):
    """Free parameters, equality ties and optimizer settings for a spectroscopy fit.

    A tie group is fitted as one value: its members must start equal and share
    the intersection of their bounds."""

    model_config = ConfigDict(extra="forbid")

    parameters: List[FitParameterSpec]
    ties: List[List[str]] = Field(default_factory=list)
    max_evals: int = Field(3000, ge=1)
    xatol: float = Field(1e-6, gt=0)
    fatol: float = Field(1e-10, gt=0)
    restarts: int = Field(2, ge=0)
    seed: int = 0
    robust_cap: Optional[float] = Field(None, gt=0, description="residual cap in GHz")
    qubit_levels: int = Field(4, ge=2)
    n_photon_max: int = Field(3, ge=1)
    n_max: int = Field(5, ge=1)
    z_r: float = Field(50.0, gt=0)
    sensitivity_step: float = Field(1e-3, gt=0, description="fraction of the bound width")
    workers: Optional[int] = 1

    @model_validator(mode="after")
    def check(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise ValueError("every fit parameter may appear only once")
        free = {p.name for p in self.parameters if not p.fixed}
        seen = set()
        for group in self.ties:
            if len(group) < 2:
                raise ValueError("a tie group needs at least two parameters")
            for name in group:
                if name not in free:
                    raise ValueError(f"tied parameter {name!r} is not a free parameter")
                if name in seen:
                    raise ValueError(f"parameter {name!r} appears in two tie groups")
                seen.add(name)
            initials = [self.spec(name).initial for name in group]
            if not np.allclose(initials, initials[0], rtol=1e-12, atol=0):
                raise ValueError(f"tie group {group} starts from different initial values {initials}")
        return self

    def spec(self, name: str) -> FitParameterSpec:
        return next(p for p in self.parameters if p.name == name)


def circuit_params(circuit: ReducedCircuit, resonator: ResonatorModel) -> Dict[str, float]:
    """Flatten a circuit and its resonator into the named fit parameters."""
    params = {name: float(circuit.ec[i, j]) for name, (i, j) in EC_INDEX.items()}
    params.update({f"ej{i + 1}": float(v) for i, v in enumerate(circuit.e_j)})
    params.update({f"beta_r{i + 1}": float(v) for i, v in enumerate(circuit.beta_res)})
    params["f_res"] = resonator.f_res
    return params


def circuit_from_params(
    params: Dict[str, float],
    phi_ext: float = 0.5,
    z_r: float = 50.0,
    n_photon_max: int = 3,
) -> Tuple[ReducedCircuit, ResonatorModel]:
    missing = set(PARAMETER_NAMES) - set(params)
    if missing:
        raise InvalidInputError("parameter set is incomplete", missing=sorted(missing))
    ec = np.zeros((N_MODES, N_MODES))
    for name, (i, j) in EC_INDEX.items():
        ec[i, j] = ec[j, i] = params[name]
    circuit = circuit_from_charging_energies(
        ec=ec,
        e_j=[params[f"ej{i}"] for i in range(1, 5)],
        phi_ext=phi_ext,
        beta_res=[params[f"beta_r{i}"] for i in range(1, 4)],
    )
    return circuit, ResonatorModel(f_res=params["f_res"], z_r=z_r, n_photon_max=n_photon_max)


def branch_labels(qubit_levels: int) -> List[str]:
    return [f"0{k}" for k in range(1, qubit_levels)] + [RESONATOR_LABEL]


def model_branches(
    params: Dict[str, float],
    flux: float,
    qubit_levels: int = 4,
    n_photon_max: int = 3,
    n_max: int = 5,
    z_r: float = 50.0,
) -> Dict[str, float]:
    """Dressed transition frequencies out of the ground state, keyed by bare-state label.

    "0k" is the qubit excitation to level k with no photons, "res" the one-photon resonator branch."""
    circuit, resonator = circuit_from_params(params, flux, z_r, n_photon_max)
    basis = ChargeBasis(n_max)
    settings = SolverSettings(n_max=n_max, dense_threshold=1000)
    qubit = eigensolve(assemble_rhombus(circuit, basis), qubit_levels, settings.dense_threshold)
    vectors = qubit.vectors
    charge_ops = [vectors.conj().T @ (charge_operator(mode, basis) @ vectors) for mode in range(1, N_MODES + 1)]
    h = dressed_composite(qubit.energies, charge_ops, resonator, circuit.beta_res)
    energies, states = linalg.eigh(h)
    # bare state |q, m> sits at index q * (n_photon_max + 1) + m
    overlap = np.abs(states) ** 2
    bare, dressed = optimize.linear_sum_assignment(-overlap)
    dressed_of = dict(zip(bare, dressed))
    n_photon = n_photon_max + 1
    ground = energies[dressed_of[0]]
    branches = {f"0{k}": float(energies[dressed_of[k * n_photon]] - ground) for k in range(1, qubit_levels)}
    branches[RESONATOR_LABEL] = float(energies[dressed_of[1]] - ground)
    return branches


def model_transitions(params: Dict[str, float], flux: float, labels: Sequence[str], **model) -> List[float]:
    branches = model_branches(params, flux, **model)
    unknown = [label for label in labels if label not in branches]
    if unknown:
        raise InvalidInputError("unknown transition label", labels=unknown)
    return [branches[label] for label in labels]


def assign_nearest_branch(branches: Dict[str, float], freq: float) -> Tuple[str, float]:
    """Closest model branch to a measured frequency; ties resolve to the first label in sorted order."""
    if not branches:
        raise InvalidInputError("no model branches to assign to")
    label = min(sorted(branches), key=lambda name: abs(branches[name] - freq))
    return label, branches[label]


def _model_kwargs(problem: Optional[FitProblem]) -> dict:
    if problem is None:
        return {}
    return {"qubit_levels": problem.qubit_levels, "n_photon_max": problem.n_photon_max,
            "n_max": problem.n_max, "z_r": problem.z_r}


def residuals(
    dataset: TransitionDataset,
    params: Dict[str, float],
    problem: Optional[FitProblem] = None,
) -> Tuple[np.ndarray, float]:
    """sqrt(w) (f_model - f_data) per row, optionally capped, and the summed square."""
    if len(dataset) == 0:
        raise InvalidInputError("dataset is empty")
    frame = dataset.frame
    fluxes = sorted(set(frame["flux_phi0"]))
    workers = problem.workers if problem is not None else 1
    kwargs = _model_kwargs(problem)
    branch_sets = map_ordered(lambda phi: model_branches(params, phi, **kwargs), fluxes, workers)
    by_flux = dict(zip(fluxes, branch_sets))
    values = np.empty(len(frame))
    for row, (flux, freq, label, weight) in enumerate(frame[DATASET_COLUMNS].itertuples(index=False)):
        branches = by_flux[flux]
        if label == UNASSIGNED:
            _, model = assign_nearest_branch(branches, freq)
        elif label in branches:
            model = branches[label]
        else:
            raise InvalidInputError("unknown transition label", label=label, row=row)
        values[row] = np.sqrt(weight) * (model - freq)
    if problem is not None and problem.robust_cap is not None:
        values = np.clip(values, -problem.robust_cap, problem.robust_cap)
    return values, float(np.sum(values**2))


def synthetic_dataset(
    params: Dict[str, float],
    flux_grid,
    labels: Sequence[str] = ("01",),
    noise_ghz: float = 0.0,
    seed: int = 0,
    **model,
) -> TransitionDataset:
    """Model transitions at known parameters plus Gaussian frequency noise."""
    rng = np.random.default_rng(seed)
    rows = []
    for flux in np.asarray(flux_grid, dtype=float):
        for label, freq in zip(labels, model_transitions(params, flux, labels, **model)):
            rows.append((float(flux), float(freq + rng.normal(0.0, noise_ghz)) if noise_ghz else float(freq), label, 1.0))
    return TransitionDataset.from_rows(rows)


class _Coordinates:
    """Map between physical parameters and the unit cube of representative free parameters."""

    def __init__(self, problem: FitProblem, base: Dict[str, float]):
        self.base = dict(base)
        for spec in problem.parameters:
            self.base[spec.name] = spec.initial
        tied = {name: group for group in problem.ties for name in group}
        self.groups: List[List[str]] = []
        for spec in problem.parameters:
            if spec.fixed:
                continue
            group = tied.get(spec.name, [spec.name])
            if group[0] == spec.name:
                self.groups.append(list(group))
        self.lower = np.empty(len(self.groups))
        self.upper = np.empty(len(self.groups))
        for g, group in enumerate(self.groups):
            specs = [problem.spec(name) for name in group]
            self.lower[g] = max(s.lower for s in specs)
            self.upper[g] = min(s.upper for s in specs)
            if self.lower[g] > self.upper[g]:
                raise InvalidInputError("tie group has empty bounds", group=group)

    @property
    def names(self) -> List[str]:
        return [group[0] for group in self.groups]

    def decode(self, u: np.ndarray) -> Dict[str, float]:
        params = dict(self.base)
        values = self.lower + np.clip(u, 0.0, 1.0) * (self.upper - self.lower)
        for group, value in zip(self.groups, values):
            for name in group:
                params[name] = float(value)
        return params

    def encode(self, params: Dict[str, float]) -> np.ndarray:
        for group in self.groups:
            if not np.allclose([params[name] for name in group], params[group[0]], rtol=1e-12, atol=0):
                raise InvalidInputError("tied parameters must share one starting value", group=group)
        values = np.array([params[group[0]] for group in self.groups])
        if np.any(values < self.lower) or np.any(values > self.upper):
            raise InvalidInputError("initial guess lies outside the bounds", names=self.names)
        width = np.where(self.upper > self.lower, self.upper - self.lower, 1.0)
        return (values - self.lower) / width


@dataclass
class FitResult:
    params: Dict[str, float]
    initial_params: Dict[str, float]
    cost: float
    initial_cost: float
    cost_trace: List[float]
    converged: bool
    evaluations: int
    sensitivity: Dict[str, float] = field(default_factory=dict)
    message: str = ""

    def to_report(self) -> dict:
        return {
            "initial_params": self.initial_params,
            "params": self.params,
            "initial_cost": self.initial_cost,
            "cost": self.cost,
            "cost_trace": self.cost_trace,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "sensitivity": self.sensitivity,
            "message": self.message,
        }


class _Budget(Exception):
    pass


def fit(
    problem: FitProblem,
    dataset: TransitionDataset,
    base_params: Dict[str, float],
    initial_guess: Optional[Dict[str, float]] = None,
) -> FitResult:
    """Bounded Nelder-Mead in unit-cube coordinates with seeded restarts."""
    coords = _Coordinates(problem, base_params)
    start = dict(coords.base)
    if initial_guess:
        start.update(initial_guess)
    u0 = coords.encode(start)
    rng = np.random.default_rng(problem.seed)
    trace: List[float] = []
    best = {"u": u0.copy(), "cost": np.inf}

    def objective(u: np.ndarray) -> float:
        if len(trace) >= problem.max_evals:
            raise _Budget()
        _, cost = residuals(dataset, coords.decode(u), problem)
        if cost < best["cost"]:
            best["u"], best["cost"] = np.clip(u, 0.0, 1.0).copy(), cost
        trace.append(best["cost"])
        return cost

    initial_cost = objective(u0)
    initial_params = coords.decode(u0)
    logger.info(f"Fitting {len(coords.groups)} parameter groups to {len(dataset)} points, initial cost {initial_cost:.6e}")
    converged, message = True, ""
    dims = len(u0)
    try:
        if dims == 0:
            message = "no free parameters"
        for attempt in range(problem.restarts + 1):
            if dims == 0:
                break
            simplex = None
            if attempt:
                # restart around the best point so a collapsed simplex can recover
                spread = rng.uniform(-0.05, 0.05, size=(dims, dims)) + 0.05 * np.eye(dims)
                simplex = np.clip(np.vstack([best["u"], best["u"] + spread]), 0.0, 1.0)
            before = best["cost"]
            result = optimize.minimize(
                objective, best["u"], method="Nelder-Mead", bounds=[(0.0, 1.0)] * dims,
                options={"xatol": problem.xatol, "fatol": problem.fatol, "initial_simplex": simplex,
                         "maxfev": problem.max_evals},
            )
            converged = bool(result.success)
            message = str(result.message)
            logger.info(f"Fit pass {attempt + 1}: cost {best['cost']:.6e} after {len(trace)} evaluations")
            if attempt and before - best["cost"] <= problem.fatol:
                break
    except _Budget:
        converged = False
        message = f"stopped after {problem.max_evals} evaluations"
        logger.warning(f"Fit hit the evaluation budget; returning best-so-far cost {best['cost']:.6e}")

    params = coords.decode(best["u"])
    sensitivity = {}
    if dims:
        sensitivity = _sensitivity(problem, dataset, coords, params, best["cost"])
    return FitResult(
        params=params,
        initial_params=initial_params,
        cost=best["cost"],
        initial_cost=initial_cost,
        cost_trace=trace,
        converged=converged,
        evaluations=len(trace),
        sensitivity=sensitivity,
        message=message,
    )


def _sensitivity(problem, dataset, coords: _Coordinates, params: Dict[str, float], cost: float) -> Dict[str, float]:
    """Second difference of the cost along each free group, in GHz^2 per unit^2."""
    curvature = {}
    for g, name in enumerate(coords.names):
        width = coords.upper[g] - coords.lower[g]
        h = problem.sensitivity_step * width
        if h == 0:
            curvature[name] = 0.0
            continue
        center = params[name]
        lo, hi = max(coords.lower[g], center - h), min(coords.upper[g], center + h)
        if hi - center < h or center - lo < h:
            # one-sided at a bound: shift the stencil inwards
            mid = min(max(center, coords.lower[g] + h), coords.upper[g] - h)
            lo, center_point, hi = mid - h, mid, mid + h
        else:
            center_point = center
        costs = []
        for value in (lo, center_point, hi):
            trial = dict(params)
            for member in coords.groups[g]:
                trial[member] = value
            costs.append(residuals(dataset, trial, problem)[1])
        curvature[name] = float((costs[0] - 2 * costs[1] + costs[2]) / h**2)
    return curvature


def default_fit_problem(base: Dict[str, float], free: Sequence[str], rel_bound: float = 0.2, **options) -> FitProblem:
    """Bounds +-rel_bound around the base value for each free name; tied groups where all members are free.

    A tied group starts from the mean of its members."""
    ties = [group for group in DEFAULT_TIES if all(name in free for name in group)]
    start = dict(base)
    for group in ties:
        mean = float(np.mean([base[name] for name in group]))
        start.update({name: mean for name in group})
    parameters = []
    for name in PARAMETER_NAMES:
        value = start[name]
        span = abs(value) * rel_bound or rel_bound
        parameters.append(FitParameterSpec(name=name, initial=value, lower=value - span, upper=value + span,
                                           fixed=name not in free))
    return FitProblem(parameters=parameters, ties=ties, **options)


def fit_capacitance_network(target_ec, template: CapacitanceNetwork, rel_tol: float = 1e-6) -> CapacitanceNetwork:
    """Adjust the pair capacitances of `template` until the reduced charging matrix matches `target_ec`."""
    target = np.asarray(target_ec, dtype=float)
    upper = np.triu_indices(4, k=1)
    rows, cols = np.triu_indices(N_MODES)

    def build(x: np.ndarray) -> CapacitanceNetwork:
        pair = np.zeros((4, 4))
        pair[upper] = x
        return CapacitanceNetwork(pair, template.c_ground, template.c_res, template.c_drive)

    def mismatch(x: np.ndarray) -> np.ndarray:
        ec = reduce_to_three_modes(build(x), JunctionSet(np.ones(4))).ec
        return (ec[rows, cols] - target[rows, cols]) / np.abs(target).max()

    x0 = np.maximum(template.c_pair[upper], 1e-3)
    result = optimize.least_squares(mismatch, x0, bounds=(0.0, np.inf), xtol=1e-14, ftol=1e-14, gtol=1e-14)
    worst = float(np.max(np.abs(result.fun)))
    if worst > rel_tol:
        raise FitError("no nonnegative network reproduces the target charging matrix", mismatch=worst)
    return build(result.x)
