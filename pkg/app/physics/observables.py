# app/physics/observables.py
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, optimize

from app.physics.circuit import N_MODES, ReducedCircuit
from app.physics.hilbert import (ChargeBasis, Gauge, HamiltonianMatrix,
                                 assemble_cp_qubit, charge_operator,
                                 combined_charge_operator,
                                 drive_charge_operator, flux_operator,
                                 gauge_shifts, loop_sin, sin_operator,
                                 to_gauge)
from app.physics.solver import (EigenResult, SolverSettings, converged_solve,
                                eigensolve, solve_circuit)
from app.services.errors import (AliasingError, InvalidInputError,
                                 OperatorError)


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


DEFAULT_GRID_SIZE = 64
MIN_FD_STEP = 1e-9
MERGE_TOL = 1e-4
CUT_BAND = np.pi / 8
HERMITIAN_TAGS = ("n_", "N_C_", "N_D", "sin_phi_", "sin_half_phi_", "O_phi")


@dataclass
class PhaseGridWavefunction:
    """Amplitudes on the uniform grid phi_k = -pi + 2 pi k / M, axis i is mode i+1."""

    grid_size: int
    amplitudes: np.ndarray

    @property
    def cell(self) -> float:
        return (2 * np.pi / self.grid_size) ** N_MODES

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.cell)

    @property
    def phases(self) -> np.ndarray:
        return -np.pi + 2 * np.pi * np.arange(self.grid_size) / self.grid_size

    def probability(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*([self.phases] * N_MODES), indexing="ij")


def to_phase_grid(vector: np.ndarray, basis: ChargeBasis, grid_size: int = DEFAULT_GRID_SIZE) -> PhaseGridWavefunction:
    """psi(phi) = (2 pi)^-3/2 sum_n c_n exp(i n.phi) sampled on the M^3 grid."""
    if grid_size < basis.size:
        raise AliasingError("phase grid too coarse for the charge cutoff", grid_size=grid_size, needed=basis.size)
    coefficients = np.reshape(np.asarray(vector, dtype=complex), [basis.size] * basis.modes)
    signs = (-1.0) ** np.abs(basis.charges)
    for axis in range(basis.modes):
        shape = [1] * basis.modes
        shape[axis] = basis.size
        coefficients = coefficients * signs.reshape(shape)
    spectrum = np.zeros([grid_size] * basis.modes, dtype=complex)
    index = np.ix_(*([basis.charges % grid_size] * basis.modes))
    spectrum[index] = coefficients
    amplitudes = np.fft.ifftn(spectrum) * grid_size**basis.modes / (2 * np.pi) ** (basis.modes / 2)
    return PhaseGridWavefunction(grid_size, amplitudes)


def support_overlap(psi_a: PhaseGridWavefunction, psi_b: PhaseGridWavefunction) -> float:
    """Overlap of the probability densities, 1 for identical and 0 for disjoint supports."""
    p_a, p_b = psi_a.probability(), psi_b.probability()
    return float(np.sum(p_a * p_b) / np.sqrt(np.sum(p_a**2) * np.sum(p_b**2)))


def wrap_phase(phi):
    return (np.asarray(phi) + np.pi) % (2 * np.pi) - np.pi


def junction_phases(grid: PhaseGridWavefunction, phi_ext: float, gauge: Gauge) -> List[np.ndarray]:
    """Gauge-invariant phase drops across junctions 1..4, wrapped to [-pi, pi)."""
    arm_shift, loop_shift = gauge_shifts(phi_ext, gauge)
    mesh = grid.mesh()
    drops = [m + arm_shift for m in mesh]
    drops.append(sum(mesh) + loop_shift)
    return [wrap_phase(d) for d in drops]


@dataclass
class MatrixElementReport:
    tag: str
    value: complex
    cut_weight: Optional[float] = None

    @property
    def magnitude(self) -> float:
        return float(abs(self.value))

    def to_dict(self) -> dict:
        row = {"tag": self.tag, "re": float(self.value.real), "im": float(self.value.imag), "magnitude": self.magnitude}
        if self.cut_weight is not None:
            row["cut_weight"] = self.cut_weight
        return row


def _index(tag: str, prefix: str, upper: int) -> int:
    try:
        index = int(tag[len(prefix):])
    except ValueError:
        raise OperatorError("unknown operator tag", tag=tag)
    if not 1 <= index <= upper:
        raise OperatorError("operator index out of range", tag=tag)
    return index


def half_sine_element(
    state_a: np.ndarray,
    state_b: np.ndarray,
    junction: int,
    circuit: ReducedCircuit,
    basis: ChargeBasis,
    gauge: Gauge = Gauge.SINGLE_JUNCTION,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> MatrixElementReport:
    """<a| sin(phi_j / 2) |b> by pointwise multiplication on the phase grid, principal branch.

    `cut_weight` is the larger probability either state carries within pi/8 of the branch cut."""
    psi_a = to_phase_grid(state_a, basis, grid_size)
    psi_b = to_phase_grid(state_b, basis, grid_size)
    drop = junction_phases(psi_a, circuit.phi_ext, gauge)[junction - 1]
    value = np.sum(np.conj(psi_a.amplitudes) * np.sin(drop / 2) * psi_b.amplitudes) * psi_a.cell
    near_cut = np.abs(drop) > np.pi - CUT_BAND
    cut_weight = max(
        float(np.sum(psi_a.probability()[near_cut]) * psi_a.cell),
        float(np.sum(psi_b.probability()[near_cut]) * psi_b.cell),
    )
    return MatrixElementReport(f"sin_half_phi_{junction}", complex(value), cut_weight)


def operator_for_tag(tag: str, circuit: ReducedCircuit, basis: ChargeBasis, gauge: Gauge):
    """Sparse operator behind a charge-basis tag, in the gauge of the states."""
    arm_shift, loop_shift = gauge_shifts(circuit.phi_ext, gauge)
    if tag.startswith("N_C_"):
        return combined_charge_operator(_index(tag, "N_C_", N_MODES), circuit, basis)
    if tag == "N_D":
        return drive_charge_operator(circuit, basis)
    if tag.startswith("n_"):
        return charge_operator(_index(tag, "n_", N_MODES), basis)
    if tag.startswith("sin_phi_"):
        junction = _index(tag, "sin_phi_", 4)
        if junction == 4:
            return loop_sin(basis, loop_shift)
        return sin_operator(junction, basis, arm_shift)
    if tag == "O_phi":
        return flux_operator(circuit, basis, gauge)
    raise OperatorError("unknown operator tag", tag=tag)


def matrix_element(
    tag: str,
    state_a: np.ndarray,
    state_b: np.ndarray,
    circuit: ReducedCircuit,
    basis: ChargeBasis,
    gauge: Gauge = Gauge.SINGLE_JUNCTION,
    grid_size: int = DEFAULT_GRID_SIZE,
) -> MatrixElementReport:
    """<a|O|b> for tags n_i, N_C_i, N_D, sin_phi_i, sin_half_phi_i, O_phi.

    O_phi is always evaluated in the symmetric gauge; states are carried over when needed."""
    if len(state_a) != basis.dim or len(state_b) != basis.dim:
        raise InvalidInputError("states do not belong to the basis", dim=basis.dim)
    if tag.startswith("sin_half_phi_"):
        junction = _index(tag, "sin_half_phi_", 4)
        return half_sine_element(state_a, state_b, junction, circuit, basis, gauge, grid_size)
    if tag == "O_phi" and gauge is not Gauge.SYMMETRIC:
        state_a = to_gauge(state_a, basis, circuit.phi_ext, gauge, Gauge.SYMMETRIC)
        state_b = to_gauge(state_b, basis, circuit.phi_ext, gauge, Gauge.SYMMETRIC)
        gauge = Gauge.SYMMETRIC
    op = operator_for_tag(tag, circuit, basis, gauge)
    return MatrixElementReport(tag, complex(np.vdot(state_a, op @ state_b)))


def qubit_frequency(circuit: ReducedCircuit, settings: SolverSettings = SolverSettings()) -> float:
    return converged_solve(circuit, settings, k=2).transition(0, 1)


def computational_matrix_elements(
    circuit: ReducedCircuit,
    settings: SolverSettings = SolverSettings(),
    result: Optional[EigenResult] = None,
) -> Dict[str, MatrixElementReport]:
    """<0|O|1> for the operators that set the charge, flux and quasiparticle couplings."""
    result = result or converged_solve(circuit, settings, k=2)
    tags = ["n_1", "n_2", "n_3", "N_C_1", "N_C_2", "N_C_3", "sin_phi_1", "sin_half_phi_1",
            "sin_half_phi_2", "sin_half_phi_3", "sin_half_phi_4", "O_phi"]
    if circuit.beta_drive is not None:
        tags.append("N_D")
    ground, excited = result.state(0), result.state(1)
    return {
        tag: matrix_element(tag, ground, excited, circuit, result.basis, settings.gauge, settings.phase_grid_size)
        for tag in tags
    }


def _transition_at(circuit: ReducedCircuit, settings: SolverSettings, n_max: int, levels: Tuple[int, int]) -> float:
    return solve_circuit(circuit, settings.with_n_max(n_max), k=max(levels) + 1).transition(*levels)


def _accepted_n_max(circuit: ReducedCircuit, settings: SolverSettings, k: int) -> int:
    return converged_solve(circuit, settings, k).basis.n_max


def _dispersion(build: Callable[[float], HamiltonianMatrix], levels: Tuple[int, int]) -> float:
    k = max(levels) + 1
    low = eigensolve(build(0.0), k).transition(*levels)
    high = eigensolve(build(0.5), k).transition(*levels)
    return abs(high - low)


def charge_dispersion(
    circuit: ReducedCircuit,
    settings: SolverSettings = SolverSettings(),
    level_pair: Tuple[int, int] = (0, 1),
    mode: int = 1,
) -> float:
    """|f(n_g=0.5) - f(n_g=0)| on one mode, other offsets at zero, both at one truncation."""
    base = circuit.with_offsets(np.zeros(N_MODES))
    n_max = _accepted_n_max(base, settings, max(level_pair) + 1)
    low = _transition_at(base, settings, n_max, level_pair)
    high = _transition_at(base.with_offset(mode, 0.5), settings, n_max, level_pair)
    return abs(high - low)


def cp_qubit_dispersion(e_c: float, e_2: float, n_max: int = 12, level_pair: Tuple[int, int] = (0, 1)) -> float:
    return _dispersion(lambda n_g: assemble_cp_qubit(e_c, e_2, n_g, n_max), level_pair)


def charge_gradient(circuit: ReducedCircuit, settings: SolverSettings = SolverSettings()) -> np.ndarray:
    """Half-period estimate of d f01 / d n_g^(i) for every mode, GHz per Cooper pair."""
    n_max = _accepted_n_max(circuit, settings, 2)
    grad = np.zeros(N_MODES)
    for mode in range(1, N_MODES + 1):
        low = _transition_at(circuit.with_offset(mode, 0.0), settings, n_max, (0, 1))
        high = _transition_at(circuit.with_offset(mode, 0.5), settings, n_max, (0, 1))
        grad[mode - 1] = (high - low) / 0.5
    return grad


def _check_step(step: float, at: float):
    if not np.isfinite(step) or step < MIN_FD_STEP * max(1.0, abs(at)):
        raise InvalidInputError("finite-difference step underflows", step=step, at=at)


def flux_slope(circuit: ReducedCircuit, settings: SolverSettings = SolverSettings(), level_pair=(0, 1)) -> float:
    """Centered difference of the transition frequency, GHz per flux quantum."""
    h = settings.flux_step
    _check_step(h, circuit.phi_ext)
    n_max = _accepted_n_max(circuit, settings, max(level_pair) + 1)
    up = _transition_at(circuit.with_flux(circuit.phi_ext + h), settings, n_max, level_pair)
    down = _transition_at(circuit.with_flux(circuit.phi_ext - h), settings, n_max, level_pair)
    return (up - down) / (2 * h)


def window_flux_slope(
    circuit: ReducedCircuit,
    window: float,
    settings: SolverSettings = SolverSettings(),
    level_pair=(0, 1),
) -> float:
    """Mean |d f / d Phi| over [Phi - window, Phi + window], GHz per flux quantum.

    Averages the two one-sided differences, so at a sweet spot it is the frequency rise
    across the window rather than zero. `window=0` falls back to the local slope.
    """
    if window == 0:
        return abs(flux_slope(circuit, settings, level_pair))
    _check_step(window, circuit.phi_ext)
    n_max = _accepted_n_max(circuit, settings, max(level_pair) + 1)
    mid = _transition_at(circuit, settings, n_max, level_pair)
    up = _transition_at(circuit.with_flux(circuit.phi_ext + window), settings, n_max, level_pair)
    down = _transition_at(circuit.with_flux(circuit.phi_ext - window), settings, n_max, level_pair)
    return (abs(up - mid) + abs(mid - down)) / (2 * window)


def flux_curvature(circuit: ReducedCircuit, settings: SolverSettings = SolverSettings(), level_pair=(0, 1)) -> float:
    """Second difference of the transition frequency, GHz per flux quantum squared."""
    h = settings.curvature_step
    _check_step(h, circuit.phi_ext)
    n_max = _accepted_n_max(circuit, settings, max(level_pair) + 1)
    mid = _transition_at(circuit, settings, n_max, level_pair)
    up = _transition_at(circuit.with_flux(circuit.phi_ext + h), settings, n_max, level_pair)
    down = _transition_at(circuit.with_flux(circuit.phi_ext - h), settings, n_max, level_pair)
    return (up - 2 * mid + down) / h**2


def level_flux_derivatives(circuit: ReducedCircuit, settings: SolverSettings, k: int) -> np.ndarray:
    """Centered differences dE_k/dPhi at one truncation, used against Hellmann-Feynman."""
    h = settings.flux_step
    _check_step(h, circuit.phi_ext)
    up = solve_circuit(circuit.with_flux(circuit.phi_ext + h), settings, k).energies
    down = solve_circuit(circuit.with_flux(circuit.phi_ext - h), settings, k).energies
    return (up - down) / (2 * h)


@dataclass(frozen=True)
class PotentialMinimum:
    phases: Tuple[float, float, float]
    energy: float


def potential(phases, circuit: ReducedCircuit) -> float:
    """Classical Josephson potential in GHz, single-junction gauge."""
    phases = np.asarray(phases, dtype=float)
    e_j = circuit.e_j
    loop = phases.sum() - 2 * np.pi * circuit.phi_ext
    return float(-np.dot(e_j[:3], np.cos(phases)) - e_j[3] * np.cos(loop))


def potential_gradient(phases, circuit: ReducedCircuit) -> np.ndarray:
    phases = np.asarray(phases, dtype=float)
    loop = phases.sum() - 2 * np.pi * circuit.phi_ext
    return circuit.e_j[:3] * np.sin(phases) + circuit.e_j[3] * np.sin(loop)


def potential_hessian(phases, circuit: ReducedCircuit) -> np.ndarray:
    phases = np.asarray(phases, dtype=float)
    loop = phases.sum() - 2 * np.pi * circuit.phi_ext
    return np.diag(circuit.e_j[:3] * np.cos(phases)) + circuit.e_j[3] * np.cos(loop)


def _periodic_distance(a, b) -> float:
    return float(np.linalg.norm(wrap_phase(np.asarray(a) - np.asarray(b))))


def classical_minima(circuit: ReducedCircuit, starts_per_axis: int = 3) -> List[PotentialMinimum]:
    """Local minima of the Josephson potential over [-pi, pi)^3, lowest energy first."""
    axis = -np.pi + 2 * np.pi * (np.arange(starts_per_axis) + 0.5) / starts_per_axis
    # off-lattice offset keeps starts away from symmetric saddle points
    offset = np.array([0.031, 0.057, 0.083])
    found: List[np.ndarray] = []
    failures = 0
    for start in np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, N_MODES):
        result = optimize.minimize(
            potential, start + offset, args=(circuit,), jac=potential_gradient,
            method="BFGS", options={"gtol": 1e-10, "maxiter": 500},
        )
        x = result.x
        for _ in range(5):
            hess = potential_hessian(x, circuit)
            try:
                x = x - linalg.solve(hess, potential_gradient(x, circuit), assume_a="sym")
            except linalg.LinAlgError:
                break
        if np.linalg.norm(potential_gradient(x, circuit)) > 1e-8:
            failures += 1
            continue
        if np.min(linalg.eigvalsh(potential_hessian(x, circuit))) <= 0:
            continue
        x = wrap_phase(x)
        if all(_periodic_distance(x, other) > MERGE_TOL for other in found):
            found.append(x)
    if failures:
        logger.warning(f"Minima descent did not converge from {failures} of {starts_per_axis ** 3} starts")
    minima = [PotentialMinimum(tuple(float(v) for v in x), potential(x, circuit)) for x in found]
    return sorted(minima, key=lambda m: (round(m.energy, 9), m.phases))


def minima_separation(minima: Sequence[PotentialMinimum]) -> float:
    """Periodic distance between the two lowest minima, radians."""
    if len(minima) < 2:
        raise InvalidInputError("need at least two minima", found=len(minima))
    return _periodic_distance(minima[0].phases, minima[1].phases)


def delta_wavefunction(n1: int, n2: int, n3: int, parity: str = "ground") -> float:
    """Charge amplitude of the even/odd superposition of phase deltas at +-pi/4 (1,1,1), unnormalized."""
    total = (n1 + n2 + n3) * np.pi / 4
    if parity == "ground":
        return float(np.cos(total))
    if parity == "excited":
        return float(np.sin(total))
    raise InvalidInputError("parity must be 'ground' or 'excited'", parity=parity)


def interferometer_transmission(t1: float, t2: float, phi_ext: float) -> float:
    """Normalized Cooper-pair tunneling probability through two interfering paths."""
    if t1 < 0 or t2 < 0:
        raise InvalidInputError("amplitudes must be nonnegative", t1=t1, t2=t2)
    if t1 == 0 and t2 == 0:
        raise InvalidInputError("both tunneling amplitudes are zero")
    amplitude = t1 + t2 * np.exp(2j * np.pi * phi_ext)
    return float(abs(amplitude) ** 2 / (t1 + t2) ** 2)


def prohibited_charge_weight(state: np.ndarray, basis: ChargeBasis, parity: str = "ground") -> float:
    """Probability on charge states that the two-delta picture forbids for this parity."""
    forbidden = {"ground": 2, "excited": 0}
    if parity not in forbidden:
        raise InvalidInputError("parity must be 'ground' or 'excited'", parity=parity)
    total = basis.charge_grid().sum(axis=0)
    mask = np.mod(total, 4) == forbidden[parity]
    prob = np.abs(np.asarray(state)) ** 2
    return float(prob[mask].sum() / prob.sum())


def phase_grid_frame(psi: PhaseGridWavefunction) -> pd.DataFrame:
    phi1, phi2, phi3 = psi.mesh()
    return pd.DataFrame({
        "phi1": phi1.ravel(), "phi2": phi2.ravel(), "phi3": phi3.ravel(),
        "re": psi.amplitudes.real.ravel(), "im": psi.amplitudes.imag.ravel(),
    })


def phase_slice_frame(psi: PhaseGridWavefunction, fixed_mode: int = 3, fixed_index: Optional[int] = None) -> pd.DataFrame:
    """2-D cut through the grid with one phase held at the grid point nearest zero."""
    if not 1 <= fixed_mode <= N_MODES:
        raise InvalidInputError("fixed_mode must be 1, 2 or 3", fixed_mode=fixed_mode)
    fixed_index = psi.grid_size // 2 if fixed_index is None else fixed_index
    cut = np.take(psi.amplitudes, fixed_index, axis=fixed_mode - 1)
    free = [m for m in range(1, N_MODES + 1) if m != fixed_mode]
    a, b = np.meshgrid(psi.phases, psi.phases, indexing="ij")
    return pd.DataFrame({
        f"phi{free[0]}": a.ravel(), f"phi{free[1]}": b.ravel(),
        "re": cut.real.ravel(), "im": cut.imag.ravel(), "prob": (np.abs(cut) ** 2).ravel(),
    })


def charge_slice_frame(state: np.ndarray, basis: ChargeBasis, n3: int = 0) -> pd.DataFrame:
    """Amplitudes c(n1, n2, n3) at fixed n3."""
    tensor = np.reshape(np.asarray(state), [basis.size] * basis.modes)
    cut = tensor[:, :, n3 + basis.n_max]
    a, b = np.meshgrid(basis.charges, basis.charges, indexing="ij")
    return pd.DataFrame({
        "n1": a.ravel(), "n2": b.ravel(), "re": cut.real.ravel(), "im": cut.imag.ravel(),
        "prob": (np.abs(cut) ** 2).ravel(),
    })


def delta_slice_frame(n_max: int, parity: str = "ground", n3: int = 0) -> pd.DataFrame:
    charges = np.arange(-n_max, n_max + 1)
    rows = [
        {"n1": n1, "n2": n2, "amplitude": delta_wavefunction(n1, n2, n3, parity)}
        for n1 in charges for n2 in charges
    ]
    return pd.DataFrame(rows, columns=["n1", "n2", "amplitude"])


def export_frame(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    frame.to_csv(path, index=False, float_format="%.12g")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path
