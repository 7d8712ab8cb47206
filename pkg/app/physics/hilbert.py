# app/physics/hilbert.py
from __future__ import annotations

import enum
import functools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import sparse

from app.physics.circuit import N_MODES, ReducedCircuit
from app.physics.constants import E_CHARGE, GHZ, HBAR, PLANCK_H
from app.services.errors import BasisError, OperatorError


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


DEFAULT_N_MAX = 6
DEFAULT_PHOTONS = 4
DEFAULT_MAX_DIM = 200_000
HERMITIAN_TOL = 1e-12


class Gauge(enum.Enum):
    SINGLE_JUNCTION = "single-junction"
    SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class ChargeBasis:
    """Truncated charge basis, states -n_max..n_max per mode, mode-1-major ordering."""

    n_max: int = DEFAULT_N_MAX
    modes: int = N_MODES

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise BasisError("n_max must be an integer >= 1", n_max=self.n_max)
        if self.modes < 1:
            raise BasisError("need at least one mode", modes=self.modes)

    @property
    def size(self) -> int:
        return 2 * self.n_max + 1

    @property
    def dim(self) -> int:
        return self.size ** self.modes

    @property
    def charges(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    def charge_grid(self) -> np.ndarray:
        """Array of shape (modes, dim): charge of every mode for every basis state."""
        grids = np.meshgrid(*([self.charges] * self.modes), indexing="ij")
        return np.stack([g.ravel() for g in grids])

    def index(self, charges: Sequence[int]) -> int:
        if len(charges) != self.modes or any(abs(n) > self.n_max for n in charges):
            raise BasisError("charge state outside basis", charges=tuple(charges))
        return int(np.ravel_multi_index([n + self.n_max for n in charges], [self.size] * self.modes))

    def embed(self, vector: np.ndarray, target: "ChargeBasis") -> np.ndarray:
        """Zero-pad a state of this basis into a larger one."""
        if target.modes != self.modes or target.n_max < self.n_max:
            raise BasisError("target basis must contain this basis", source=self.n_max, target=target.n_max)
        pad = target.n_max - self.n_max
        tensor = np.reshape(vector, [self.size] * self.modes)
        return np.pad(tensor, [(pad, pad)] * self.modes).ravel()


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Hermitian operator in a truncated charge basis, energies in GHz."""

    matrix: sparse.csr_matrix
    basis: Optional[ChargeBasis]
    gauge: Gauge = Gauge.SINGLE_JUNCTION

    def __post_init__(self):
        if self.basis is not None and self.matrix.shape[0] % self.basis.dim != 0:
            raise BasisError("matrix dimension does not match basis", shape=self.matrix.shape, dim=self.basis.dim)
        error = hermiticity_error(self.matrix)
        scale = max(1.0, abs(self.matrix).max())
        if error > HERMITIAN_TOL * scale:
            raise OperatorError("assembled matrix is not Hermitian", error=error)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def export_coo(self, path) -> Path:
        """Write the matrix as `row,col,re,im` text for debugging."""
        coo = self.matrix.tocoo()
        frame = pd.DataFrame({"row": coo.row, "col": coo.col, "re": coo.data.real, "im": coo.data.imag})
        path = Path(path)
        frame.to_csv(path, index=False, float_format="%.17g")
        logger.info(f"Exported {coo.nnz} nonzeros to {path}")
        return path


def hermiticity_error(matrix) -> float:
    diff = matrix - matrix.conj().T
    if sparse.issparse(diff):
        return float(abs(diff).max()) if diff.nnz else 0.0
    return float(np.abs(diff).max())


def _check_mode(mode: int, basis: ChargeBasis):
    if not 1 <= mode <= basis.modes:
        raise OperatorError("mode out of range", mode=mode, modes=basis.modes)


def _embed_factor(factor: sparse.spmatrix, mode: int, basis: ChargeBasis) -> sparse.csr_matrix:
    identity = sparse.identity(basis.size, format="csr")
    result = None
    for m in range(1, basis.modes + 1):
        piece = factor if m == mode else identity
        result = piece if result is None else sparse.kron(result, piece, format="csr")
    return sparse.csr_matrix(result, dtype=complex)


@functools.lru_cache(maxsize=64)
def charge_operator(mode: int, basis: ChargeBasis) -> sparse.csr_matrix:
    """n_mode: diagonal with the integer charges of one tensor factor."""
    _check_mode(mode, basis)
    return _embed_factor(sparse.diags(basis.charges.astype(float)), mode, basis)


@functools.lru_cache(maxsize=64)
def shift_operator(mode: int, basis: ChargeBasis) -> sparse.csr_matrix:
    """exp(-i phi_mode): lowers the charge of one mode by one, edge state is annihilated."""
    _check_mode(mode, basis)
    lower = sparse.diags(np.ones(basis.size - 1), offsets=1)
    return _embed_factor(lower, mode, basis)


def cos_operator(mode: int, basis: ChargeBasis, shift: float = 0.0) -> sparse.csr_matrix:
    """cos(phi_mode + shift)."""
    s = shift_operator(mode, basis)
    return 0.5 * (np.exp(1j * shift) * s.conj().T + np.exp(-1j * shift) * s)


def sin_operator(mode: int, basis: ChargeBasis, shift: float = 0.0) -> sparse.csr_matrix:
    """sin(phi_mode + shift)."""
    s = shift_operator(mode, basis)
    return (np.exp(1j * shift) * s.conj().T - np.exp(-1j * shift) * s) / 2j


def loop_raising(basis: ChargeBasis) -> sparse.csr_matrix:
    """exp(i (phi_1 + phi_2 + phi_3))."""
    result = sparse.identity(basis.dim, format="csr", dtype=complex)
    for mode in range(1, basis.modes + 1):
        result = result @ shift_operator(mode, basis).conj().T
    return sparse.csr_matrix(result)


def loop_cos(basis: ChargeBasis, shift: float) -> sparse.csr_matrix:
    """cos(phi_1 + phi_2 + phi_3 + shift)."""
    up = np.exp(1j * shift) * loop_raising(basis)
    return 0.5 * (up + up.conj().T)


def loop_sin(basis: ChargeBasis, shift: float) -> sparse.csr_matrix:
    up = np.exp(1j * shift) * loop_raising(basis)
    return (up - up.conj().T) / 2j


def gauge_shifts(phi_ext: float, gauge: Gauge):
    """Phase offsets (per arm junction, loop junction) of the cosine arguments."""
    theta = 2 * np.pi * phi_ext
    if gauge is Gauge.SINGLE_JUNCTION:
        return 0.0, -theta
    return theta / 4, -theta / 4


def gauge_phase(basis: ChargeBasis, phi_ext: float) -> np.ndarray:
    """Diagonal of D with H_symmetric = D H_single D^dagger."""
    total = basis.charge_grid().sum(axis=0)
    return np.exp(1j * (np.pi * phi_ext / 2) * total)


def kinetic_diagonal(ec: np.ndarray, n_g: np.ndarray, basis: ChargeBasis) -> np.ndarray:
    offsets = basis.charge_grid() - np.asarray(n_g, dtype=float)[:, None]
    return 4.0 * np.einsum("id,ij,jd->d", offsets, ec, offsets)


def assemble_rhombus(
    circuit: ReducedCircuit,
    basis: ChargeBasis = ChargeBasis(),
    gauge: Gauge = Gauge.SINGLE_JUNCTION,
) -> HamiltonianMatrix:
    """Three-mode rhombus Hamiltonian in the truncated charge basis."""
    if basis.modes != N_MODES:
        raise BasisError("rhombus needs a three-mode basis", modes=basis.modes)
    arm_shift, loop_shift = gauge_shifts(circuit.phi_ext, gauge)
    h = sparse.diags(kinetic_diagonal(circuit.ec, circuit.n_g, basis).astype(complex), format="csr")
    for mode in range(1, N_MODES + 1):
        if circuit.e_j[mode - 1]:
            h = h - circuit.e_j[mode - 1] * cos_operator(mode, basis, arm_shift)
    if circuit.e_j[3]:
        h = h - circuit.e_j[3] * loop_cos(basis, loop_shift)
    logger.debug(f"Assembled rhombus: dim={basis.dim}, gauge={gauge.value}, flux={circuit.phi_ext}")
    return HamiltonianMatrix(sparse.csr_matrix(h), basis, gauge)


def assemble_transmon(e_c: float, e_j: float, n_g: float = 0.0, n_max: int = DEFAULT_N_MAX) -> HamiltonianMatrix:
    """Single-mode 4 E_C (n - n_g)^2 - E_J cos(phi)."""
    basis = ChargeBasis(n_max=n_max, modes=1)
    h = sparse.diags(4.0 * e_c * (basis.charges - n_g) ** 2 + 0j, format="csr")
    h = h - e_j * cos_operator(1, basis)
    return HamiltonianMatrix(sparse.csr_matrix(h), basis)


def assemble_cp_qubit(e_c: float, e_2: float, n_g: float = 0.0, n_max: int = DEFAULT_N_MAX) -> HamiltonianMatrix:
    """Ideal charge-parity qubit 4 E_C (n - n_g)^2 + E_2 cos(2 phi); minima at phi = +-pi/2."""
    if n_max < 2:
        raise BasisError("the cos(2 phi) term needs n_max >= 2", n_max=n_max)
    basis = ChargeBasis(n_max=n_max, modes=1)
    diagonal = 4.0 * e_c * (basis.charges - n_g) ** 2
    pair_hop = np.full(basis.size - 2, 0.5 * e_2)
    h = sparse.diags([pair_hop, diagonal, pair_hop], offsets=[-2, 0, 2], format="csr", dtype=complex)
    return HamiltonianMatrix(h, basis)


@dataclass(frozen=True)
class ResonatorModel:
    """Readout resonator: frequency in GHz, nominal impedance in ohm."""

    f_res: float = 6.7198
    z_r: float = 50.0
    n_photon_max: int = DEFAULT_PHOTONS

    def __post_init__(self):
        if self.f_res <= 0:
            raise OperatorError("resonator frequency must be positive", f_res=self.f_res)
        if self.n_photon_max < 1:
            raise OperatorError("need at least one photon state", n_photon_max=self.n_photon_max)

    @property
    def v0(self) -> float:
        """Zero-point voltage of the half-wave resonator in volts."""
        omega = 2 * np.pi * self.f_res * GHZ
        return float(np.sqrt(HBAR * omega**2 * self.z_r / np.pi))

    @property
    def coupling_scale(self) -> float:
        """2 e V0 / h in GHz."""
        return 2 * E_CHARGE * self.v0 / PLANCK_H / GHZ


def annihilation(n_photon_max: int) -> sparse.csr_matrix:
    return sparse.diags(np.sqrt(np.arange(1, n_photon_max + 1)), offsets=1, format="csr", dtype=complex)


def assemble_composite(
    h_qubit: HamiltonianMatrix,
    resonator: ResonatorModel,
    beta_res,
    max_dim: int = DEFAULT_MAX_DIM,
) -> HamiltonianMatrix:
    """Qubit plus resonator with 2 e V0 sum_i beta_i n_i (a + a^dagger) coupling, full charge basis."""
    basis = h_qubit.basis
    n_photon = resonator.n_photon_max + 1
    dim = h_qubit.dim * n_photon
    if dim > max_dim:
        raise BasisError("composite dimension exceeds the configured maximum", dim=dim, max_dim=max_dim)
    a = annihilation(resonator.n_photon_max)
    photon_number = sparse.csr_matrix(a.conj().T @ a)
    coupling = sparse.csr_matrix((h_qubit.dim, h_qubit.dim), dtype=complex)
    for mode, beta in enumerate(np.asarray(beta_res, dtype=float), start=1):
        if beta:
            coupling = coupling + beta * charge_operator(mode, basis)
    h = (
        sparse.kron(h_qubit.matrix, sparse.identity(n_photon), format="csr")
        + resonator.f_res * sparse.kron(sparse.identity(h_qubit.dim), photon_number, format="csr")
        + resonator.coupling_scale * sparse.kron(coupling, a + a.conj().T, format="csr")
    )
    return HamiltonianMatrix(sparse.csr_matrix(h), basis, h_qubit.gauge)


def dressed_composite(
    energies: np.ndarray,
    charge_ops: Sequence[np.ndarray],
    resonator: ResonatorModel,
    beta_res,
) -> np.ndarray:
    """Composite Hamiltonian in a truncated qubit eigenbasis (dense, GHz).

    `charge_ops[i]` is n_{i+1} projected onto the kept qubit eigenstates.
    Ordering is qubit-major: index = level * (n_photon_max + 1) + photons."""
    energies = np.asarray(energies, dtype=float)
    n_photon = resonator.n_photon_max + 1
    a = annihilation(resonator.n_photon_max).toarray()
    coupling = sum(beta * np.asarray(op) for beta, op in zip(np.asarray(beta_res, dtype=float), charge_ops))
    h = (
        np.kron(np.diag(energies), np.eye(n_photon))
        + resonator.f_res * np.kron(np.eye(len(energies)), a.conj().T @ a)
        + resonator.coupling_scale * np.kron(coupling, a + a.conj().T)
    )
    return 0.5 * (h + h.conj().T)


def number_operators(basis: ChargeBasis):
    return [charge_operator(mode, basis) for mode in range(1, basis.modes + 1)]


def weighted_charge(weights, basis: ChargeBasis) -> sparse.csr_matrix:
    """sum_i weights[i] * n_i."""
    result = sparse.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for mode, weight in enumerate(np.asarray(weights, dtype=float), start=1):
        if weight:
            result = result + weight * charge_operator(mode, basis)
    return result


def combined_charge_operator(mode: int, circuit: ReducedCircuit, basis: ChargeBasis) -> sparse.csr_matrix:
    """N_C^(mode), the charge combination seen by the dielectric of capacitor `mode`."""
    _check_mode(mode, basis)
    return weighted_charge(circuit.combined_charge_weights()[mode - 1], basis)


def drive_charge_operator(circuit: ReducedCircuit, basis: ChargeBasis) -> sparse.csr_matrix:
    if circuit.beta_drive is None:
        raise OperatorError("circuit has no drive coupling")
    return weighted_charge(circuit.beta_drive, basis)


def flux_operator(circuit: ReducedCircuit, basis: ChargeBasis, gauge: Gauge = Gauge.SYMMETRIC) -> sparse.csr_matrix:
    """dH/dPhi_ext in GHz per flux quantum, in the requested gauge."""
    arm_shift, loop_shift = gauge_shifts(circuit.phi_ext, gauge)
    e4 = circuit.e_j[3]
    if gauge is Gauge.SINGLE_JUNCTION:
        return -2 * np.pi * e4 * loop_sin(basis, loop_shift)
    op = -e4 * loop_sin(basis, loop_shift)
    for mode in range(1, N_MODES + 1):
        op = op + circuit.e_j[mode - 1] * sin_operator(mode, basis, arm_shift)
    return sparse.csr_matrix(0.5 * np.pi * op)


def to_gauge(vectors: np.ndarray, basis: ChargeBasis, phi_ext: float, source: Gauge, target: Gauge) -> np.ndarray:
    """Carry eigenvectors (columns or a single vector) between gauges."""
    if source is target:
        return vectors
    phase = gauge_phase(basis, phi_ext)
    if target is Gauge.SINGLE_JUNCTION:
        phase = phase.conj()
    return phase[:, None] * vectors if np.ndim(vectors) == 2 else phase * vectors
