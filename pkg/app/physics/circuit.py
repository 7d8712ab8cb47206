# app/physics/circuit.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.physics.constants import CHARGING_GHZ_FF
from app.services.errors import (ConditioningError, DecouplingError,
                                 InvalidInputError, TransformationError)


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


N_NODES = 4
N_MODES = 3
DECOUPLING_THRESHOLD = 1e-9
MAX_CONDITION = 1e12


def _as_vector(values, size: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != (size,):
        raise InvalidInputError(f"{name} must have {size} entries", shape=arr.shape)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class JunctionSet:
    """Josephson energies in GHz; junction 4 closes the loop and carries the flux."""

    e_j: np.ndarray

    def __post_init__(self):
        e_j = _as_vector(self.e_j, N_NODES, "e_j")
        if np.any(e_j <= 0):
            raise InvalidInputError("Josephson energies must be positive", e_j=e_j.tolist())
        object.__setattr__(self, "e_j", e_j)

    @property
    def alpha(self) -> float:
        return float(self.e_j[3] / np.mean(self.e_j[:3]))

    @classmethod
    def from_alpha(cls, arms: Sequence[float], alpha: float) -> "JunctionSet":
        arms = _as_vector(arms, N_MODES, "arms")
        if alpha <= 0:
            raise InvalidInputError("alpha must be positive", alpha=alpha)
        return cls(np.append(arms, alpha * np.mean(arms)))


@dataclass(frozen=True)
class CapacitanceNetwork:
    """Node capacitances in fF. `c_pair` is a symmetric 4x4 array, diagonal ignored."""

    c_pair: np.ndarray
    c_ground: np.ndarray
    c_res: np.ndarray = field(default_factory=lambda: np.zeros(N_NODES))
    c_drive: np.ndarray = field(default_factory=lambda: np.zeros(N_NODES))

    def __post_init__(self):
        pair = np.asarray(self.c_pair, dtype=float)
        if pair.shape != (N_NODES, N_NODES):
            raise InvalidInputError("c_pair must be 4x4", shape=pair.shape)
        if not np.all(np.isfinite(pair)):
            raise InvalidInputError("c_pair contains non-finite values")
        # only the upper triangle is authoritative
        upper = np.triu(pair, k=1)
        pair = upper + upper.T
        pair.setflags(write=False)
        object.__setattr__(self, "c_pair", pair)
        for name in ("c_ground", "c_res", "c_drive"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), N_NODES, name))
        for name in ("c_pair", "c_ground", "c_res", "c_drive"):
            if np.any(getattr(self, name) < 0):
                raise InvalidInputError(f"{name} must be nonnegative")

    @classmethod
    def from_pairs(cls, pairs: dict, ground, res=None, drive=None) -> "CapacitanceNetwork":
        """Build from {(i, j): C_ij} with 1-based node labels."""
        c_pair = np.zeros((N_NODES, N_NODES))
        for (i, j), value in pairs.items():
            if not (1 <= i <= N_NODES and 1 <= j <= N_NODES) or i == j:
                raise InvalidInputError("invalid node pair", pair=(i, j))
            c_pair[min(i, j) - 1, max(i, j) - 1] = value
        return cls(
            c_pair=c_pair,
            c_ground=ground,
            c_res=np.zeros(N_NODES) if res is None else res,
            c_drive=np.zeros(N_NODES) if drive is None else drive,
        )

    @property
    def environment(self) -> np.ndarray:
        return self.c_ground + self.c_res + self.c_drive

    def scaled(self, s: float) -> "CapacitanceNetwork":
        return CapacitanceNetwork(self.c_pair * s, self.c_ground * s, self.c_res * s, self.c_drive * s)

    def permuted(self, order: Sequence[int]) -> "CapacitanceNetwork":
        """Relabel nodes: new node k is old node order[k] (0-based)."""
        order = list(order)
        return CapacitanceNetwork(
            self.c_pair[np.ix_(order, order)],
            self.c_ground[order],
            self.c_res[order],
            self.c_drive[order],
        )


@dataclass(frozen=True)
class ReducedCircuit:
    """The three-mode rhombus: charging matrix and Josephson energies in GHz,
    offset charges in Cooper pairs, external flux in units of the flux quantum."""

    ec: np.ndarray
    e_j: np.ndarray
    n_g: np.ndarray = field(default_factory=lambda: np.zeros(N_MODES))
    phi_ext: float = 0.5
    beta_res: np.ndarray = field(default_factory=lambda: np.zeros(N_MODES))
    beta_drive: Optional[np.ndarray] = None

    def __post_init__(self):
        ec = np.asarray(self.ec, dtype=float)
        if ec.shape != (N_MODES, N_MODES) or not np.all(np.isfinite(ec)):
            raise InvalidInputError("ec must be a finite 3x3 matrix", shape=ec.shape)
        if not np.allclose(ec, ec.T, rtol=0, atol=1e-12 * max(1.0, np.abs(ec).max())):
            raise InvalidInputError("ec must be symmetric")
        try:
            linalg.cholesky(ec)
        except linalg.LinAlgError:
            raise InvalidInputError("ec must be positive-definite", ec=ec.tolist())
        ec = 0.5 * (ec + ec.T)
        ec.setflags(write=False)
        object.__setattr__(self, "ec", ec)
        e_j = _as_vector(self.e_j, N_NODES, "e_j")
        if np.any(e_j < 0):
            raise InvalidInputError("Josephson energies must be nonnegative", e_j=e_j.tolist())
        object.__setattr__(self, "e_j", e_j)
        object.__setattr__(self, "n_g", _as_vector(self.n_g, N_MODES, "n_g"))
        if not np.isfinite(self.phi_ext):
            raise InvalidInputError("phi_ext must be finite", phi_ext=self.phi_ext)
        object.__setattr__(self, "phi_ext", float(self.phi_ext))
        object.__setattr__(self, "beta_res", _as_vector(self.beta_res, N_MODES, "beta_res"))
        if self.beta_drive is not None:
            object.__setattr__(self, "beta_drive", _as_vector(self.beta_drive, N_MODES, "beta_drive"))

    @property
    def alpha(self) -> float:
        return float(self.e_j[3] / np.mean(self.e_j[:3]))

    def with_flux(self, phi_ext: float) -> "ReducedCircuit":
        return replace(self, phi_ext=phi_ext)

    def with_offsets(self, n_g) -> "ReducedCircuit":
        return replace(self, n_g=np.asarray(n_g, dtype=float))

    def with_offset(self, mode: int, value: float) -> "ReducedCircuit":
        n_g = np.array(self.n_g)
        n_g[mode - 1] = value
        return replace(self, n_g=n_g)

    def with_junctions(self, e_j) -> "ReducedCircuit":
        return replace(self, e_j=np.asarray(e_j, dtype=float))

    def with_alpha(self, alpha: float) -> "ReducedCircuit":
        e_j = np.array(self.e_j)
        e_j[3] = alpha * np.mean(e_j[:3])
        return replace(self, e_j=e_j)

    def combined_charge_weights(self) -> np.ndarray:
        """Row i holds the coefficients of N_C^(i) = sum_j (E_C^ij + E_C^ji) / (2 E_C^ii) n_j."""
        sym = 0.5 * (self.ec + self.ec.T)
        return sym / np.diag(self.ec)[:, None]

    def to_dict(self) -> dict:
        return {
            "ec_ghz": self.ec.tolist(),
            "junctions_ghz": self.e_j.tolist(),
            "offset_charges": self.n_g.tolist(),
            "flux_phi0": self.phi_ext,
            "alpha": self.alpha,
            "beta_res": self.beta_res.tolist(),
            "beta_drive": None if self.beta_drive is None else self.beta_drive.tolist(),
        }


def circuit_from_charging_energies(
    ec,
    e_j,
    n_g=(0.0, 0.0, 0.0),
    phi_ext: float = 0.5,
    beta_res=(0.0, 0.0, 0.0),
    beta_drive=None,
) -> ReducedCircuit:
    """Build a ReducedCircuit straight from fitted charging energies."""
    return ReducedCircuit(
        ec=np.asarray(ec, dtype=float),
        e_j=np.asarray(e_j, dtype=float),
        n_g=np.asarray(n_g, dtype=float),
        phi_ext=phi_ext,
        beta_res=np.asarray(beta_res, dtype=float),
        beta_drive=None if beta_drive is None else np.asarray(beta_drive, dtype=float),
    )


def measured_device_circuit(phi_ext: float = 0.5) -> ReducedCircuit:
    """Fitted parameters of the measured soft-rhombus device."""
    ec = np.array([
        [0.2758, -0.1154, -0.0465],
        [-0.1154, 0.2758, -0.1154],
        [-0.0465, -0.1154, 0.2758],
    ])
    return circuit_from_charging_energies(
        ec=ec,
        e_j=[13.04, 13.12, 12.92, 8.20],
        phi_ext=phi_ext,
        beta_res=[-0.0813, -0.0197, 0.0193],
    )


def assemble_capacitance_matrix(net: CapacitanceNetwork) -> np.ndarray:
    """Node capacitance matrix C^Phi in fF: -C_ij off the diagonal,
    C_G + C_R + C_D + sum_j C_ij on it."""
    c_phi = -np.array(net.c_pair)
    np.fill_diagonal(c_phi, net.environment + net.c_pair.sum(axis=1))
    if not np.all(np.isfinite(c_phi)):
        raise InvalidInputError("capacitance matrix is not finite")
    if np.any(np.diag(c_phi) <= 0):
        raise InvalidInputError("every node needs a shunting path", diagonal=np.diag(c_phi).tolist())
    return c_phi


def branch_transform(net: CapacitanceNetwork) -> Tuple[np.ndarray, np.ndarray]:
    """Node-to-branch transformation T and C^Theta = (T^-1)^T C^Phi T^-1."""
    env = net.environment
    total = env.sum()
    if total <= 0:
        raise TransformationError("no capacitance to ground, resonator or drive", total=total)
    weights = env / total
    t = np.array([
        [-1.0, 1.0, 0.0, 0.0],
        [0.0, -1.0, 1.0, 0.0],
        [0.0, 0.0, -1.0, 1.0],
        weights,
    ])
    if abs(linalg.det(t)) < 1e-12:
        raise TransformationError("branch transformation is singular", weights=weights.tolist())
    t_inv = linalg.inv(t)
    c_phi = assemble_capacitance_matrix(net)
    c_theta = t_inv.T @ c_phi @ t_inv
    return t, 0.5 * (c_theta + c_theta.T)


def _inverse_capacitance(c_theta: np.ndarray) -> np.ndarray:
    cond = np.linalg.cond(c_theta)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise ConditioningError("branch capacitance matrix is ill-conditioned", condition=cond)
    c_inv = linalg.inv(c_theta)
    c_inv = 0.5 * (c_inv + c_inv.T)
    cross = np.linalg.norm(c_inv[:N_MODES, N_MODES])
    block = np.linalg.norm(c_inv[:N_MODES, :N_MODES])
    if cross > DECOUPLING_THRESHOLD * block:
        raise DecouplingError("total-charge mode couples to the branch modes", ratio=cross / block)
    return c_inv


def coupling_coefficients(net: CapacitanceNetwork) -> Tuple[np.ndarray, np.ndarray]:
    """Dimensionless beta_R and beta_D of the three branch modes."""
    t, c_theta = branch_transform(net)
    c_inv = _inverse_capacitance(c_theta)
    t_inv = linalg.inv(t)
    # V^Theta = T (1,1,1,1) V only has a total-mode component, so the
    # coupling vector is C^Theta^-1 (T^-1)^T C_X (1,1,1,1).
    beta_res = c_inv @ t_inv.T @ net.c_res
    beta_drive = c_inv @ t_inv.T @ net.c_drive
    return beta_res[:N_MODES], beta_drive[:N_MODES]


def reduce_to_three_modes(
    net: CapacitanceNetwork,
    junctions: JunctionSet,
    n_g=(0.0, 0.0, 0.0),
    phi_ext: float = 0.5,
) -> ReducedCircuit:
    """Reduction of the four-node network to the three branch modes."""
    _, c_theta = branch_transform(net)
    c_inv = _inverse_capacitance(c_theta)
    ec = CHARGING_GHZ_FF * c_inv[:N_MODES, :N_MODES]
    beta_res, beta_drive = coupling_coefficients(net)
    logger.debug(f"Reduced network to ec diagonal {np.diag(ec).tolist()} GHz")
    return ReducedCircuit(
        ec=ec,
        e_j=junctions.e_j,
        n_g=np.asarray(n_g, dtype=float),
        phi_ext=phi_ext,
        beta_res=beta_res,
        beta_drive=beta_drive,
    )
