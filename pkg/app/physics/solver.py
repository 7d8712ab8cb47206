# app/physics/solver.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, optimize, sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from app.physics.circuit import ReducedCircuit
from app.physics.hilbert import (DEFAULT_N_MAX, ChargeBasis, Gauge,
                                 HamiltonianMatrix, assemble_rhombus)
from app.services.errors import ConvergenceError, InvalidInputError
from app.services.pool import map_ordered


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


DENSE_THRESHOLD = 3500
KRYLOV_BUFFER = 10
RESIDUAL_TOL = 1e-8
MAX_ITERATIONS = 20_000


@dataclass(frozen=True)
class SolverSettings:
    n_max: int = DEFAULT_N_MAX
    dense_threshold: int = DENSE_THRESHOLD
    tol_conv: float = 1e-6
    n_max_step: int = 2
    max_n_max: int = 12
    converge: bool = True
    levels: int = 6
    gauge: Gauge = Gauge.SINGLE_JUNCTION
    flux_step: float = 1e-5
    charge_step: float = 1e-4
    curvature_step: float = 5e-4
    phase_grid_size: int = 64
    max_iterations: int = MAX_ITERATIONS
    workers: Optional[int] = 1

    def with_n_max(self, n_max: int) -> "SolverSettings":
        return replace(self, n_max=n_max)


@dataclass
class EigenResult:
    """Lowest eigenpairs: energies in GHz ascending, vectors as columns."""

    energies: np.ndarray
    vectors: Optional[np.ndarray]
    residuals: np.ndarray
    basis: Optional[ChargeBasis] = None
    method: str = "dense"

    @property
    def k(self) -> int:
        return len(self.energies)

    def transition(self, lower: int = 0, upper: int = 1) -> float:
        return float(self.energies[upper] - self.energies[lower])

    def state(self, level: int) -> np.ndarray:
        if self.vectors is None:
            raise InvalidInputError("eigenvectors were not retained")
        return self.vectors[:, level]

    def without_vectors(self) -> "EigenResult":
        return replace(self, vectors=None)


def fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude amplitude of every column real and positive."""
    fixed = np.array(vectors, dtype=complex)
    for col in range(fixed.shape[1]):
        pivot = fixed[np.argmax(np.abs(fixed[:, col])), col]
        fixed[:, col] *= np.conj(pivot) / abs(pivot)
    return fixed


def _spectral_scale(matrix) -> float:
    if sparse.issparse(matrix):
        return float(max(1.0, abs(matrix).sum(axis=1).max()))
    return float(max(1.0, np.abs(matrix).sum(axis=1).max()))


def _residuals(matrix, energies: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    applied = matrix @ vectors
    return np.linalg.norm(applied - vectors * energies[None, :], axis=0)


def _solve_dense(matrix, k: int) -> Tuple[np.ndarray, np.ndarray]:
    dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
    return linalg.eigh(dense, subset_by_index=[0, k - 1])


def _solve_iterative(matrix, k: int, max_iterations: int) -> Tuple[np.ndarray, np.ndarray]:
    dim = matrix.shape[0]
    ncv = min(dim - 1, max(2 * k + 1, k + KRYLOV_BUFFER))
    # fixed start vector keeps repeated solves bit-identical
    v0 = np.linspace(1.0, 2.0, dim) + 0.5j * np.cos(np.arange(dim))
    try:
        energies, vectors = eigsh(matrix, k=k, which="SA", ncv=ncv, v0=v0, tol=0, maxiter=max_iterations)
    except ArpackNoConvergence as e:
        residual = float(np.max(_residuals(matrix, e.eigenvalues, e.eigenvectors))) if len(e.eigenvalues) else float("nan")
        raise ConvergenceError(
            "iterative eigensolver did not converge",
            converged=len(e.eigenvalues), requested=k, max_residual=residual,
        )
    order = np.argsort(energies)
    return energies[order], vectors[:, order]


def eigensolve(
    h: HamiltonianMatrix,
    k: int,
    dense_threshold: int = DENSE_THRESHOLD,
    method: str = "auto",
    max_iterations: int = MAX_ITERATIONS,
) -> EigenResult:
    """k lowest eigenpairs; dense below the threshold, ARPACK Lanczos above it."""
    if not 1 <= k < h.dim:
        raise InvalidInputError("need 1 <= k < dim", k=k, dim=h.dim)
    if method == "auto":
        method = "dense" if h.dim <= dense_threshold else "iterative"
    if method == "dense":
        energies, vectors = _solve_dense(h.matrix, k)
    elif method == "iterative":
        energies, vectors = _solve_iterative(h.matrix, k, max_iterations)
    else:
        raise InvalidInputError("unknown eigensolver method", method=method)
    vectors = fix_phases(vectors)
    residuals = _residuals(h.matrix, energies, vectors)
    limit = RESIDUAL_TOL * _spectral_scale(h.matrix)
    if np.any(residuals > limit):
        raise ConvergenceError("eigenpair residual above tolerance", max_residual=float(residuals.max()), limit=limit)
    return EigenResult(energies=energies, vectors=vectors, residuals=residuals, basis=h.basis, method=method)


def solve_circuit(circuit: ReducedCircuit, settings: SolverSettings, k: Optional[int] = None) -> EigenResult:
    k = k or settings.levels
    basis = ChargeBasis(settings.n_max)
    h = assemble_rhombus(circuit, basis, settings.gauge)
    return eigensolve(h, k, settings.dense_threshold, max_iterations=settings.max_iterations)


def converged_solve(circuit: ReducedCircuit, settings: SolverSettings, k: Optional[int] = None) -> EigenResult:
    """Raise n_max until every tracked energy moves by less than tol_conv.

    The accepted result is the smaller truncation of the last compared pair."""
    k = k or settings.levels
    current = solve_circuit(circuit, settings, k)
    if not settings.converge:
        return current
    n_max = settings.n_max
    while True:
        n_next = n_max + settings.n_max_step
        if n_next > settings.max_n_max:
            raise ConvergenceError(
                "charge truncation did not converge",
                n_max=n_max, max_n_max=settings.max_n_max, flux=circuit.phi_ext,
            )
        refined = solve_circuit(circuit, settings.with_n_max(n_next), k)
        shift = float(np.max(np.abs(refined.energies - current.energies)))
        logger.debug(f"Truncation n_max={n_max} -> {n_next}: max shift {shift:.3e} GHz")
        if shift < settings.tol_conv:
            return current
        current, n_max = refined, n_next


@dataclass
class SpectrumResult:
    """Eigen-data over a sweep grid; `labels[p]` maps tracked level -> sorted index at point p."""

    parameter: str
    grid: np.ndarray
    points: List[EigenResult]
    labels: np.ndarray
    circuit: ReducedCircuit
    gauge: Gauge
    metadata: dict = field(default_factory=dict)

    @property
    def energies(self) -> np.ndarray:
        return np.array([p.energies for p in self.points])

    @property
    def tracked_energies(self) -> np.ndarray:
        return np.take_along_axis(self.energies, self.labels, axis=1)

    @property
    def n_max(self) -> List[int]:
        return [p.basis.n_max for p in self.points]

    def transition(self, lower: int = 0, upper: int = 1) -> np.ndarray:
        e = self.energies
        return e[:, upper] - e[:, lower]

    def to_frame(self, tracked: bool = False) -> pd.DataFrame:
        energies = self.tracked_energies if tracked else self.energies
        rows = [
            {"param": value, "level": level, "energy_ghz": energy}
            for value, point in zip(self.grid, energies)
            for level, energy in enumerate(point)
        ]
        return pd.DataFrame(rows, columns=["param", "level", "energy_ghz"])

    def to_json_dict(self, keep_vectors: bool = False) -> dict:
        points = []
        for value, point, labels in zip(self.grid, self.points, self.labels):
            entry = {
                "param": float(value),
                "n_max": point.basis.n_max,
                "energies_ghz": point.energies.tolist(),
                "residuals": point.residuals.tolist(),
                "tracked_order": labels.tolist(),
            }
            if keep_vectors and point.vectors is not None:
                # amplitudes as [re, im] pairs; charge of index 0 is -n_max on every mode
                entry["charge_offset"] = -point.basis.n_max
                entry["vectors"] = [
                    [[float(a.real), float(a.imag)] for a in point.vectors[:, level]]
                    for level in range(point.k)
                ]
            points.append(entry)
        return {
            "parameter": self.parameter,
            "gauge": self.gauge.value,
            "circuit": self.circuit.to_dict(),
            "points": points,
        }


def track_levels(points: Sequence[EigenResult]) -> np.ndarray:
    """Follow levels across the grid by maximal overlap with the previous point."""
    k = points[0].k
    labels = np.zeros((len(points), k), dtype=int)
    labels[0] = np.arange(k)
    for p in range(1, len(points)):
        prev, cur = points[p - 1], points[p]
        target = cur.basis if cur.basis.n_max >= prev.basis.n_max else prev.basis
        prev_vecs = np.column_stack([prev.basis.embed(prev.vectors[:, labels[p - 1][j]], target) for j in range(k)])
        cur_vecs = np.column_stack([cur.basis.embed(cur.vectors[:, i], target) for i in range(k)])
        overlap = np.abs(prev_vecs.conj().T @ cur_vecs) ** 2
        rows, cols = optimize.linear_sum_assignment(-overlap)
        labels[p][rows] = cols
    return labels


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise InvalidInputError("sweep grid must be a non-empty 1-d sequence")
    if len(grid) > 1 and not (np.all(np.diff(grid) > 0) or np.all(np.diff(grid) < 0)):
        raise InvalidInputError("sweep grid must be strictly monotone")
    return grid


def _sweep(
    parameter: str,
    circuits: Sequence[ReducedCircuit],
    grid: np.ndarray,
    settings: SolverSettings,
    k: int,
    keep_vectors: bool,
    track: bool,
    template: ReducedCircuit,
) -> SpectrumResult:
    logger.info(f"Starting {parameter} sweep: {len(grid)} points, k={k}, workers={settings.workers}")

    def solve_point(index: int) -> EigenResult:
        try:
            return converged_solve(circuits[index], settings, k)
        except ConvergenceError as e:
            e.context["grid_index"] = index
            e.context[parameter] = float(grid[index])
            raise

    points = map_ordered(solve_point, range(len(grid)), settings.workers)
    labels = track_levels(points) if track and len(points) > 1 else np.tile(np.arange(k), (len(points), 1))
    if not keep_vectors:
        points = [p.without_vectors() for p in points]
    logger.info(f"Finished {parameter} sweep")
    return SpectrumResult(
        parameter=parameter,
        grid=grid,
        points=points,
        labels=labels,
        circuit=template,
        gauge=settings.gauge,
        metadata={"n_max": settings.n_max, "gauge": settings.gauge.value, "converge": settings.converge},
    )


def flux_sweep(
    circuit: ReducedCircuit,
    flux_grid,
    k: int,
    keep_vectors: bool = False,
    settings: SolverSettings = SolverSettings(),
    track: bool = True,
) -> SpectrumResult:
    grid = _check_grid(flux_grid)
    if grid.min() < -1 or grid.max() > 2:
        raise InvalidInputError("flux grid must lie within [-1, 2] flux quanta")
    circuits = [circuit.with_flux(phi) for phi in grid]
    return _sweep("flux_phi0", circuits, grid, settings, k, keep_vectors, track, circuit)


def charge_sweep(
    circuit: ReducedCircuit,
    mode: int,
    n_g_grid,
    k: int,
    keep_vectors: bool = False,
    settings: SolverSettings = SolverSettings(),
    track: bool = True,
) -> SpectrumResult:
    if not 1 <= mode <= 3:
        raise InvalidInputError("offset-charge mode must be 1, 2 or 3", mode=mode)
    grid = _check_grid(n_g_grid)
    circuits = [circuit.with_offset(mode, value) for value in grid]
    return _sweep(f"n_g{mode}", circuits, grid, settings, k, keep_vectors, track, circuit)


def alpha_sweep(
    circuit_template: ReducedCircuit,
    alpha_grid,
    phi_ext: float,
    k: int,
    keep_vectors: bool = False,
    settings: SolverSettings = SolverSettings(),
    track: bool = True,
) -> SpectrumResult:
    """E_J^(4) = alpha * mean(E_J^(1..3)) at every grid point."""
    grid = _check_grid(alpha_grid)
    if grid.min() <= 0 or grid.max() > 1.2:
        raise InvalidInputError("alpha grid must lie within (0, 1.2]")
    base = circuit_template.with_flux(phi_ext)
    circuits = [base.with_alpha(alpha) for alpha in grid]
    return _sweep("alpha", circuits, grid, settings, k, keep_vectors, track, base)
