# app/physics/noise.py
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy import special

from app.physics.circuit import ReducedCircuit
from app.physics.constants import (E_CHARGE, GHZ, HBAR, K_B, MICRO_EV,
                                   PLANCK_H, ghz_to_angular)
from app.physics.hilbert import (ChargeBasis, Gauge, ResonatorModel,
                                 combined_charge_operator,
                                 drive_charge_operator, flux_operator,
                                 to_gauge, weighted_charge)
from app.physics.observables import (charge_gradient, flux_curvature,
                                     half_sine_element, window_flux_slope)
from app.physics.solver import SolverSettings, converged_solve
from app.services.errors import ChannelError, InvalidInputError
from app.services.pool import map_ordered


# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


SQRT_LN2 = np.sqrt(np.log(2))
PURCELL_MIN_DETUNING = 1e-12
FREQUENCY_MATCH = 1e-9
RELAXATION_CHANNELS = ("dielectric", "drive", "purcell", "flux", "qp")
DEPHASING_CHANNELS = ("flux", "flux_second_order", "charge")


class NoiseEnvironment(BaseModel):
    """Bath parameters; defaults are the measured-device values."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    a_phi: float = Field(4e-6, ge=0, description="1/f flux noise amplitude, flux quanta")
    a_n: float = Field(2e-4, ge=0, description="1/f charge noise amplitude, Cooper pairs")
    q_cap: float = Field(8e5, ge=0)
    x_qp: float = Field(1e-8, ge=0)
    temp: float = Field(0.05, ge=0, description="kelvin; 0 is the zero-temperature limit")
    gap_delta: float = Field(200.0, ge=0, description="superconducting gap, micro-eV")
    z0: float = Field(50.0, ge=0, description="drive line impedance, ohm")
    q_loaded: float = Field(6.7e3, gt=0, description="loaded quality factor of the readout resonator")
    kappa: Optional[float] = Field(None, ge=0, description="resonator linewidth, rad/s; derived from q_loaded when unset")
    g_coupling: Optional[float] = Field(None, ge=0, description="qubit-resonator coupling, GHz")
    chi_ratio: float = Field(6.0, ge=1)
    qp_window: float = Field(0.01, ge=0, description="junction-4 exclusion half-width around frustration, flux quanta")
    flux_window: float = Field(3e-4, ge=0, description="half-width of the bias window the flux sensitivity is averaged over, flux quanta")

    def linewidth(self, f_res: float) -> float:
        """kappa in rad/s: the configured value, else omega_res / Q_L."""
        if self.kappa is not None:
            return self.kappa
        return float(2 * np.pi * f_res * GHZ / self.q_loaded)


@dataclass
class QubitStates:
    """The computational pair |0>, |1> of one bias point."""

    circuit: ReducedCircuit
    f01: float
    ground: np.ndarray
    excited: np.ndarray
    basis: ChargeBasis
    gauge: Gauge

    @property
    def omega01(self) -> float:
        return float(ghz_to_angular(self.f01))

    def element(self, op) -> complex:
        return complex(np.vdot(self.ground, op @ self.excited))


def qubit_states(circuit: ReducedCircuit, settings: SolverSettings = SolverSettings()) -> QubitStates:
    result = converged_solve(circuit, settings, k=2)
    return QubitStates(
        circuit=circuit,
        f01=result.transition(0, 1),
        ground=result.state(0),
        excited=result.state(1),
        basis=result.basis,
        gauge=settings.gauge,
    )


def _require_frequency(states: QubitStates):
    if not states.f01 > 0:
        raise ChannelError("transition frequency must be positive", f01=states.f01)


def thermal_factor(f01: float, temp: float) -> float:
    """coth(hbar omega / 2 k_B T); 1 at zero temperature."""
    if temp == 0:
        return 1.0
    x = PLANCK_H * f01 * GHZ / (2 * K_B * temp)
    return float(1 / np.tanh(x))


def bessel_factor(x: float) -> float:
    """K0(x) cosh(x), evaluated through the scaled Bessel function so large x stays finite."""
    return float(special.k0e(x) * (1 + np.exp(-2 * x)) / 2)


def golden_rule_rate(matrix_element_sq: float, s_plus: float) -> float:
    """|<0|O|1>|^2 S+(omega01) / hbar^2 with O in SI units and S+ in SI units over rad/s."""
    if matrix_element_sq < 0 or s_plus < 0:
        raise InvalidInputError("golden-rule inputs must be nonnegative", m_sq=matrix_element_sq, s_plus=s_plus)
    return matrix_element_sq * s_plus / HBAR**2


def dielectric_spectral_density(e_c_ghz: float, q_cap: float, f01: float, temp: float) -> float:
    """S+ seen by the 8 E_C N_C coupling: hbar / (4 E_C Q_C) coth, in seconds."""
    if q_cap == 0:
        raise ChannelError("capacitive quality factor is zero")
    return HBAR / (4 * PLANCK_H * GHZ * e_c_ghz * q_cap) * thermal_factor(f01, temp)


def gamma1_dielectric(states: QubitStates, env: NoiseEnvironment) -> float:
    """32 pi / Q_C sum_i E_C^(ii)/h |<0|N_C^(i)|1>|^2 coth(hbar omega / 2 k_B T)."""
    _require_frequency(states)
    if env.q_cap == 0:
        raise ChannelError("capacitive quality factor is zero")
    circuit = states.circuit
    total = 0.0
    for mode in range(1, 4):
        element = states.element(combined_charge_operator(mode, circuit, states.basis))
        total += circuit.ec[mode - 1, mode - 1] * GHZ * abs(element) ** 2
    return float(32 * np.pi / env.q_cap * total * thermal_factor(states.f01, env.temp))


def gamma1_drive(states: QubitStates, env: NoiseEnvironment) -> float:
    """16 pi Z0 e^2/h |<0|N_D|1>|^2 omega01 coth(hbar omega / 2 k_B T)."""
    _require_frequency(states)
    if states.circuit.beta_drive is None:
        raise ChannelError("drive coupling coefficients are not known for this circuit")
    element = states.element(drive_charge_operator(states.circuit, states.basis))
    prefactor = 16 * np.pi * env.z0 * E_CHARGE**2 / PLANCK_H
    return float(prefactor * abs(element) ** 2 * states.omega01 * thermal_factor(states.f01, env.temp))


def derived_coupling(states: QubitStates, resonator: ResonatorModel) -> float:
    """g = 2 e V0 / h |<0| sum_i beta_R,i n_i |1>| in GHz."""
    element = states.element(weighted_charge(states.circuit.beta_res, states.basis))
    return resonator.coupling_scale * abs(element)


def gamma1_purcell(env: NoiseEnvironment, f01: float, f_res: float, g: Optional[float] = None) -> float:
    """kappa (g / (omega_res - omega01))^2."""
    g = env.g_coupling if g is None else g
    if g is None:
        raise ChannelError("no qubit-resonator coupling configured")
    detuning = f_res - f01
    if abs(detuning) < PURCELL_MIN_DETUNING:
        raise ChannelError("Purcell rate diverges on resonance", f01=f01, f_res=f_res)
    return float(env.linewidth(f_res) * (g / detuning) ** 2)


def gamma1_flux(states: QubitStates, env: NoiseEnvironment) -> float:
    """|<0|O_Phi|1>|^2 4 pi A_Phi^2 / omega01 / hbar^2 with O_Phi taken in the symmetric gauge."""
    _require_frequency(states)
    circuit, basis = states.circuit, states.basis
    ground = to_gauge(states.ground, basis, circuit.phi_ext, states.gauge, Gauge.SYMMETRIC)
    excited = to_gauge(states.excited, basis, circuit.phi_ext, states.gauge, Gauge.SYMMETRIC)
    element_ghz = np.vdot(ground, flux_operator(circuit, basis, Gauge.SYMMETRIC) @ excited)
    # GHz per flux quantum -> rad/s per flux quantum absorbs the 1/hbar^2
    coupling = (2 * np.pi * GHZ * abs(element_ghz)) ** 2
    return float(coupling * env.a_phi**2 * 4 * np.pi / states.omega01)


def _qp_prefactor(states: QubitStates, env: NoiseEnvironment, junction: int) -> float:
    element = half_sine_element(states.ground, states.excited, junction, states.circuit, states.basis, states.gauge)
    if element.cut_weight and element.cut_weight > 1e-3:
        logger.debug(f"Junction {junction}: {element.cut_weight:.2e} of the weight sits near the sin(phi/2) branch cut")
    return element.magnitude**2 * states.circuit.e_j[junction - 1] * GHZ * env.x_qp


def gamma1_qp(states: QubitStates, env: NoiseEnvironment, junction: int) -> float:
    """Quasiparticle tunneling through one junction, full temperature dependence."""
    _require_frequency(states)
    if not 1 <= junction <= 4:
        raise InvalidInputError("junction must be 1..4", junction=junction)
    if env.temp <= 0:
        raise ChannelError("quasiparticle rate needs a positive temperature")
    gap = env.gap_delta * MICRO_EV
    x = PLANCK_H * states.f01 * GHZ / (2 * K_B * env.temp)
    root = np.sqrt(2 * gap / (np.pi * K_B * env.temp))
    return float(32 * _qp_prefactor(states, env, junction) * root * bessel_factor(x))


def gamma1_qp_simplified(states: QubitStates, env: NoiseEnvironment, junction: int) -> float:
    """hbar omega >> k_B T form: 16 E_J/h sqrt(2 Delta / hbar omega) x_qp |<0|sin(phi/2)|1>|^2."""
    _require_frequency(states)
    gap = env.gap_delta * MICRO_EV
    return float(16 * _qp_prefactor(states, env, junction) * np.sqrt(2 * gap / (HBAR * states.omega01)))


def distance_to_frustration(phi_ext: float) -> float:
    return float(abs((phi_ext - 0.5 + 0.5) % 1.0 - 0.5))


def gamma1_qp_total(states: QubitStates, env: NoiseEnvironment) -> Tuple[float, List[float]]:
    """Sum over junctions; junction 4 carries the flux and is left out near frustration."""
    per_junction = [gamma1_qp(states, env, j) for j in (1, 2, 3)]
    if distance_to_frustration(states.circuit.phi_ext) < env.qp_window:
        per_junction.append(0.0)
    else:
        per_junction.append(gamma1_qp(states, env, 4))
    return float(sum(per_junction)), per_junction


def dephasing_rates(
    circuit: ReducedCircuit,
    env: NoiseEnvironment,
    channel: str,
    settings: SolverSettings = SolverSettings(),
) -> Tuple[float, float]:
    """(Ramsey, echo) rates of one 1/f channel in 1/s; Ramsey is chi times echo."""
    if channel == "flux":
        # averaged over the bias window, so an exact sweet spot keeps its finite width
        slope = 2 * np.pi * GHZ * window_flux_slope(circuit, env.flux_window, settings)
        echo = env.a_phi * slope * SQRT_LN2
    elif channel == "flux_second_order":
        curvature = 2 * np.pi * GHZ * abs(flux_curvature(circuit, settings))
        echo = env.a_phi**2 * curvature
    elif channel == "charge":
        gradient = 2 * np.pi * GHZ * np.linalg.norm(charge_gradient(circuit, settings))
        echo = env.a_n * gradient * SQRT_LN2
    else:
        raise InvalidInputError("unknown dephasing channel", channel=channel)
    return float(env.chi_ratio * echo), float(echo)


@dataclass
class RatePart:
    """One channel's contribution. Relaxation parts set `gamma1`; dephasing parts set ramsey/echo."""

    name: str
    f01: float
    gamma1: Optional[float] = None
    ramsey: Optional[float] = None
    echo: Optional[float] = None
    law: str = "gaussian"
    detail: List[float] = field(default_factory=list)


@dataclass
class RateReport:
    f01: float
    relaxation: Dict[str, float]
    dephasing: Dict[str, Tuple[float, float]]
    gamma1_total: float
    gphi_ramsey: float
    gphi_echo: float
    qp_per_junction: List[float] = field(default_factory=list)

    @staticmethod
    def _time(rate: float) -> float:
        return float("inf") if rate == 0 else 1.0 / rate

    @property
    def t1(self) -> float:
        return self._time(self.gamma1_total)

    @property
    def t_phi_ramsey(self) -> float:
        return self._time(self.gphi_ramsey)

    @property
    def t_phi_echo(self) -> float:
        return self._time(self.gphi_echo)

    def to_row(self, flux: float) -> dict:
        return {
            "flux_phi0": flux,
            "f01_ghz": self.f01,
            "g1_diel": self.relaxation.get("dielectric", 0.0),
            "g1_drive": self.relaxation.get("drive", 0.0),
            "g1_purcell": self.relaxation.get("purcell", 0.0),
            "g1_flux": self.relaxation.get("flux", 0.0),
            "g1_qp": self.relaxation.get("qp", 0.0),
            "g1_total": self.gamma1_total,
            "gphi_ramsey": self.gphi_ramsey,
            "gphi_echo": self.gphi_echo,
        }


COHERENCE_COLUMNS = ["flux_phi0", "f01_ghz", "g1_diel", "g1_drive", "g1_purcell", "g1_flux",
                     "g1_qp", "g1_total", "gphi_ramsey", "gphi_echo"]


def aggregate(parts: Sequence[RatePart]) -> RateReport:
    """Relaxation rates add; Gaussian dephasing rates add in quadrature, exponential ones linearly."""
    if not parts:
        raise InvalidInputError("nothing to aggregate")
    f01 = parts[0].f01
    if any(abs(p.f01 - f01) > FREQUENCY_MATCH * max(1.0, abs(f01)) for p in parts):
        raise InvalidInputError("rate parts refer to different transition frequencies")
    relaxation = {p.name: p.gamma1 for p in parts if p.gamma1 is not None}
    dephasing = {p.name: (p.ramsey, p.echo) for p in parts if p.echo is not None}
    if any(rate < 0 for rate in relaxation.values()) or any(min(r) < 0 for r in dephasing.values()):
        raise InvalidInputError("rates must be nonnegative")
    qp = next((p.detail for p in parts if p.name == "qp"), [])

    def combine(index: int) -> float:
        gaussian = [p for p in parts if p.echo is not None and p.law == "gaussian"]
        exponential = [p for p in parts if p.echo is not None and p.law != "gaussian"]
        values = lambda group: [(p.ramsey, p.echo)[index] for p in group]
        return float(np.sqrt(np.sum(np.square(values(gaussian)))) + np.sum(values(exponential)))

    return RateReport(
        f01=f01,
        relaxation=relaxation,
        dephasing=dephasing,
        gamma1_total=float(sum(relaxation.values())),
        gphi_ramsey=combine(0),
        gphi_echo=combine(1),
        qp_per_junction=list(qp),
    )


def coherence_report(
    circuit: ReducedCircuit,
    env: NoiseEnvironment,
    settings: SolverSettings = SolverSettings(),
    resonator: Optional[ResonatorModel] = None,
) -> RateReport:
    """Every relaxation and dephasing channel at one bias point."""
    states = qubit_states(circuit, settings)
    f01 = states.f01
    parts = [RatePart("dielectric", f01, gamma1=gamma1_dielectric(states, env))]

    try:
        parts.append(RatePart("drive", f01, gamma1=gamma1_drive(states, env)))
    except ChannelError as e:
        logger.warning(f"Drive channel skipped: {e}")
        parts.append(RatePart("drive", f01, gamma1=0.0))

    if resonator is not None:
        g = env.g_coupling if env.g_coupling is not None else derived_coupling(states, resonator)
        parts.append(RatePart("purcell", f01, gamma1=gamma1_purcell(env, f01, resonator.f_res, g)))

    parts.append(RatePart("flux", f01, gamma1=gamma1_flux(states, env)))
    qp_total, qp_parts = gamma1_qp_total(states, env)
    parts.append(RatePart("qp", f01, gamma1=qp_total, detail=qp_parts))

    for channel in DEPHASING_CHANNELS:
        ramsey, echo = dephasing_rates(circuit, env, channel, settings)
        parts.append(RatePart(f"dephasing_{channel}", f01, ramsey=ramsey, echo=echo))

    report = aggregate(parts)
    logger.debug(f"Phi={circuit.phi_ext:.5f}: f01={f01:.6f} GHz, T1={report.t1:.3e} s, T2R={report.t_phi_ramsey:.3e} s")
    return report


def coherence_sweep(
    circuit: ReducedCircuit,
    env: NoiseEnvironment,
    flux_grid,
    settings: SolverSettings = SolverSettings(),
    resonator: Optional[ResonatorModel] = None,
) -> pd.DataFrame:
    """Coherence table over a flux grid, one row per bias in grid order."""
    grid = np.asarray(flux_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise InvalidInputError("flux grid must be a non-empty 1-d sequence")
    logger.info(f"Evaluating coherence at {len(grid)} flux points")
    reports = map_ordered(
        lambda phi: coherence_report(circuit.with_flux(phi), env, settings, resonator),
        grid,
        settings.workers,
    )
    return pd.DataFrame([r.to_row(float(phi)) for phi, r in zip(grid, reports)], columns=COHERENCE_COLUMNS)
