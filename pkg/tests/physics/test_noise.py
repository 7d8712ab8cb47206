# tests/physics/test_noise.py
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import optimize, special

from app.physics import noise
from app.physics.circuit import (CapacitanceNetwork, JunctionSet, measured_device_circuit,
                                 reduce_to_three_modes)
from app.physics.constants import GHZ, K_B, PLANCK_H
from app.physics.hilbert import ResonatorModel, charge_operator, combined_charge_operator
from app.physics.observables import flux_slope, qubit_frequency, window_flux_slope
from app.physics.noise import (COHERENCE_COLUMNS, NoiseEnvironment, RatePart, aggregate,
                               bessel_factor, coherence_report, coherence_sweep,
                               dephasing_rates, dielectric_spectral_density,
                               distance_to_frustration, gamma1_dielectric, gamma1_drive,
                               gamma1_flux, gamma1_purcell, gamma1_qp, gamma1_qp_simplified,
                               gamma1_qp_total, golden_rule_rate, qubit_states, thermal_factor)
from app.physics.solver import SolverSettings
from app.services.errors import ChannelError, InvalidInputError


@pytest.fixture
def states(measured_device, small_settings):
    return qubit_states(measured_device.with_flux(0.4), small_settings)


class TestEnvironment:
    def test_defaults(self):
        env = NoiseEnvironment()
        assert env.a_phi == 4e-6
        assert env.chi_ratio == 6.0
        assert env.g_coupling is None
        assert env.kappa is None
        assert env.linewidth(6.7) == pytest.approx(2 * np.pi * 1e6)

    @pytest.mark.parametrize("field,value", [("chi_ratio", 0.5), ("temp", -0.01), ("a_phi", -1.0)])
    def test_rejects_out_of_range(self, field, value):
        with pytest.raises(ValidationError):
            NoiseEnvironment(**{field: value})

    def test_rejects_unknown_fields(self):
        with pytest.raises(ValidationError):
            NoiseEnvironment(a_flux=1e-6)


class TestBuildingBlocks:
    def test_thermal_factor(self):
        assert thermal_factor(5.0, 0.0) == 1.0
        assert thermal_factor(5.0, 0.01) == pytest.approx(1.0)
        assert thermal_factor(0.1, 0.05) > thermal_factor(0.1, 0.02)
        # classical limit 2 k_B T / h f
        assert thermal_factor(0.001, 1.0) == pytest.approx(2 * K_B / (PLANCK_H * 0.001 * GHZ), rel=1e-4)

    def test_bessel_factor(self):
        assert bessel_factor(2.0) == pytest.approx(special.k0(2.0) * np.cosh(2.0), rel=1e-12)
        assert np.isfinite(bessel_factor(800.0))

    @pytest.mark.parametrize("f01", [0.095, 1.0])
    def test_thermal_factors_grow_with_temperature(self, f01):
        temps = np.linspace(0.01, 0.2, 20)
        coth = [thermal_factor(f01, t) for t in temps]
        qp = [bessel_factor(PLANCK_H * f01 * GHZ / (2 * K_B * t)) for t in temps]
        assert np.all(np.diff(coth) > 0)
        assert np.all(np.diff(qp) > 0)

    def test_golden_rule_rate(self):
        assert golden_rule_rate(0.0, 1e-30) == 0.0
        assert golden_rule_rate(2e-50, 1e-30) == pytest.approx(2 * golden_rule_rate(1e-50, 1e-30))
        with pytest.raises(InvalidInputError):
            golden_rule_rate(-1.0, 1.0)

    def test_distance_to_frustration(self):
        assert distance_to_frustration(0.5) == 0.0
        assert distance_to_frustration(1.5) == 0.0
        assert distance_to_frustration(0.49) == pytest.approx(0.01)
        assert distance_to_frustration(0.0) == pytest.approx(0.5)


class TestRelaxation:
    def test_dielectric_agrees_with_golden_rule(self, states):
        env = NoiseEnvironment()
        circuit = states.circuit
        expected = 0.0
        for mode in (1, 2, 3):
            e_c = circuit.ec[mode - 1, mode - 1]
            element = states.element(combined_charge_operator(mode, circuit, states.basis))
            coupling_sq = (8 * e_c * PLANCK_H * GHZ) ** 2 * abs(element) ** 2
            expected += golden_rule_rate(coupling_sq, dielectric_spectral_density(e_c, env.q_cap, states.f01, env.temp))
        assert gamma1_dielectric(states, env) == pytest.approx(expected, rel=1e-10)

    def test_dielectric_scales_inversely_with_q(self, states):
        base = gamma1_dielectric(states, NoiseEnvironment(q_cap=8e5))
        assert gamma1_dielectric(states, NoiseEnvironment(q_cap=1.6e6)) == pytest.approx(base / 2)

    def test_dielectric_needs_finite_q(self, states):
        with pytest.raises(ChannelError):
            gamma1_dielectric(states, NoiseEnvironment(q_cap=0.0))

    def test_drive_needs_coupling(self, states):
        with pytest.raises(ChannelError):
            gamma1_drive(states, NoiseEnvironment())

    def test_drive_scales_with_line_impedance(self, states):
        driven = replace(states, circuit=replace(states.circuit, beta_drive=np.array([0.002, 0.0, 0.0])))
        base = gamma1_drive(driven, NoiseEnvironment(z0=50.0))
        assert base > 0
        assert gamma1_drive(driven, NoiseEnvironment(z0=100.0)) == pytest.approx(2 * base)

    def test_purcell(self):
        env = NoiseEnvironment(g_coupling=0.05, kappa=2 * np.pi * 1e6)
        assert gamma1_purcell(env, 0.1, 1.1) == pytest.approx(2 * np.pi * 2500)
        assert gamma1_purcell(env, 0.1, 2.1) == pytest.approx(2 * np.pi * 2500 / 4)
        assert gamma1_purcell(NoiseEnvironment(kappa=0.0), 0.1, 1.1, g=0.05) == 0.0

    def test_purcell_linewidth_follows_loaded_q(self):
        env = NoiseEnvironment(g_coupling=0.05, q_loaded=1000.0)
        kappa = 2 * np.pi * 1.1e9 / 1000.0
        assert gamma1_purcell(env, 0.1, 1.1) == pytest.approx(kappa * 0.05**2)
        assert gamma1_purcell(env.model_copy(update={"q_loaded": 2000.0}), 0.1, 1.1) == pytest.approx(kappa * 0.05**2 / 2)

    def test_purcell_without_coupling_or_on_resonance(self):
        with pytest.raises(ChannelError):
            gamma1_purcell(NoiseEnvironment(), 0.1, 1.1)
        with pytest.raises(ChannelError):
            gamma1_purcell(NoiseEnvironment(g_coupling=0.05), 1.1, 1.1)

    def test_flux_relaxation_scales_with_noise_power(self, states):
        assert gamma1_flux(states, NoiseEnvironment(a_phi=0.0)) == 0.0
        base = gamma1_flux(states, NoiseEnvironment(a_phi=4e-6))
        assert base > 0
        assert gamma1_flux(states, NoiseEnvironment(a_phi=8e-6)) == pytest.approx(4 * base)

    def test_quasiparticle_rate_is_linear_in_density(self, states):
        assert gamma1_qp(states, NoiseEnvironment(x_qp=0.0), 1) == 0.0
        base = gamma1_qp(states, NoiseEnvironment(x_qp=1e-8), 2)
        assert gamma1_qp(states, NoiseEnvironment(x_qp=3e-8), 2) == pytest.approx(3 * base)

    def test_quasiparticle_low_temperature_limit(self, states):
        temp = PLANCK_H * states.f01 * GHZ / (2 * K_B * 25.0)
        env = NoiseEnvironment(temp=temp)
        for junction in (1, 4):
            full = gamma1_qp(states, env, junction)
            assert full == pytest.approx(gamma1_qp_simplified(states, env, junction), rel=0.01)

    def test_quasiparticle_rate_needs_temperature(self, states):
        with pytest.raises(ChannelError):
            gamma1_qp(states, NoiseEnvironment(temp=0.0), 1)
        with pytest.raises(InvalidInputError):
            gamma1_qp(states, NoiseEnvironment(), 5)

    def test_loop_junction_excluded_at_frustration(self, measured_device, small_settings):
        env = NoiseEnvironment()
        frustrated = qubit_states(measured_device, small_settings)
        total, per_junction = gamma1_qp_total(frustrated, env)
        assert per_junction[3] == 0.0
        assert total == pytest.approx(sum(per_junction[:3]))

    def test_loop_junction_included_away_from_frustration(self, states):
        _, per_junction = gamma1_qp_total(states, NoiseEnvironment())
        assert per_junction[3] > 0


class TestDephasing:
    def test_first_order_flux(self, measured_device, small_settings, monkeypatch):
        monkeypatch.setattr(noise, "window_flux_slope", lambda circuit, window, settings: 1.0)
        ramsey, echo = dephasing_rates(measured_device, NoiseEnvironment(), "flux", small_settings)
        assert echo == pytest.approx(2.0924e4, rel=1e-3)
        assert ramsey == pytest.approx(6 * echo)

    def test_second_order_flux(self, measured_device, small_settings, monkeypatch):
        monkeypatch.setattr(noise, "flux_curvature", lambda circuit, settings: -1.0)
        _, echo = dephasing_rates(measured_device, NoiseEnvironment(), "flux_second_order", small_settings)
        assert echo == pytest.approx((4e-6) ** 2 * 2 * np.pi * GHZ)

    def test_charge_uses_gradient_norm(self, measured_device, small_settings, monkeypatch):
        monkeypatch.setattr(noise, "charge_gradient", lambda circuit, settings: np.array([3.0, 4.0, 0.0]))
        env = NoiseEnvironment(chi_ratio=2.0)
        ramsey, echo = dephasing_rates(measured_device, env, "charge", small_settings)
        assert echo == pytest.approx(2e-4 * 2 * np.pi * GHZ * 5.0 * np.sqrt(np.log(2)))
        assert ramsey == pytest.approx(2 * echo)

    def test_sweet_spot_has_no_first_order_flux_dephasing(self, measured_device, small_settings):
        _, echo = dephasing_rates(measured_device, NoiseEnvironment(flux_window=0.0), "flux", small_settings)
        assert echo < 1.0

    def test_bias_window_gives_the_sweet_spot_a_finite_slope(self, measured_device, small_settings):
        window = 3e-4
        shifted = qubit_frequency(measured_device.with_flux(0.5 + window), small_settings)
        rise = abs(shifted - qubit_frequency(measured_device, small_settings))
        assert window_flux_slope(measured_device, window, small_settings) == pytest.approx(rise / window, rel=1e-6)
        _, echo = dephasing_rates(measured_device, NoiseEnvironment(flux_window=window), "flux", small_settings)
        assert echo == pytest.approx(4e-6 * 2 * np.pi * GHZ * rise / window * np.sqrt(np.log(2)), rel=1e-6)

    def test_bias_window_leaves_a_steep_slope_alone(self, measured_device, small_settings):
        circuit = measured_device.with_flux(0.4)
        local = abs(flux_slope(circuit, small_settings))
        assert window_flux_slope(circuit, 3e-4, small_settings) == pytest.approx(local, rel=1e-3)
        assert window_flux_slope(circuit, 0.0, small_settings) == local

    def test_unknown_channel(self, measured_device, small_settings):
        with pytest.raises(InvalidInputError):
            dephasing_rates(measured_device, NoiseEnvironment(), "thermal", small_settings)


class TestAggregation:
    def test_single_part_passes_through(self):
        report = aggregate([RatePart("flux", 0.1, gamma1=250.0)])
        assert report.gamma1_total == 250.0
        assert report.t1 == pytest.approx(4e-3)
        assert report.t_phi_echo == float("inf")

    def test_relaxation_adds_and_gaussian_dephasing_adds_in_quadrature(self):
        report = aggregate([
            RatePart("dielectric", 0.1, gamma1=100.0),
            RatePart("flux", 0.1, gamma1=50.0),
            RatePart("dephasing_flux", 0.1, ramsey=18.0, echo=3.0),
            RatePart("dephasing_charge", 0.1, ramsey=24.0, echo=4.0),
        ])
        assert report.gamma1_total == pytest.approx(150.0)
        assert report.gphi_echo == pytest.approx(5.0)
        assert report.gphi_ramsey == pytest.approx(30.0)

    def test_exponential_channels_add_linearly(self):
        report = aggregate([
            RatePart("dephasing_flux", 0.1, ramsey=3.0, echo=3.0),
            RatePart("dephasing_charge", 0.1, ramsey=4.0, echo=4.0),
            RatePart("dephasing_photon", 0.1, ramsey=1.0, echo=1.0, law="exponential"),
        ])
        assert report.gphi_echo == pytest.approx(6.0)

    def test_rejects_empty_mixed_or_negative(self):
        with pytest.raises(InvalidInputError):
            aggregate([])
        with pytest.raises(InvalidInputError):
            aggregate([RatePart("a", 0.1, gamma1=1.0), RatePart("b", 0.2, gamma1=1.0)])
        with pytest.raises(InvalidInputError):
            aggregate([RatePart("a", 0.1, gamma1=-1.0)])


class TestCoherenceReport:
    def test_report_row(self, measured_device, small_settings):
        report = coherence_report(measured_device.with_flux(0.45), NoiseEnvironment(), small_settings, ResonatorModel())
        row = report.to_row(0.45)
        assert list(row) == COHERENCE_COLUMNS
        assert row["g1_drive"] == 0.0
        for column in COHERENCE_COLUMNS[2:]:
            assert row[column] >= 0
        assert row["g1_total"] == pytest.approx(sum(row[c] for c in COHERENCE_COLUMNS[2:7]))
        assert set(report.dephasing) == {"dephasing_flux", "dephasing_flux_second_order", "dephasing_charge"}

    def test_purcell_only_with_resonator(self, measured_device, small_settings):
        report = coherence_report(measured_device.with_flux(0.45), NoiseEnvironment(), small_settings)
        assert "purcell" not in report.relaxation

    def test_quiet_flux_line(self, measured_device, small_settings):
        report = coherence_report(measured_device.with_flux(0.45), NoiseEnvironment(a_phi=0.0), small_settings)
        assert report.relaxation["flux"] == 0.0
        assert report.dephasing["dephasing_flux"] == (0.0, 0.0)

    def test_sweep_keeps_grid_order(self, measured_device, small_settings):
        frame = coherence_sweep(measured_device, NoiseEnvironment(), [0.45, 0.4], small_settings)
        assert list(frame.columns) == COHERENCE_COLUMNS
        assert frame["flux_phi0"].tolist() == [0.45, 0.4]

    def test_sweep_needs_points(self, measured_device, small_settings):
        with pytest.raises(InvalidInputError):
            coherence_sweep(measured_device, NoiseEnvironment(), [], small_settings)


@pytest.mark.slow
class TestMeasuredDeviceCoherence:
    """Converged coherence of the fitted soft rhombus at frustration and near 1 GHz."""

    ENV = NoiseEnvironment(a_phi=4e-6, chi_ratio=6, q_cap=8e5, x_qp=1e-8, temp=0.05)
    SETTINGS = SolverSettings(levels=2)

    @pytest.fixture(scope="class")
    def frustrated(self):
        return coherence_report(measured_device_circuit(0.5), self.ENV, self.SETTINGS, ResonatorModel())

    @pytest.fixture(scope="class")
    def one_ghz(self):
        device = measured_device_circuit()
        phi = optimize.brentq(lambda p: qubit_frequency(device.with_flux(p), self.SETTINGS) - 1.0,
                              0.45, 0.499, xtol=1e-5)
        return coherence_report(device.with_flux(phi), self.ENV, self.SETTINGS, ResonatorModel())

    def test_ramsey_dephasing_at_frustration(self, frustrated):
        assert 670e-9 / 3 <= frustrated.t_phi_ramsey <= 670e-9 * 3

    def test_ramsey_dephasing_near_one_ghz(self, one_ghz):
        assert one_ghz.f01 == pytest.approx(1.0, abs=1e-3)
        assert 90e-9 / 3 <= one_ghz.t_phi_ramsey <= 90e-9 * 3

    def test_relaxation_at_frustration(self, frustrated):
        assert 27e-6 / 5 <= frustrated.t1 <= 27e-6 * 5

    def test_relaxation_near_one_ghz(self, one_ghz):
        assert one_ghz.t1 > 100e-6


@pytest.mark.slow
class TestRotationSymmetricRhombus:
    """Equal junctions and shunts that look the same from every island protect the doublet."""

    SETTINGS = SolverSettings(n_max=8, converge=False, levels=2)

    @pytest.fixture(scope="class")
    def pair(self):
        network = CapacitanceNetwork.from_pairs(
            {(1, 2): 20.0, (2, 3): 20.0, (3, 4): 20.0, (1, 4): 20.0, (1, 3): 1.0, (2, 4): 1.0},
            ground=[10.0] * 4,
        )
        symmetric = reduce_to_three_modes(network, JunctionSet([13.0] * 4))
        return qubit_states(symmetric, self.SETTINGS), qubit_states(symmetric.with_alpha(0.63), self.SETTINGS)

    def test_charge_does_not_connect_the_symmetric_doublet(self, pair):
        symmetric, asymmetric = pair
        for mode in (1, 2, 3):
            protected = abs(symmetric.element(charge_operator(mode, symmetric.basis)))
            exposed = abs(asymmetric.element(charge_operator(mode, asymmetric.basis)))
            assert protected < 1e-3 * exposed

    def test_dielectric_loss_is_suppressed(self, pair):
        symmetric, asymmetric = pair
        env = NoiseEnvironment()
        assert gamma1_dielectric(symmetric, env) < 1e-3 * gamma1_dielectric(asymmetric, env)

    def test_quasiparticles_are_not(self, pair):
        symmetric, asymmetric = pair
        env = NoiseEnvironment()
        assert gamma1_qp_total(symmetric, env)[0] > 0.5 * gamma1_qp_total(asymmetric, env)[0]
