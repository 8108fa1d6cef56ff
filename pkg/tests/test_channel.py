# tests/test_channel.py
import numpy as np
import pytest
from scipy.integrate import trapezoid

from emslb_pkg.bounds.services import matched_param
from emslb_pkg.channel.services import (beta, channel_delays, channel_snr, frequency_grid,
                                        make_waveform, narrowband_received, point_scatterer_amplitude,
                                        radar_constant, received_spectrum, terminal_preset,
                                        waveform_spectrum)
from emslb_pkg.errors import DegenerateGeometryError, InvalidArgumentError
from emslb_pkg.geometry.services import ems_incidence_angles, linearized_delays
from emslb_pkg.models import AnglePair, Pose, PositionPrior, SensingTerminal, Waveform
from emslb_pkg.reflector.services import panel_for_side, peak_rcs
from emslb_pkg.utils import SPEED_OF_LIGHT, dbm_to_watt

from .conftest import F0, make_scenario


# --- Terminal and waveform ---
def test_default_terminal_layout():
    terminal = terminal_preset("vi-default", F0, 1e9)
    assert terminal.tx_positions.shape == (1, 3)
    assert terminal.rx_positions.shape == (400, 3)
    assert terminal.n_channels == 400
    np.testing.assert_allclose(terminal.rx_positions.mean(axis=0), 0.0, atol=1e-15)
    np.testing.assert_array_equal(terminal.rx_positions[:, 0], 0.0)


def test_unknown_terminal_preset():
    with pytest.raises(InvalidArgumentError):
        terminal_preset("phased-array", F0, 1e9)


def test_terminal_rejects_wide_band():
    with pytest.raises(InvalidArgumentError):
        SensingTerminal(tx_positions=[[0, 0, 0]], rx_positions=[[0, 0, 0]], tx_power_dbm=23.0,
                        noise_psd_dbm_hz=-173.0, f0=1e9, bandwidth=3e9)


def test_waveform_energy_is_spectrum_integral():
    terminal = terminal_preset("single-channel", F0, 2e9)
    waveform = make_waveform(terminal, pri_s=50e-6)
    assert waveform.energy == pytest.approx(float(dbm_to_watt(23.0)) * 50e-6)
    f = frequency_grid(waveform, 2001)
    assert trapezoid(np.abs(waveform_spectrum(f, waveform)) ** 2, f) == pytest.approx(waveform.energy)
    assert waveform_spectrum(1.5e9, waveform) == 0.0


def test_waveform_rejects_other_models():
    with pytest.raises(InvalidArgumentError):
        Waveform(bandwidth=1e9, energy=1.0, spectrum_model="chirp")


# --- Scattering amplitude ---
def test_beta_zero_for_null_gain():
    panel = panel_for_side(0.05, F0)
    pose = Pose(x=[0.0, 0.0, -10.0])
    # first null along x: N alpha_x = pi with alpha_x = (pi / 2) sin(phi_bar)
    sin_phi = 2 / panel.n_x
    xi = AnglePair(0.0, 0.0)
    xi_bar = AnglePair(0.0, float(np.arcsin(sin_phi)))
    assert abs(beta(0.0, pose, panel, 0.0, xi, xi_bar)) == pytest.approx(0.0, abs=1e-14)


def test_beta_range_law():
    panel = panel_for_side(0.05, F0)
    xi = AnglePair(0.5, 0.7)
    near = beta(0.0, Pose(x=[5.0, 0.0, -5.0]), panel, 0.0, xi, xi)
    far = beta(0.0, Pose(x=[10.0, 0.0, -10.0]), panel, 0.0, xi, xi)
    assert abs(far) == pytest.approx(abs(near) / 4)


def test_beta_reference_value():
    scenario = make_scenario(n=100)
    xi = ems_incidence_angles(scenario.pose)
    value = beta(0.0, scenario.pose, scenario.panel, 0.3, xi, xi)
    expected = np.sqrt(SPEED_OF_LIGHT ** 2 * peak_rcs(scenario.panel.area, F0)
                       / (F0 ** 2 * (4 * np.pi) ** 3 * scenario.pose.range_m ** 4))
    assert abs(value) == pytest.approx(expected)
    assert np.angle(value) == pytest.approx(0.3)


def test_radar_constant_rejects_zero_range():
    with pytest.raises(DegenerateGeometryError):
        radar_constant(0.0, F0)


def test_point_scatterer_matches_panel_at_peak():
    scenario = make_scenario(n=60)
    xi = ems_incidence_angles(scenario.pose)
    panel_beta = beta(0.0, scenario.pose, scenario.panel, 0.0, xi, xi)
    point = point_scatterer_amplitude(scenario.pose.range_m, F0, peak_rcs(scenario.panel.area, F0))
    assert abs(point) == pytest.approx(abs(panel_beta))


# --- Received means ---
def test_received_spectrum_zero_outside_band():
    scenario = make_scenario(n=40, rx_grid=2)
    values = received_spectrum(np.array([-0.6e9, 0.6e9]), None, scenario, matched_param(scenario))
    np.testing.assert_array_equal(values, 0.0)


def test_received_phase_difference_between_rx_elements():
    scenario = make_scenario(n=40, rx_grid=2)
    param = matched_param(scenario)
    decomposition = linearized_delays(scenario)
    a = received_spectrum(0.0, None, scenario, param)
    measured = np.angle(a[1] / a[0])
    expected = -2 * np.pi * F0 * (decomposition.dtau_o[1] - decomposition.dtau_o[0])
    assert np.angle(np.exp(1j * (measured - expected))) == pytest.approx(0.0, abs=1e-6)


def test_received_magnitude_is_channel_independent():
    scenario = make_scenario(n=40, rx_grid=4)
    values = received_spectrum(np.linspace(-4e8, 4e8, 9), None, scenario, matched_param(scenario))
    np.testing.assert_allclose(np.abs(values), np.broadcast_to(np.abs(values[0]), values.shape), rtol=1e-12)


def test_received_channel_selection():
    scenario = make_scenario(n=40, rx_grid=2)
    f = np.linspace(-4e8, 4e8, 5)
    full = received_spectrum(f, None, scenario, matched_param(scenario))
    np.testing.assert_array_equal(received_spectrum(f, 2, scenario, matched_param(scenario)), full[2])


def test_narrowband_equals_wideband_at_carrier():
    scenario = make_scenario(n=60, rx_grid=3)
    param = matched_param(scenario)
    np.testing.assert_allclose(narrowband_received(0.0, None, scenario, param),
                               received_spectrum(0.0, None, scenario, param), rtol=1e-12)


def test_narrowband_magnitude_flat_over_band():
    scenario = make_scenario(n=100, rx_grid=2)
    values = narrowband_received(np.linspace(-5e8, 5e8, 11), 0, scenario, matched_param(scenario))
    np.testing.assert_allclose(np.abs(values), np.abs(values[0]), rtol=1e-12)


def test_narrowband_band_edge_advantage_for_ten_cm_panel():
    scenario = make_scenario(n=104, x=[10.0, 0.0, -10.0 / np.tan(np.deg2rad(60.0))], bandwidth=4e9,
                             preset="single-channel")
    xi = ems_incidence_angles(scenario.pose)
    assert np.rad2deg(xi.phi) == pytest.approx(60.0)
    param = matched_param(scenario)
    f = np.linspace(-2e9, 2e9, 801)
    wide = np.abs(received_spectrum(f, 0, scenario, param)) ** 2
    narrow = np.abs(narrowband_received(f, 0, scenario, param)) ** 2
    assert 10 * np.log10(np.max(narrow / wide)) >= 28.0


def test_received_phase_is_carrier_delay_ramp():
    scenario = make_scenario(n=40, rx_grid=2)
    param = matched_param(scenario)
    a = received_spectrum(0.0, None, scenario, param)
    delays = channel_delays(scenario)
    np.testing.assert_allclose(np.conj(a), np.abs(a) * np.exp(2j * np.pi * F0 * delays), rtol=1e-9)


# --- SNR ---
def test_snr_power_scaling():
    scenario = make_scenario(n=60, rx_grid=2, quad_points=257)
    louder_terminal = terminal_preset("vi-default", F0, 1e9, tx_power_dbm=26.0, rx_grid=2)
    louder = scenario.replace(terminal=louder_terminal, waveform=make_waveform(louder_terminal))
    param = matched_param(scenario)
    gain = channel_snr(louder, param) - channel_snr(scenario, param)
    np.testing.assert_allclose(gain, 3.0, atol=1e-9)


def test_snr_ignores_prior():
    scenario = make_scenario(n=60, rx_grid=2, quad_points=257)
    vague = scenario.replace(prior=PositionPrior(scenario.pose.x, 2.0))
    param = matched_param(scenario)
    np.testing.assert_array_equal(channel_snr(vague, param), channel_snr(scenario, param))


def test_snr_default_setting_is_finite_and_positive():
    scenario = make_scenario(n=100, rx_grid=20, quad_points=257)
    snr = channel_snr(scenario, matched_param(scenario))
    assert snr.shape == (400,)
    assert np.all(np.isfinite(snr)) and np.all(snr > 0)


def test_wideband_energy_never_exceeds_narrowband():
    for bandwidth in (1e9, 4e9):
        scenario = make_scenario(n=100, rx_grid=2, bandwidth=bandwidth, quad_points=1025)
        param = matched_param(scenario)
        wide = channel_snr(scenario, param)
        narrow = channel_snr(scenario, param, narrowband=True)
        assert np.all(wide <= narrow + 1e-9)
