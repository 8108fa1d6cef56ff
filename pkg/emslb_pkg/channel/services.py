# emslb_pkg/channel/services.py
import logging

import numpy as np
from scipy.integrate import trapezoid

from ..errors import DegenerateGeometryError, InvalidArgumentError
from ..geometry.services import ems_incidence_angles, linearized_delays
from ..models import SensingTerminal, Waveform
from ..reflector.services import array_factor, peak_rcs
from ..utils import SPEED_OF_LIGHT, dbm_to_watt, linear_to_db, wavelength

logger = logging.getLogger(__name__)

TERMINAL_PRESETS = ("vi-default", "single-channel")


# --- Terminal and waveform ---
def terminal_preset(name, f0, bandwidth, tx_power_dbm=23.0, noise_psd_dbm_hz=-173.0, rx_grid=20):
    """
    Named antenna layouts.

    vi-default: one Tx at the origin and a rx_grid x rx_grid Rx array on the y-z
    plane at half-wavelength spacing, centred on the origin.
    single-channel: co-located Tx and Rx at the origin.
    """
    if name == "vi-default":
        spacing = wavelength(f0) / 2
        offsets = (np.arange(rx_grid) - (rx_grid - 1) / 2) * spacing
        yy, zz = np.meshgrid(offsets, offsets, indexing="ij")
        rx = np.stack([np.zeros(yy.size), yy.ravel(), zz.ravel()], axis=-1)
        tx = np.zeros((1, 3))
    elif name == "single-channel":
        tx = np.zeros((1, 3))
        rx = np.zeros((1, 3))
    else:
        raise InvalidArgumentError(f"unknown terminal preset '{name}' (known: {', '.join(TERMINAL_PRESETS)})")
    return SensingTerminal(tx_positions=tx, rx_positions=rx, tx_power_dbm=tx_power_dbm,
                           noise_psd_dbm_hz=noise_psd_dbm_hz, f0=f0, bandwidth=bandwidth)


def make_waveform(terminal, pri_s=50e-6, n_pulses=1):
    """Flat waveform whose energy is the average Tx power integrated over the processing interval."""
    if not (pri_s > 0 and n_pulses >= 1):
        raise InvalidArgumentError("pri_s must be positive and n_pulses >= 1")
    energy = float(dbm_to_watt(terminal.tx_power_dbm)) * pri_s * n_pulses
    return Waveform(bandwidth=terminal.bandwidth, energy=energy)


def waveform_spectrum(f, waveform):
    """S(f): sqrt(E/B) inside [-B/2, B/2], zero outside."""
    f = np.asarray(f, dtype=float)
    level = np.sqrt(waveform.energy / waveform.bandwidth)
    spectrum = np.where(np.abs(f) <= waveform.bandwidth / 2, level, 0.0)
    return float(spectrum) if spectrum.ndim == 0 else spectrum


def frequency_grid(waveform, points):
    return np.linspace(-waveform.bandwidth / 2, waveform.bandwidth / 2, points)


# --- Scattering amplitude ---
def radar_constant(distance, f0):
    """sqrt(c^2 / (f0^2 (4 pi)^3 |x|^4)), the amplitude factor multiplying sqrt(RCS)."""
    if not distance > 0:
        raise DegenerateGeometryError("range must be positive")
    return SPEED_OF_LIGHT / (f0 * (4 * np.pi) ** 1.5 * distance ** 2)


def beta(f, pose, panel, gamma, xi, xi_bar):
    """
    Complex scattering amplitude of the panel at baseband frequency f.

    Returns:
        sqrt(c^2 / (f0^2 (4 pi)^3 |x|^4) * RCS(f, xi | xi_bar)) * exp(j gamma)
    """
    f = np.asarray(f, dtype=float)
    gain = array_factor(panel, f, xi, xi_bar)
    cross_section = peak_rcs(panel.area, panel.f0 + f) * gain
    value = radar_constant(pose.range_m, panel.f0) * np.sqrt(cross_section) * np.exp(1j * gamma)
    return complex(value) if np.ndim(value) == 0 else value


def point_scatterer_amplitude(distance, f0, cross_section, gamma=0.0):
    """Frequency-flat amplitude of a point scatterer with the given RCS (m^2)."""
    return radar_constant(distance, f0) * np.sqrt(cross_section) * np.exp(1j * gamma)


# --- Received signal means ---
def channel_delays(scenario, x=None):
    """(L,) delays 2 tau0 + dtau_i + dtau_o at position x (defaults to the pose)."""
    pose = scenario.pose if x is None else scenario.pose.moved_to(x)
    decomposition = linearized_delays(scenario.replace(pose=pose))
    return 2 * decomposition.tau0 + decomposition.dtau_i + decomposition.dtau_o


def _select(values, channel):
    return values if channel is None else values[channel]


def received_spectrum(f, channel, scenario, param=None):
    """
    Noiseless mean a_l(f) of the received spectrum with frequency-selective reflection.

    Args:
        f: baseband frequency (scalar or array), Hz.
        channel: channel index l, or None for all channels (leading axis L).
        scenario: Scenario.
        param: optional ParamVector overriding the position and configuration angles.
    """
    f = np.asarray(f, dtype=float)
    pose, xi_bar = _state(scenario, param)
    xi = ems_incidence_angles(pose)
    delays = channel_delays(scenario, pose.x)
    amplitude = beta(f, pose, scenario.panel, scenario.scatter.gamma, xi, xi_bar)
    spectrum = waveform_spectrum(f, scenario.waveform)
    ramp = np.exp(-2j * np.pi * np.multiply.outer(delays, scenario.panel.f0 + f))
    return _select(spectrum * amplitude * ramp, channel)


def narrowband_received(f, channel, scenario, param=None):
    """
    Mean received spectrum with the reflection frozen at f = 0 and the channel
    excess delays applied only as carrier-phase ramps.
    """
    f = np.asarray(f, dtype=float)
    pose, xi_bar = _state(scenario, param)
    xi = ems_incidence_angles(pose)
    delays = channel_delays(scenario, pose.x)
    round_trip = 2 * pose.range_m / SPEED_OF_LIGHT
    amplitude = beta(0.0, pose, scenario.panel, scenario.scatter.gamma, xi, xi_bar)
    spectrum = waveform_spectrum(f, scenario.waveform)
    carrier = np.exp(-2j * np.pi * (delays * scenario.panel.f0))
    ramp = np.multiply.outer(carrier, np.exp(-2j * np.pi * f * round_trip))
    return _select(spectrum * amplitude * ramp, channel)


def _state(scenario, param):
    if param is None:
        return scenario.pose, scenario.panel.config_angles
    return scenario.pose.moved_to(param.x), param.xi_bar


def channel_snr(scenario, param=None, narrowband=False):
    """Per-channel SNR in dB: integral of |a_l(f)|^2 over the band divided by N0."""
    f = frequency_grid(scenario.waveform, scenario.quad_points)
    model = narrowband_received if narrowband else received_spectrum
    mean = model(f, None, scenario, param)
    energy = trapezoid(np.abs(mean) ** 2, f, axis=-1)
    noise_psd = float(dbm_to_watt(scenario.terminal.noise_psd_dbm_hz))
    snr_db = linear_to_db(energy / noise_psd)
    logger.debug(f"[Channel] {scenario.scenario_id}: SNR {float(np.max(snr_db)):.2f} dB over {snr_db.size} channel(s)")
    return snr_db
