# tests/test_reflector.py
import numpy as np
import pytest

from emslb_pkg.errors import InvalidArgumentError
from emslb_pkg.models import BORESIGHT, AnglePair, RisPanel
from emslb_pkg.reflector.services import (array_factor, array_factor_amplitude,
                                          array_factor_bruteforce, beamwidths, corner_rcs,
                                          panel_for_side, peak_rcs, phase_profile, rcs,
                                          size_for_detectability, squint_loss_db)
from emslb_pkg.utils import linear_to_db, wavelength

F0 = 78.5e9


def quarter_wave_panel(n, f0=F0):
    return RisPanel(n_x=n, n_y=n, d=wavelength(f0) / 4, f0=f0)


# --- Phase profile ---
def test_phase_profile_boresight_is_zero():
    np.testing.assert_array_equal(phase_profile(quarter_wave_panel(10), BORESIGHT), 0.0)


def test_phase_profile_linear_in_index():
    panel = quarter_wave_panel(10)
    phases = phase_profile(panel, AnglePair(0.0, np.pi / 4))
    # element (n, m) sits at row n + N/2, column m + M/2
    centre = 5
    assert phases[centre, centre] == 0.0
    assert phases[centre + 2, centre] == pytest.approx(2 * phases[centre + 1, centre])
    assert phases[centre + 1, centre] == pytest.approx(np.pi / np.sqrt(2), rel=1e-12)


# --- Array factor ---
def test_array_factor_matched_at_carrier():
    panel = quarter_wave_panel(50)
    xi = AnglePair(0.4, 0.9)
    assert array_factor(panel, 0.0, xi, xi) == pytest.approx(1.0, abs=1e-12)


def test_array_factor_boresight_any_frequency():
    panel = quarter_wave_panel(50)
    for f in (-2e9, 0.0, 1.5e9):
        assert array_factor(panel, f, BORESIGHT, BORESIGHT) == pytest.approx(1.0, abs=1e-12)


def test_array_factor_two_by_two_hand_sum():
    panel = quarter_wave_panel(2)
    xi = AnglePair(0.0, np.pi / 6)
    # alpha_x = -pi/4, alpha_y = 0 -> cos(pi/4)^2
    assert array_factor(panel, 0.0, xi, BORESIGHT) == pytest.approx(0.5, abs=1e-12)
    assert array_factor_bruteforce(panel, 0.0, xi, BORESIGHT) == pytest.approx(0.5, abs=1e-12)


def test_array_factor_matches_bruteforce(rng):
    panel = quarter_wave_panel(50)
    for _ in range(200):
        f = rng.uniform(-4e9, 4e9)
        xi = AnglePair(rng.uniform(-np.pi, np.pi), rng.uniform(0, np.pi / 2))
        xi_bar = AnglePair(rng.uniform(-np.pi, np.pi), rng.uniform(0, np.pi / 2))
        closed = array_factor(panel, f, xi, xi_bar)
        assert 0.0 <= closed <= 1.0
        assert closed == pytest.approx(array_factor_bruteforce(panel, f, xi, xi_bar), abs=1e-9)


def test_array_factor_at_removable_singularity():
    # alpha_x = pi exactly: grating-lobe direction of a half-wavelength panel
    panel = RisPanel(n_x=8, n_y=8, d=wavelength(F0) / 2, f0=F0)
    xi_bar = AnglePair(0.0, np.pi / 2)
    xi = AnglePair(np.pi, np.pi / 2)
    assert array_factor(panel, 0.0, xi, xi_bar) == pytest.approx(
        array_factor_bruteforce(panel, 0.0, xi, xi_bar), abs=1e-9)


def test_amplitude_gradient_matches_finite_differences():
    panel = quarter_wave_panel(40)
    xi, xi_bar = AnglePair(0.3, 0.8), AnglePair(0.305, 0.79)
    f = 0.7e9
    terms = array_factor_amplitude(panel, f, xi, xi_bar)
    assert terms.h ** 2 == pytest.approx(array_factor(panel, f, xi, xi_bar), rel=1e-10)
    h = 1e-7
    for axis in range(2):
        step = np.zeros(2)
        step[axis] = h

        def amp(a, b):
            return float(array_factor_amplitude(panel, f, a, b).h)

        plus, minus = xi.as_array() + step, xi.as_array() - step
        numeric = (amp(AnglePair(*plus), xi_bar) - amp(AnglePair(*minus), xi_bar)) / (2 * h)
        assert terms.dh_dxi[axis] == pytest.approx(numeric, rel=1e-5, abs=1e-6)
        plus, minus = xi_bar.as_array() + step, xi_bar.as_array() - step
        numeric = (amp(xi, AnglePair(*plus)) - amp(xi, AnglePair(*minus))) / (2 * h)
        assert terms.dh_dxi_bar[axis] == pytest.approx(numeric, rel=1e-5, abs=1e-6)


# --- Band-edge squint ---
def test_band_edge_loss_five_cm_panel():
    panel = panel_for_side(0.05, F0)
    xi = AnglePair.from_degrees(0.0, 60.0)
    loss_db = -linear_to_db(rcs(panel, 2e9, xi, xi) / rcs(panel, 0.0, xi, xi))
    assert loss_db == pytest.approx(4.0, abs=2.0)


def test_in_band_loss_ten_cm_panel():
    panel = panel_for_side(0.10, F0)
    xi = AnglePair.from_degrees(0.0, 60.0)
    assert squint_loss_db(panel, xi, 4e9) >= 28.0
    assert squint_loss_db(panel_for_side(0.05, F0), xi, 4e9) < 10.0


def test_band_edge_loss_grows_towards_grazing():
    panel = panel_for_side(0.05, F0)
    losses = []
    for phi_deg in (0, 20, 40, 60, 80):
        xi = AnglePair.from_degrees(0.0, phi_deg)
        losses.append(-linear_to_db(array_factor(panel, 2e9, xi, xi)))
    assert losses[0] == pytest.approx(0.0, abs=1e-9)
    assert all(b >= a for a, b in zip(losses, losses[1:]))


# --- RCS ---
def test_peak_rcs_values():
    assert peak_rcs(0.01, 77e9) == pytest.approx(82.9, abs=0.1)
    assert peak_rcs(0.02, 77e9) == pytest.approx(4 * peak_rcs(0.01, 77e9))


def test_corner_rcs_values():
    assert corner_rcs(77e9, 0.1) == pytest.approx(248.7, abs=0.1)
    assert corner_rcs(77e9, 0.2) == pytest.approx(16 * corner_rcs(77e9, 0.1))
    assert corner_rcs(77e9, 0.1) / peak_rcs(0.1 ** 2, 77e9) == pytest.approx(3.0)


def test_size_for_detectability():
    area, side = size_for_detectability(0.1, 10.0)
    assert side == pytest.approx(0.0740, abs=1e-4)
    assert peak_rcs(area, 77e9) == pytest.approx(corner_rcs(77e9, 0.1) / 10)
    assert size_for_detectability(0.1, 0.0)[1] == pytest.approx(0.1 * 3 ** 0.25)
    assert size_for_detectability(0.2, 10.0)[1] == pytest.approx(0.148, abs=1e-3)


def test_size_for_detectability_rejects_bad_edge():
    with pytest.raises(InvalidArgumentError):
        size_for_detectability(0.0)


def test_rcs_matched_at_carrier_is_peak():
    panel = quarter_wave_panel(40)
    xi = AnglePair(1.0, 0.6)
    assert rcs(panel, 0.0, xi, xi) == pytest.approx(peak_rcs(panel.area, F0))


def test_rcs_scales_with_element_count_squared():
    xi = AnglePair(0.2, 0.5)
    small, large = quarter_wave_panel(20), quarter_wave_panel(40)
    ratio = rcs(large, 0.0, xi, xi) / rcs(small, 0.0, xi, xi)
    assert ratio == pytest.approx((40 * 40 / (20 * 20)) ** 2)


def test_panel_for_side_even_counts():
    panel = panel_for_side(0.05, F0)
    assert panel.n_x == panel.n_y == 52
    assert panel_for_side(1e-5, F0).n_x == 2


# --- Beamwidths ---
def test_beamwidths_ten_cm_panel_grazing():
    panel = panel_for_side(0.10, 77e9)
    widths = beamwidths(panel, AnglePair.from_degrees(0.0, 78.6))
    assert np.rad2deg(widths.delta_theta) == pytest.approx(0.5, rel=0.3)
    assert np.rad2deg(widths.delta_phi) == pytest.approx(2.5, rel=0.3)
    assert not widths.saturated


def test_beamwidths_half_aperture_doubles_width():
    xi = AnglePair.from_degrees(0.0, 45.0)
    wide = beamwidths(quarter_wave_panel(52), xi)
    narrow = beamwidths(quarter_wave_panel(104), xi)
    assert wide.delta_theta / narrow.delta_theta == pytest.approx(2.0, rel=0.2)


def test_beamwidths_boresight_symmetric():
    widths = beamwidths(quarter_wave_panel(60), BORESIGHT)
    assert widths.delta_theta == pytest.approx(widths.delta_phi, rel=1e-2)


def test_beamwidths_saturate_for_tiny_panel():
    assert beamwidths(quarter_wave_panel(2), AnglePair.from_degrees(0.0, 10.0)).saturated


def test_beamwidths_reject_grazing_incidence():
    with pytest.raises(InvalidArgumentError):
        beamwidths(quarter_wave_panel(10), AnglePair(0.0, np.pi / 2))
