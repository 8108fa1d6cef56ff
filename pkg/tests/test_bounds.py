# tests/test_bounds.py
import numpy as np
import pytest

from emslb_pkg.alignment.services import angle_error_covariance
from emslb_pkg.bounds.quadrature import gauss_hermite_2d, integrate_checked
from emslb_pkg.bounds.services import (bare_vehicle_benchmark, crb, crb_perfect_config,
                                       crb_unknown_config, effective_bandwidth, expected_fim, fim,
                                       fim_direct, hcrb, hybrid_im, matched_param, model_derivatives,
                                       position_error_bound, position_marginal_bound)
from emslb_pkg.channel.services import make_waveform, narrowband_received, received_spectrum, terminal_preset
from emslb_pkg.errors import (AccuracyError, InvalidArgumentError, SingularCovarianceError,
                              UnidentifiableParametersError)
from emslb_pkg.geometry.services import ems_incidence_angles
from emslb_pkg.models import AnglePair, InfoMatrix, ParamVector, PositionPrior
from emslb_pkg.utils import wavelength

from .conftest import F0, make_scenario


def offset_param(scenario, d_theta=0.01, d_phi=-0.01):
    xi = ems_incidence_angles(scenario.pose)
    return ParamVector(x=scenario.pose.x, xi_bar=AnglePair(xi.theta + d_theta, xi.phi + d_phi))


# --- Matrix inversion ---
def test_crb_of_identity():
    result = crb(InfoMatrix(np.eye(5)))
    np.testing.assert_allclose(result.covariance, np.eye(5))
    assert result.peb_m == pytest.approx(1.0)
    assert result.cond_number == pytest.approx(1.0)
    assert crb(InfoMatrix(4 * np.eye(5))).peb_m == pytest.approx(0.5)


def test_crb_rejects_zero_diagonal():
    with pytest.raises(UnidentifiableParametersError) as exc:
        crb(InfoMatrix(np.diag([1.0, 1.0, 1.0, 1.0, 0.0])))
    assert exc.value.cond_number == float("inf")


def test_crb_rejects_ill_conditioned():
    data = np.eye(5)
    data[3, 4] = data[4, 3] = 1 - 1e-14
    with pytest.raises(UnidentifiableParametersError):
        crb(InfoMatrix(data))


def test_condition_number_ignores_units(rng):
    a = rng.normal(size=(5, 5))
    data = a @ a.T + np.eye(5)
    units = np.diag([1e6, 1e6, 1e6, 1e-3, 1e-3])
    plain = crb(InfoMatrix(data))
    rescaled = crb(InfoMatrix(units @ data @ units))
    assert rescaled.cond_number == pytest.approx(plain.cond_number, rel=1e-8)


def test_parameter_mask_treats_configuration_as_known(rng):
    a = rng.normal(size=(5, 5))
    F = InfoMatrix(a @ a.T + np.eye(5))
    masked = crb(F, mask=[True, True, True, False, False])
    np.testing.assert_allclose(masked.covariance, np.linalg.inv(F.F_xx), rtol=1e-9, atol=1e-12)
    assert crb(F, mask=[True] * 5).peb_m == pytest.approx(crb(F).peb_m)
    assert masked.peb_m <= crb(F).peb_m


def test_parameter_mask_must_keep_position():
    with pytest.raises(InvalidArgumentError):
        crb(InfoMatrix(np.eye(5)), mask=[False, True, True, True, True])
    with pytest.raises(InvalidArgumentError):
        crb(InfoMatrix(np.eye(5)), mask=[True, True, True])


def test_position_marginal_matches_full_inverse(rng):
    a = rng.normal(size=(5, 5))
    F = InfoMatrix(a @ a.T + np.eye(5))
    full = crb(F)
    marginal = position_marginal_bound(F)
    np.testing.assert_allclose(marginal.covariance, full.covariance[:3, :3], rtol=1e-9)
    assert marginal.peb_m == pytest.approx(full.peb_m)


def test_position_error_bound():
    assert position_error_bound(np.diag([1.0, 4.0, 4.0, 100.0, 100.0])) == pytest.approx(np.sqrt(3.0))


# --- Quadrature ---
def test_integrate_checked_converges():
    f = np.linspace(-1.0, 1.0, 1025)
    integrand = (f ** 2)[:, None, None] * np.eye(3)
    np.testing.assert_allclose(integrate_checked(integrand, f), 2 / 3 * np.eye(3), rtol=1e-5)


def test_integrate_checked_exact_for_cubics():
    f = np.linspace(-1.0, 2.0, 5)
    integrand = (f ** 3 + f ** 2)[:, None, None] * np.eye(2)
    np.testing.assert_allclose(integrate_checked(integrand, f), (15 / 4 + 3) * np.eye(2), rtol=1e-12)


def test_small_panel_grid_converges(small_scenario):
    F = fim(small_scenario, offset_param(small_scenario, 0.02, -0.02), "wideband")
    assert np.all(np.isfinite(F.data))


def test_integrate_checked_flags_coarse_grid():
    f = np.linspace(-1.0, 1.0, 5)
    integrand = (2 + np.cos(40 * f))[:, None, None] * np.eye(3)
    with pytest.raises(AccuracyError) as exc:
        integrate_checked(integrand, f, label="test")
    assert exc.value.diagnostic["points"] == 5
    assert exc.value.diagnostic["relative_change"] > 1e-3


def test_integrate_checked_needs_odd_grid():
    f = np.linspace(-1.0, 1.0, 4)
    with pytest.raises(InvalidArgumentError):
        integrate_checked(np.ones((4, 3, 3)), f)


def test_gauss_hermite_moments():
    nodes, weights = gauss_hermite_2d(9)
    assert weights.sum() == pytest.approx(1.0)
    assert weights @ nodes[:, 0] ** 2 == pytest.approx(1.0)
    assert weights @ (nodes[:, 0] * nodes[:, 1]) == pytest.approx(0.0, abs=1e-14)
    assert weights @ nodes[:, 1] ** 4 == pytest.approx(3.0)


# --- Model derivatives ---
@pytest.mark.parametrize("mode, model", [("wideband", received_spectrum), ("narrowband", narrowband_received)])
def test_model_derivatives_match_finite_differences(mode, model):
    scenario = make_scenario(n=40, rx_grid=2)
    param = offset_param(scenario)
    channel = 3
    h_x = wavelength(F0) * 1e-6
    h_xi = 1e-6
    for f in (-0.2e9, 0.0, 0.3e9):
        da_dx, da_dxi_bar = model_derivatives(f, channel, scenario, param, mode)
        numeric_x = np.empty(3, dtype=complex)
        for axis in range(3):
            step = np.zeros(3)
            step[axis] = h_x
            plus = model(f, channel, scenario, ParamVector(x=param.x + step, xi_bar=param.xi_bar))
            minus = model(f, channel, scenario, ParamVector(x=param.x - step, xi_bar=param.xi_bar))
            numeric_x[axis] = (plus - minus) / (2 * h_x)
        numeric_xi = np.empty(2, dtype=complex)
        for axis in range(2):
            step = np.zeros(2)
            step[axis] = h_xi
            base = param.xi_bar.as_array()
            plus = model(f, channel, scenario, ParamVector(x=param.x, xi_bar=AnglePair(*(base + step))))
            minus = model(f, channel, scenario, ParamVector(x=param.x, xi_bar=AnglePair(*(base - step))))
            numeric_xi[axis] = (plus - minus) / (2 * h_xi)
        assert np.linalg.norm(da_dx - numeric_x) <= 1e-4 * np.linalg.norm(da_dx)
        assert np.linalg.norm(da_dxi_bar - numeric_xi) <= 1e-4 * np.linalg.norm(da_dxi_bar)


def test_configuration_derivative_vanishes_when_matched_at_carrier():
    scenario = make_scenario(n=40, rx_grid=2)
    da_dx, da_dxi_bar = model_derivatives(0.0, 0, scenario, matched_param(scenario))
    assert np.linalg.norm(da_dxi_bar) <= 1e-10 * np.linalg.norm(da_dx)


def test_model_derivatives_over_frequency_grid():
    scenario = make_scenario(n=40, rx_grid=2)
    f = np.linspace(-0.4e9, 0.4e9, 5)
    da_dx, da_dxi_bar = model_derivatives(f, 1, scenario, offset_param(scenario))
    assert da_dx.shape == (5, 3)
    assert da_dxi_bar.shape == (5, 2)


# --- Fisher information ---
@pytest.mark.parametrize("mode", ["wideband", "narrowband"])
def test_fim_matches_channel_sum(small_scenario, mode):
    param = offset_param(small_scenario)
    closed = fim(small_scenario, param, mode).data
    direct = fim_direct(small_scenario, param, mode).data
    np.testing.assert_allclose(closed, direct, rtol=1e-8, atol=1e-10 * np.max(np.abs(direct)))


def test_fim_scales_with_noise_level(small_scenario):
    param = offset_param(small_scenario)
    noisier_terminal = terminal_preset("vi-default", F0, 1e9, noise_psd_dbm_hz=-173.0 + 10 * np.log10(2.0),
                                       rx_grid=4)
    noisier = small_scenario.replace(terminal=noisier_terminal, waveform=make_waveform(noisier_terminal))
    np.testing.assert_allclose(2 * fim(noisier, param).data, fim(small_scenario, param).data, rtol=1e-10)


def test_fim_is_positive_semidefinite(small_scenario):
    F = fim(small_scenario, offset_param(small_scenario))
    assert F.dim == 5
    assert np.all(np.linalg.eigvalsh(F.data) >= -1e-9 * np.max(np.abs(F.data)))


def test_carrier_mode_is_zero_bandwidth_limit():
    scenario = make_scenario(n=40, rx_grid=2, bandwidth=1e6, quad_points=129)
    param = offset_param(scenario)
    carrier = fim(scenario, param, "carrier").data
    for mode in ("narrowband", "wideband"):
        np.testing.assert_allclose(fim(scenario, param, mode).data, carrier, rtol=1e-4,
                                   atol=1e-9 * np.max(np.abs(carrier)))


def test_unknown_mode_rejected(small_scenario):
    with pytest.raises(InvalidArgumentError):
        fim(small_scenario, mode="ultrawide")
    with pytest.raises(InvalidArgumentError):
        fim_direct(small_scenario, mode="carrier")


def test_coarse_quadrature_is_reported():
    scenario = make_scenario(n=104, rx_grid=2, bandwidth=4e9)
    with pytest.raises(AccuracyError) as exc:
        fim(scenario, matched_param(scenario), "wideband", quad_points=5)
    assert exc.value.diagnostic["points"] == 5


def test_effective_bandwidth():
    assert effective_bandwidth(1.0, 0.0) == 1.0
    assert effective_bandwidth(1.0, np.sqrt(12.0)) == pytest.approx(np.sqrt(2.0))
    assert effective_bandwidth(F0, 1e9) > effective_bandwidth(F0, 0.5e9)
    with pytest.raises(InvalidArgumentError):
        effective_bandwidth(F0, -1.0)


# --- Unknown configuration ---
def test_narrowband_configuration_unidentifiable_when_matched(small_scenario):
    F = fim(small_scenario, matched_param(small_scenario), "narrowband")
    np.testing.assert_array_equal(F.F_xixi, 0.0)
    with pytest.raises(UnidentifiableParametersError):
        crb(F)
    fallback = crb_unknown_config(small_scenario, "narrowband")
    expected = position_marginal_bound(F)
    assert fallback.peb_m == pytest.approx(expected.peb_m)
    assert fallback.bound == "crb"


def test_unknown_config_never_beats_perfect(small_scenario):
    for mode in ("wideband", "narrowband"):
        unknown = crb_unknown_config(small_scenario, mode)
        perfect = crb_perfect_config(small_scenario, mode)
        assert perfect.peb_m <= unknown.peb_m * (1 + 1e-9)
        assert perfect.bound == "crb_perfect"


# --- Hybrid information ---
def test_hybrid_im_adds_prior_information(small_scenario):
    prior = small_scenario.prior
    J = hybrid_im(small_scenario, prior, mc_samples=16, seed=3)
    expected = expected_fim(small_scenario, prior, n_samples=16, seed=3)
    difference = J.data - expected.data
    assert np.all(np.linalg.eigvalsh(difference) >= -1e-9 * np.max(np.abs(difference)))
    np.testing.assert_array_equal(difference[:3, :], 0.0)
    c_xi = angle_error_covariance(small_scenario.pose, prior)
    np.testing.assert_allclose(difference[3:, 3:], np.linalg.inv(c_xi), rtol=1e-9)


def test_prior_information_scales_with_inverse_variance(small_scenario):
    pose = small_scenario.pose
    wide = angle_error_covariance(pose, PositionPrior(pose.x, 1 / 3))
    narrow = angle_error_covariance(pose, PositionPrior(pose.x, 1 / 6))
    np.testing.assert_allclose(np.linalg.inv(narrow), 4 * np.linalg.inv(wide), rtol=1e-9)


def test_hybrid_im_needs_positive_sigma(small_scenario):
    with pytest.raises(SingularCovarianceError):
        hybrid_im(small_scenario, PositionPrior(small_scenario.pose.x, 0.0))


def test_expected_fim_at_zero_sigma_is_matched_fim(small_scenario):
    prior = PositionPrior(small_scenario.pose.x, 0.0)
    np.testing.assert_array_equal(expected_fim(small_scenario, prior).data,
                                  fim(small_scenario, matched_param(small_scenario)).data)


def test_expected_fim_is_seeded(small_scenario):
    first = expected_fim(small_scenario, n_samples=8, seed=21)
    again = expected_fim(small_scenario, n_samples=8, seed=21)
    other = expected_fim(small_scenario, n_samples=8, seed=22)
    np.testing.assert_array_equal(first.data, again.data)
    assert not np.array_equal(first.data, other.data)


def test_expected_fim_gauss_hermite_agrees_with_monte_carlo(small_scenario):
    quadrature = expected_fim(small_scenario, method="gauss-hermite", order=5)
    sampled = expected_fim(small_scenario, method="monte-carlo", n_samples=200, seed=4)
    np.testing.assert_allclose(np.diag(quadrature.F_xx), np.diag(sampled.F_xx), rtol=0.05)


def test_expected_fim_unknown_method(small_scenario):
    with pytest.raises(InvalidArgumentError):
        expected_fim(small_scenario, method="sparse-grid")


@pytest.mark.parametrize("sigma", [1 / 6, 2 / 3])
@pytest.mark.parametrize("bandwidth", [1e9, 2e9, 4e9])
@pytest.mark.parametrize("n", [50, 76, 100])
def test_perfect_config_never_worse_than_hcrb(n, bandwidth, sigma):
    scenario = make_scenario(n=n, rx_grid=4, bandwidth=bandwidth, sigma=sigma, quad_points=257)
    for mode in ("wideband", "narrowband"):
        perfect = crb_perfect_config(scenario, mode)
        hybrid = hcrb(scenario, mode=mode, mc_samples=32, seed=1)
        assert perfect.peb_m <= hybrid.peb_m
        assert hybrid.bound == "hcrb"


# --- Bare vehicle ---
def test_bare_vehicle_bias_inflates_rmse(small_scenario):
    biased = bare_vehicle_benchmark(small_scenario)
    unbiased = bare_vehicle_benchmark(small_scenario, bias=(0.0, 0.0, 0.0))
    assert unbiased.rmse_m == pytest.approx(unbiased.peb_m)
    assert biased.peb_m == pytest.approx(unbiased.peb_m)
    assert biased.rmse_m == pytest.approx(np.sqrt(biased.peb_m ** 2 + 0.05 / 3))
    assert biased.bound == "bare"


def test_bare_vehicle_equals_matched_point_scatterer(small_scenario):
    side = small_scenario.panel.side_x
    bare = bare_vehicle_benchmark(small_scenario, rcs_deficit_db=0.0, bias=(0.0, 0.0, 0.0), reference_side=side)
    panel = crb_perfect_config(small_scenario, "narrowband")
    assert bare.peb_m == pytest.approx(panel.peb_m, rel=1e-6)


def test_bare_vehicle_rcs_deficit_scaling(small_scenario):
    loud = bare_vehicle_benchmark(small_scenario, rcs_deficit_db=0.0, bias=(0.0, 0.0, 0.0))
    quiet = bare_vehicle_benchmark(small_scenario, rcs_deficit_db=10.0, bias=(0.0, 0.0, 0.0))
    assert quiet.peb_m / loud.peb_m == pytest.approx(np.sqrt(10.0), rel=1e-6)


def test_bare_vehicle_rejects_bad_bias(small_scenario):
    with pytest.raises(InvalidArgumentError):
        bare_vehicle_benchmark(small_scenario, bias=(0.1, np.nan, 0.0))


# --- Trends on the reference setting ---
@pytest.mark.slow
def test_narrowband_bound_flat_in_bandwidth():
    pebs = [crb_perfect_config(make_scenario(rx_grid=4, bandwidth=b), "narrowband").peb_m
            for b in (1e9, 2e9, 4e9)]
    assert max(pebs) <= 1.05 * min(pebs)


@pytest.mark.slow
def test_unknown_config_wideband_bound_grows_with_bandwidth():
    bandwidths = (1e9, 2e9, 4e9, 6e9, 8e9)
    pebs = [crb_unknown_config(make_scenario(bandwidth=b), "wideband").peb_m for b in bandwidths]
    assert all(b >= a for a, b in zip(pebs, pebs[1:]))
    narrowband = crb_perfect_config(make_scenario(bandwidth=1e9), "narrowband").peb_m
    assert pebs[0] > narrowband


@pytest.mark.slow
def test_perfect_config_wideband_crosses_narrowband():
    # the modelled crossing sits near 3.4 GHz, where the first array-factor null enters the band
    narrowband = crb_perfect_config(make_scenario(bandwidth=1e9), "narrowband").peb_m
    for bandwidth in (1e9, 2e9):
        assert crb_perfect_config(make_scenario(bandwidth=bandwidth), "wideband").peb_m < narrowband
    assert crb_perfect_config(make_scenario(bandwidth=8e9), "wideband").peb_m > narrowband


@pytest.mark.slow
def test_reference_scenario_recorded_values():
    scenario = make_scenario(bandwidth=1e9, quad_points=4097)
    F = fim(scenario, matched_param(scenario), "wideband")
    np.testing.assert_allclose(np.diag(F.F_xx), [1.788122652e14, 4.470310409e13, 7.554822710e13], rtol=1e-5)
    np.testing.assert_allclose(np.abs(F.F_xixi), [[8.649887085e5, 5.764912361e7],
                                                   [5.764912361e7, 4.640903945e9]], rtol=1e-5)
    assert crb_perfect_config(scenario, "wideband").peb_m == pytest.approx(1.1332083e-4, rel=1e-5)
    assert crb_perfect_config(scenario, "narrowband").peb_m == pytest.approx(1.2311175e-4, rel=1e-5)
    assert crb_unknown_config(scenario, "wideband").peb_m == pytest.approx(1.2820673e-4, rel=1e-5)


@pytest.mark.slow
def test_hcrb_grows_with_position_uncertainty():
    pebs = [hcrb(make_scenario(rx_grid=4, sigma=s), mc_samples=64, seed=2).peb_m for s in (1 / 6, 2 / 3)]
    assert pebs[1] >= pebs[0]


@pytest.mark.slow
def test_bare_vehicle_worse_than_any_ems_bound():
    scenario = make_scenario(rx_grid=4)
    bare = bare_vehicle_benchmark(scenario)
    ems = [crb_perfect_config(scenario, "wideband"), crb_perfect_config(scenario, "narrowband"),
           hcrb(scenario, mc_samples=32, seed=2)]
    assert all(bare.peb_m > result.peb_m for result in ems)
