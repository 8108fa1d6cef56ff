# emslb_pkg/bounds/services.py
import logging
from typing import NamedTuple

import numpy as np

from ..alignment.services import angle_error_covariance
from ..channel.services import frequency_grid, radar_constant, waveform_spectrum
from ..errors import (InvalidArgumentError, SingularCovarianceError,
                      UnidentifiableParametersError)
from ..geometry.services import channel_pairs, ems_incidence_angles, incidence_jacobian
from ..models import PARAM_DIM, AnglePair, BoundResult, InfoMatrix, ParamVector
from ..reflector.services import array_factor_amplitude, peak_rcs
from ..utils import SPEED_OF_LIGHT, child_rng, chunk_sizes, dbm_to_watt
from .quadrature import gauss_hermite_2d, integrate_checked

logger = logging.getLogger(__name__)

MODES = ("wideband", "narrowband", "carrier")
DEFAULT_BIAS_M = (0.2, 0.1, 0.0)
# parameter mask keeping only the position; the configuration angles are known
POSITION_ONLY = (True, True, True, False, False)


class _Amplitude(NamedTuple):
    """Real amplitude b(f) (|beta|) and its gradient over [x; xi_bar], per frequency."""
    b: np.ndarray
    grad: np.ndarray


class _Geometry(NamedTuple):
    x_hat: np.ndarray
    distance: float
    delay_grad: np.ndarray  # (L, 3) dT_l/dx
    n_channels: int


# --- Building blocks ---
def _resolve(scenario, param):
    if param is None:
        param = ParamVector(x=scenario.pose.x, xi_bar=scenario.panel.config_angles)
    return scenario.pose.moved_to(param.x), param


def matched_param(scenario):
    """Parameter vector with the configuration matched to the true incidence angles."""
    return ParamVector(x=scenario.pose.x, xi_bar=ems_incidence_angles(scenario.pose))


def _geometry(scenario, pose):
    distance = pose.range_m
    x_hat = pose.x / distance
    tx, rx = channel_pairs(scenario.terminal)
    projector = np.eye(3) - np.outer(x_hat, x_hat)
    delay_grad = 2 * x_hat / SPEED_OF_LIGHT + (tx + rx) @ projector / (SPEED_OF_LIGHT * distance)
    return _Geometry(x_hat=x_hat, distance=distance, delay_grad=delay_grad, n_channels=tx.shape[0])


def _panel_amplitude(scenario, pose, xi_bar, f):
    """b = K(|x|) sqrt(peak RCS(f0 + f)) |h| and its gradient."""
    panel = scenario.panel
    f = np.atleast_1d(np.asarray(f, dtype=float))
    xi = ems_incidence_angles(pose)
    terms = array_factor_amplitude(panel, f, xi, xi_bar)
    amp = radar_constant(pose.range_m, panel.f0) * np.sqrt(peak_rcs(panel.area, panel.f0 + f))
    sign = np.sign(terms.h)
    b = amp * np.abs(terms.h)
    x_hat = pose.x / pose.range_m
    grad = np.empty((f.size, PARAM_DIM))
    grad[:, :3] = (b[:, None] * (-2 * x_hat / pose.range_m)
                   + (amp * sign)[:, None] * (terms.dh_dxi @ incidence_jacobian(pose)))
    grad[:, 3:] = (amp * sign)[:, None] * terms.dh_dxi_bar
    return _Amplitude(b=b, grad=grad)


def _point_amplitude(pose, f0, cross_section, n_freq):
    b = np.full(n_freq, radar_constant(pose.range_m, f0) * np.sqrt(cross_section))
    grad = np.zeros((n_freq, PARAM_DIM))
    grad[:, :3] = b[:, None] * (-2 * pose.x / pose.range_m ** 2)
    return _Amplitude(b=b, grad=grad)


def _frozen(amplitude, n_freq):
    """Broadcasts an f = 0 amplitude over the frequency grid."""
    return _Amplitude(b=np.repeat(amplitude.b, n_freq), grad=np.repeat(amplitude.grad, n_freq, axis=0))


def _phase_information(geometry, f, f0, mode):
    """(Nf, 3, 3) sum over channels of the phase-gradient outer products."""
    grads = geometry.delay_grad
    d_matrix = grads.T @ grads
    omega = 2 * np.pi * (f0 + f)
    if mode != "narrowband":
        return omega[:, None, None] ** 2 * d_matrix
    omega0 = 2 * np.pi * f0
    g = 2 * geometry.x_hat / SPEED_OF_LIGHT
    c_sum = grads.sum(axis=0)
    cross = np.outer(c_sum, g) + np.outer(g, c_sum)
    two_pi_f = 2 * np.pi * f
    return (omega0 ** 2 * d_matrix
            + (two_pi_f * omega0)[:, None, None] * cross
            + (geometry.n_channels * two_pi_f ** 2)[:, None, None] * np.outer(g, g))


def _integrand(amplitude, phase_info, n_channels):
    """(Nf, 5, 5): L grad b grad b^T + b^2 P(f) on the position block."""
    integrand = n_channels * np.einsum("fi,fj->fij", amplitude.grad, amplitude.grad)
    integrand[:, :3, :3] += amplitude.b[:, None, None] ** 2 * phase_info
    return integrand


def _assemble(scenario, pose, amplitude_for, mode, quad_points, rel_tol, label):
    """Runs the quadrature (or the carrier-only evaluation) for a given amplitude model."""
    if mode not in MODES:
        raise InvalidArgumentError(f"unknown bound mode '{mode}' (known: {', '.join(MODES)})")
    waveform = scenario.waveform
    noise_psd = float(dbm_to_watt(scenario.terminal.noise_psd_dbm_hz))
    geometry = _geometry(scenario, pose)
    f0 = scenario.panel.f0

    if mode == "carrier":
        f = np.zeros(1)
        integrand = _integrand(amplitude_for(f), _phase_information(geometry, f, f0, mode), geometry.n_channels)
        return (2.0 / noise_psd) * waveform.energy * integrand[0]

    f = frequency_grid(waveform, quad_points)
    if mode == "narrowband":
        amplitude = _frozen(amplitude_for(np.zeros(1)), f.size)
    else:
        amplitude = amplitude_for(f)
    integrand = _integrand(amplitude, _phase_information(geometry, f, f0, mode), geometry.n_channels)
    integrand *= np.abs(waveform_spectrum(f, waveform))[:, None, None] ** 2
    return (2.0 / noise_psd) * integrate_checked(integrand, f, rel_tol, label)


# --- Fisher information ---
def fim(scenario, param=None, mode="wideband", quad_points=None, rel_tol=None):
    """
    Fisher information over [x; xi_bar] for the EMS-equipped vehicle.

    The per-channel information (2/N0) Re{da^H da} reduces, for a real amplitude
    b = |beta| shared by all channels, to L grad b grad b^T + b^2 omega^2 sum_l dT_l dT_l^T,
    which is integrated over the band.

    Args:
        scenario: Scenario.
        param: ParamVector (defaults to the pose and the panel configuration).
        mode: 'wideband' (frequency-selective reflection), 'narrowband'
            (reflection frozen at f0, carrier-phase delays) or 'carrier'
            (zero-bandwidth limit).
        quad_points: odd number of frequency samples (defaults to scenario.quad_points).
        rel_tol: quadrature convergence tolerance (defaults to scenario.quad_rel_tol).

    Returns:
        InfoMatrix (5x5).
    """
    pose, param = _resolve(scenario, param)
    points = quad_points or scenario.quad_points
    data = _assemble(scenario, pose, lambda f: _panel_amplitude(scenario, pose, param.xi_bar, f),
                     mode, points, rel_tol or scenario.quad_rel_tol, f"{mode} FIM")
    return InfoMatrix(data)


def _mean_derivatives(f, scenario, param, mode):
    """(L, Nf, 5) complex derivatives of the mean received spectrum."""
    pose, param = _resolve(scenario, param)
    f = np.atleast_1d(np.asarray(f, dtype=float))
    geometry = _geometry(scenario, pose)
    f0 = scenario.panel.f0
    tx, rx = channel_pairs(scenario.terminal)
    delays = 2 * geometry.distance / SPEED_OF_LIGHT + (tx + rx) @ geometry.x_hat / SPEED_OF_LIGHT

    if mode == "narrowband":
        amplitude = _frozen(_panel_amplitude(scenario, pose, param.xi_bar, np.zeros(1)), f.size)
        g = 2 * geometry.x_hat / SPEED_OF_LIGHT
        round_trip = 2 * geometry.distance / SPEED_OF_LIGHT
        phase = 2 * np.pi * (f0 * delays[:, None] + f[None, :] * round_trip)
        phase_grad = (2 * np.pi * f0 * geometry.delay_grad[:, None, :]
                      + 2 * np.pi * f[None, :, None] * g[None, None, :])
    else:
        amplitude = _panel_amplitude(scenario, pose, param.xi_bar, f)
        omega = 2 * np.pi * (f0 + f)
        phase = delays[:, None] * omega[None, :]
        phase_grad = omega[None, :, None] * geometry.delay_grad[:, None, :]

    carrier = (waveform_spectrum(f, scenario.waveform) * np.exp(1j * scenario.scatter.gamma))[None, :] * np.exp(-1j * phase)
    derivative = np.broadcast_to(amplitude.grad[None, :, :], phase.shape + (PARAM_DIM,)).astype(complex)
    derivative[..., :3] -= 1j * amplitude.b[None, :, None] * phase_grad
    return carrier[..., None] * derivative


def model_derivatives(f, channel, scenario, param=None, mode="wideband"):
    """
    Analytic derivatives of the mean received spectrum a_l(f) of channel `channel`.

    Returns:
        (da/dx: 3 complex, da/dxi_bar: 2 complex); with an array `f` each has a
        leading frequency axis.
    """
    derivative = _mean_derivatives(f, scenario, param, mode)[channel]
    if np.ndim(f) == 0:
        derivative = derivative[0]
    return derivative[..., :3], derivative[..., 3:]


def fim_direct(scenario, param=None, mode="wideband", quad_points=None):
    """Channel-by-channel FIM from model_derivatives (reference evaluation)."""
    if mode == "carrier":
        raise InvalidArgumentError("fim_direct integrates over the band; use mode 'wideband' or 'narrowband'")
    f = frequency_grid(scenario.waveform, quad_points or scenario.quad_points)
    derivative = _mean_derivatives(f, scenario, param, mode)
    integrand = np.einsum("lfi,lfj->fij", derivative.conj(), derivative).real
    noise_psd = float(dbm_to_watt(scenario.terminal.noise_psd_dbm_hz))
    data = (2.0 / noise_psd) * integrate_checked(integrand, f, scenario.quad_rel_tol, f"{mode} direct FIM")
    return InfoMatrix(0.5 * (data + data.T))


# --- Hybrid information ---
def _config_samples(xi, c_xi, method, n_samples, seed, order, chunk=256):
    """Configuration-angle nodes and weights for E[F] over xi_bar ~ N(xi, C_xi)."""
    root = np.linalg.cholesky(c_xi)
    if method == "gauss-hermite":
        nodes, weights = gauss_hermite_2d(order)
    elif method == "monte-carlo":
        nodes = np.concatenate([child_rng(seed, index).standard_normal((size, 2))
                                for index, size in enumerate(chunk_sizes(n_samples, chunk))])
        weights = np.full(n_samples, 1.0 / n_samples)
    else:
        raise InvalidArgumentError(f"unknown expectation method '{method}'")
    offsets = nodes @ root.T
    samples = [AnglePair.clipped(xi.theta + dt, xi.phi + dp) for dt, dp in offsets]
    return samples, weights


def expected_fim(scenario, prior=None, mode="wideband", method="monte-carlo",
                 n_samples=None, seed=None, order=9):
    """
    E[F] over the configuration angles xi_bar ~ N(xi, C_xi), with C_xi propagated from
    the position prior. Samples use counter-based seeds, so the result depends only on
    (seed, n_samples).
    """
    prior = prior or scenario.prior
    pose = scenario.pose
    xi = ems_incidence_angles(pose)
    if prior is None or prior.sigma == 0:
        return fim(scenario, ParamVector(x=pose.x, xi_bar=xi), mode)
    c_xi = _checked_angle_covariance(pose, prior)
    n_samples = n_samples or scenario.mc_samples
    seed = scenario.seed if seed is None else seed
    samples, weights = _config_samples(xi, c_xi, method, n_samples, seed, order)

    total = np.zeros((PARAM_DIM, PARAM_DIM))
    for weight, xi_bar in zip(weights, samples):
        total += weight * fim(scenario, ParamVector(x=pose.x, xi_bar=xi_bar), mode).data
    logger.debug(f"[Bounds] E[F] ({method}, {len(samples)} nodes, {mode}) for {scenario.scenario_id}")
    return InfoMatrix(0.5 * (total + total.T))


def _checked_angle_covariance(pose, prior, cond_limit=1e12):
    c_xi = angle_error_covariance(pose, prior)
    eigenvalues = np.linalg.eigvalsh(c_xi)
    if eigenvalues[0] <= 0 or eigenvalues[-1] / eigenvalues[0] > cond_limit:
        raise SingularCovarianceError(
            "angle error covariance is singular; use crb_perfect_config for a known configuration"
        )
    return c_xi


def hybrid_im(scenario, prior=None, mc_samples=None, seed=None, mode="wideband", method="monte-carlo", order=9):
    """
    Hybrid information J = E[F] + J_R, where J_R carries the Gaussian prior
    information C_xi^-1 on the configuration angles and nothing on the position.

    Raises:
        SingularCovarianceError: when the prior is degenerate (sigma = 0).
    """
    prior = prior or scenario.prior
    if prior is None or prior.sigma <= 0:
        raise SingularCovarianceError("hybrid information needs sigma > 0; use crb_perfect_config instead")
    c_xi = _checked_angle_covariance(scenario.pose, prior)
    expected = expected_fim(scenario, prior, mode, method, mc_samples, seed, order)
    prior_info = np.zeros((PARAM_DIM, PARAM_DIM))
    prior_info[3:, 3:] = np.linalg.inv(c_xi)
    return InfoMatrix(expected.data + prior_info)


# --- Bounds ---
def _invert(matrix, cond_limit):
    """
    Inverse through the eigendecomposition of the diagonally scaled matrix.
    The reported condition number is that of the scaled matrix.
    """
    diag = np.diag(matrix)
    if np.any(diag <= 0):
        raise UnidentifiableParametersError("information matrix has a zero diagonal entry", float("inf"))
    scale = 1.0 / np.sqrt(diag)
    scaled = matrix * np.outer(scale, scale)
    eigenvalues, vectors = np.linalg.eigh(scaled)
    cond = float("inf") if eigenvalues[0] <= 0 else float(eigenvalues[-1] / eigenvalues[0])
    if cond > cond_limit:
        raise UnidentifiableParametersError(f"information matrix is near-singular (cond={cond:.3e})", cond)
    inverse = (vectors / eigenvalues) @ vectors.T
    return inverse * np.outer(scale, scale), cond


def position_error_bound(covariance):
    """PEB = sqrt(trace(C_xx) / 3)."""
    return float(np.sqrt(np.trace(np.asarray(covariance)[:3, :3]) / 3))


def crb(F, mode="", bound="crb", cond_limit=1e12, mask=None):
    """
    Inverse of the information matrix with the position error bound.

    Args:
        mask: optional boolean per parameter. False entries are known and dropped
            before inversion; the position entries must stay estimated. None
            estimates every parameter.

    Raises:
        UnidentifiableParametersError: when the condition number exceeds cond_limit.
    """
    data = F.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (F.dim,) or not np.all(mask[:3]):
            raise InvalidArgumentError(f"parameter mask must have {F.dim} entries and keep the position")
        data = data[np.ix_(mask, mask)]
    covariance, cond = _invert(data, cond_limit)
    return BoundResult(covariance=covariance, peb_m=position_error_bound(covariance),
                       mode=mode, bound=bound, cond_number=cond)


def position_marginal_bound(F, mode="", bound="crb", cond_limit=1e12, rcond=1e-12):
    """
    Position-block bound (F_xx - F_x,xi F_xi,xi^+ F_xi,x)^-1 with the nuisance block
    pseudo-inverted. Equals the position block of crb() when F is well conditioned.
    """
    nuisance = np.linalg.pinv(F.F_xixi, rcond=rcond, hermitian=True)
    schur = F.F_xx - F.F_xxi @ nuisance @ F.F_xix
    covariance, cond = _invert(0.5 * (schur + schur.T), cond_limit)
    return BoundResult(covariance=covariance, peb_m=position_error_bound(covariance),
                       mode=mode, bound=bound, cond_number=cond)


def crb_unknown_config(scenario, mode="wideband", cond_limit=1e12):
    """
    CRB with the configuration angles as deterministic unknowns at the matched
    configuration. Falls back to the position marginal when they are unidentifiable.
    """
    F = fim(scenario, matched_param(scenario), mode)
    try:
        return crb(F, mode=mode, bound="crb", cond_limit=cond_limit)
    except UnidentifiableParametersError as error:
        logger.info(f"[Bounds] {scenario.scenario_id} {mode}: configuration angles unidentifiable "
                    f"(cond={error.cond_number:.2e}); reporting the position marginal")
        return position_marginal_bound(F, mode=mode, bound="crb", cond_limit=cond_limit)


def hcrb(scenario, prior=None, mode="wideband", mc_samples=None, seed=None, method="monte-carlo",
         cond_limit=1e12, order=9):
    """Hybrid CRB from hybrid_im."""
    J = hybrid_im(scenario, prior, mc_samples, seed, mode, method, order)
    return crb(J, mode=mode, bound="hcrb", cond_limit=cond_limit)


def crb_perfect_config(scenario, mode="wideband", cond_limit=1e12):
    """Bound with the configuration known and matched: inverse of the position block only."""
    F = fim(scenario, matched_param(scenario), mode)
    return crb(F, mode=mode, bound="crb_perfect", cond_limit=cond_limit, mask=POSITION_ONLY)


def effective_bandwidth(f0, bandwidth):
    """sqrt(f0^2 + B^2 / 12) for a flat spectrum around the carrier."""
    if f0 <= 0 or bandwidth < 0:
        raise InvalidArgumentError("effective_bandwidth needs f0 > 0 and B >= 0")
    return float(np.sqrt(f0 ** 2 + bandwidth ** 2 / 12))


def bare_vehicle_benchmark(scenario, rcs_deficit_db=10.0, bias=DEFAULT_BIAS_M, reference_side=0.075,
                           cond_limit=1e12):
    """
    Localization bound for the vehicle without an EMS.

    The car body is modelled as a frequency-flat point scatterer whose RCS is the
    peak RCS of a `reference_side` square panel reduced by `rcs_deficit_db`; scattering
    from the extended body biases the estimate by `bias` (m).

    Returns:
        BoundResult with peb_m (raw bound), rmse_m = sqrt(PEB^2 + |bias|^2 / 3) and bias_m.
    """
    bias = np.asarray(bias, dtype=float)
    if bias.shape != (3,) or not np.all(np.isfinite(bias)):
        raise InvalidArgumentError("bias must be a finite 3-vector")
    pose = scenario.pose
    f0 = scenario.panel.f0
    cross_section = float(peak_rcs(reference_side ** 2, f0)) * 10 ** (-rcs_deficit_db / 10)
    data = _assemble(scenario, pose, lambda f: _point_amplitude(pose, f0, cross_section, np.size(f)),
                     "narrowband", scenario.quad_points, scenario.quad_rel_tol, "bare-vehicle FIM")
    covariance, cond = _invert(data[:3, :3], cond_limit)
    peb = position_error_bound(covariance)
    rmse = float(np.sqrt(peb ** 2 + bias @ bias / 3))
    logger.debug(f"[Bounds] bare vehicle: PEB {peb:.3e} m, RMSE bound {rmse:.3e} m")
    return BoundResult(covariance=covariance, peb_m=peb, mode="narrowband", bound="bare",
                       cond_number=cond, rmse_m=rmse, bias_m=bias)
