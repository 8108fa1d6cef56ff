# emslb_pkg/alignment/services.py
import logging
from typing import NamedTuple

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry.services import ems_incidence_angles, incidence_angles_batch, incidence_jacobian
from ..models import AnglePair, Codebook, MobilityBudget, PositionPrior
from ..reflector.services import array_factor, array_factor_grid, beamwidths, peak_rcs
from ..utils import angular_distance, child_rng, chunk_sizes, round_half_away, wrap_angle

logger = logging.getLogger(__name__)

# Mobility presets: speed (m/s), PRI (s)
MOBILITY_PRESETS = {
    "urban": (50 / 3.6, 50e-6),
    "highway": (150 / 3.6, 30e-6),
}


class SweepResult(NamedTuple):
    xi_opt: AnglePair
    rcs_trace: list
    index: int


class RcsStatistics(NamedTuple):
    mean: float
    std: float
    std_error: float
    peak: float
    n_samples: int


class AlignmentReport(NamedTuple):
    pre_rcs: np.ndarray
    post_rcs: np.ndarray
    codebook_sizes: np.ndarray
    peak_rcs: float
    within_3db_fraction: float


# --- Angular uncertainty ---
def angle_error_covariance(pose, prior):
    """
    First-order covariance of the incidence angles induced by the isotropic
    position error: C_xi = sigma^2 J J^T, with J = d(xi)/dx at the pose.

    Raises:
        PoleSingularityError: when the terminal lies on the panel normal.
    """
    if prior.sigma == 0:
        return np.zeros((2, 2))
    jacobian = incidence_jacobian(pose)
    return prior.sigma ** 2 * jacobian @ jacobian.T


def gaussian_angle_kl(pose, prior, n_samples=100000, seed=0):
    """
    KL divergence (nats) from the linearized Gaussian angle model to a Gaussian
    moment-matched to Monte-Carlo samples of the exact angle push-forward.
    """
    rng = child_rng(seed, 0)
    samples = pose.x + prior.sigma * rng.standard_normal((n_samples, 3))
    theta, phi = incidence_angles_batch(samples, pose.psi)
    xi = ems_incidence_angles(pose)
    residuals = np.stack([wrap_angle(theta - xi.theta), phi - xi.phi], axis=-1)
    mc_mean = residuals.mean(axis=0)
    mc_cov = np.cov(residuals, rowvar=False)
    model_cov = angle_error_covariance(pose, prior)
    model_inv = np.linalg.inv(model_cov)
    _, logdet_model = np.linalg.slogdet(model_cov)
    _, logdet_mc = np.linalg.slogdet(mc_cov)
    return float(0.5 * (np.trace(model_inv @ mc_cov) + mc_mean @ model_inv @ mc_mean
                        - 2 + logdet_model - logdet_mc))


# --- Codebook ---
def build_codebook(xi_hat, c_xi, beamwidths, kappa=1.0, strict=False):
    """
    Grid of candidate configurations centred on the estimated angles.

    Args:
        xi_hat: estimated incidence angles.
        c_xi: 2x2 angle error covariance.
        beamwidths: (delta_theta, delta_phi) sampling steps, radians.
        kappa: confidence factor, >= 1.
        strict: use the step delta / (kappa sigma) when kappa sigma >= 1.

    Returns:
        Codebook with (K+1)(Q+1) entries symmetric about xi_hat,
        K = round(2 kappa sigma_theta / delta_theta).
    """
    if kappa < 1:
        raise InvalidArgumentError(f"kappa must be >= 1, got {kappa}")
    delta_theta, delta_phi = beamwidths[0], beamwidths[1]
    if not (delta_theta > 0 and delta_phi > 0):
        raise InvalidArgumentError("codebook beamwidths must be positive")
    sigma_theta, sigma_phi = np.sqrt(np.maximum(np.diag(np.asarray(c_xi, dtype=float)), 0.0))

    k_count = max(0, round_half_away(2 * kappa * sigma_theta / delta_theta))
    q_count = max(0, round_half_away(2 * kappa * sigma_phi / delta_phi))
    step_theta = _codebook_step(delta_theta, kappa * sigma_theta, strict)
    step_phi = _codebook_step(delta_phi, kappa * sigma_phi, strict)

    # offsets -K/2 .. K/2; half-integer when K is odd
    entries = []
    for k in np.arange(k_count + 1) - k_count / 2:
        for q in np.arange(q_count + 1) - q_count / 2:
            entries.append(AnglePair.clipped(wrap_angle(xi_hat.theta + k * step_theta),
                                             xi_hat.phi + q * step_phi))
    codebook = Codebook(entries=entries, k_count=k_count, q_count=q_count, kappa=kappa,
                        center=xi_hat, step_theta=step_theta, step_phi=step_phi)
    logger.debug(f"[Alignment] codebook K={k_count} Q={q_count} ({len(codebook)} entries)")
    return codebook


def _codebook_step(delta, spread, strict):
    if strict and spread >= 1:
        return delta / spread
    return delta


def dump_codebook(codebook):
    """Text records, one 'theta phi' pair per row in radians, 12 significant digits."""
    return "".join(f"{entry.theta:.12g} {entry.phi:.12g}\n" for entry in codebook.entries)


def load_codebook(text):
    """Parses codebook text records into a list of AnglePair."""
    entries = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 2:
            raise InvalidArgumentError(f"codebook line {number}: expected 2 values, got {len(fields)}")
        entries.append(AnglePair(float(fields[0]), float(fields[1])))
    return entries


# --- Sweep ---
def sweep(codebook, panel, true_xi):
    """
    Tests every codebook entry at f0 and keeps the one maximizing the RCS.
    Ties go to the entry closest to the codebook centre, then to the lowest index.

    Returns:
        SweepResult(xi_opt, rcs_trace, index).
    """
    if len(codebook) == 0:
        raise InvalidArgumentError("cannot sweep an empty codebook")
    thetas, phis = codebook.as_arrays()
    gains = array_factor_grid(panel, 0.0, true_xi.theta, true_xi.phi, thetas, phis)
    trace = peak_rcs(panel.area, panel.f0) * gains
    distance = angular_distance(thetas, phis, codebook.center.theta, codebook.center.phi)
    order = np.lexsort((np.arange(len(trace)), distance, -trace))
    best = int(order[0])
    return SweepResult(xi_opt=codebook.entries[best], rcs_trace=trace.tolist(), index=best)


# --- Mobility ---
def training_budget(v, t_pri, d_min, phi_min, beamwidths):
    """
    Largest codebook size that can be swept before the vehicle leaves the beam.

    kq_max = min(delta_theta D / (v T), delta_phi D / (v T cos phi_min))
    """
    delta_theta, delta_phi = beamwidths[0], beamwidths[1]
    if min(v, t_pri, d_min, delta_theta, delta_phi) <= 0 or phi_min < 0:
        raise InvalidArgumentError("training budget inputs must be positive")
    travel = v * t_pri
    azimuth_term = delta_theta * d_min / travel
    elevation_term = delta_phi * d_min / (travel * np.cos(phi_min))
    kq_max = float(min(azimuth_term, elevation_term))
    if kq_max < 1:
        logger.warning(f"[Alignment] training budget {kq_max:.3f} allows less than one codebook entry")
    logger.debug(f"[Alignment] training budget (KxQ)_max={kq_max:.1f} at v={v:.2f} m/s")
    return MobilityBudget(v=v, t_pri=t_pri, d_min=d_min, phi_min=phi_min, kq_max=kq_max)


# --- Monte-Carlo RCS ---
def _sample_positions(prior, n_samples, seed, chunk):
    """Position draws around prior.mean, generated in counter-seeded chunks."""
    blocks = [prior.mean + prior.sigma * child_rng(seed, index).standard_normal((size, 3))
              for index, size in enumerate(chunk_sizes(n_samples, chunk))]
    return np.concatenate(blocks, axis=0)


def average_rcs_under_error(scenario, prior, n_samples=10000, rng_seed=0, chunk=1024):
    """
    Monte-Carlo mean RCS at f0 when the panel is configured from a noisy position.

    Args:
        scenario: Scenario with the true pose and the panel.
        prior: PositionPrior of the coarse estimate (sigma used; mean taken as the true position).
        n_samples: number of position draws.
        rng_seed: master seed; chunk i uses the stream (rng_seed, i).

    Returns:
        RcsStatistics(mean, std, std_error, peak, n_samples).
    """
    if n_samples < 1:
        raise InvalidArgumentError("n_samples must be >= 1")
    panel, pose = scenario.panel, scenario.pose
    peak = float(peak_rcs(panel.area, panel.f0))
    if prior.sigma == 0:
        return RcsStatistics(mean=peak, std=0.0, std_error=0.0, peak=peak, n_samples=n_samples)

    xi = ems_incidence_angles(pose)
    centred = PositionPrior(mean=pose.x, sigma=prior.sigma)
    estimates = _sample_positions(centred, n_samples, rng_seed, chunk)
    theta_hat, phi_hat = incidence_angles_batch(estimates, pose.psi)
    values = peak * array_factor_grid(panel, 0.0, xi.theta, xi.phi, theta_hat, phi_hat)
    std = float(np.std(values, ddof=1)) if n_samples > 1 else 0.0
    stats = RcsStatistics(mean=float(np.mean(values)), std=std, std_error=std / np.sqrt(n_samples),
                          peak=peak, n_samples=n_samples)
    logger.debug(f"[Alignment] mean RCS {stats.mean:.4g} m^2 (peak {peak:.4g}) at sigma={prior.sigma:.3f} m")
    return stats


def simulate_alignment(scenario, prior, n_trials=1000, seed=0, kappa=1.0, strict=False):
    """
    Coarse-position -> codebook -> sweep loop over sampled position estimates.

    For each trial the panel is first configured at the estimated angles (pre-sweep),
    then the codebook built around them is swept against the true incidence angles.
    """
    panel, pose = scenario.panel, scenario.pose
    xi = ems_incidence_angles(pose)
    peak = float(peak_rcs(panel.area, panel.f0))
    estimates = _sample_positions(PositionPrior(mean=pose.x, sigma=prior.sigma), n_trials, seed, 1024)

    pre, post, sizes = np.empty(n_trials), np.empty(n_trials), np.empty(n_trials, dtype=int)
    for trial, estimate in enumerate(estimates):
        estimated_pose = pose.moved_to(estimate)
        xi_hat = ems_incidence_angles(estimated_pose)
        c_xi = angle_error_covariance(estimated_pose, prior)
        widths = beamwidths(panel, xi_hat)
        codebook = build_codebook(xi_hat, c_xi, (widths.delta_theta, widths.delta_phi), kappa, strict)
        result = sweep(codebook, panel, xi)
        pre[trial] = peak * array_factor(panel, 0.0, xi, xi_hat)
        post[trial] = result.rcs_trace[result.index]
        sizes[trial] = len(codebook)

    within = float(np.mean(post >= peak * 10 ** (-0.3)))
    logger.info(f"[Alignment] {n_trials} trials: {within * 100:.1f}% within 3 dB of peak, "
                f"median codebook {int(np.median(sizes))} entries")
    return AlignmentReport(pre_rcs=pre, post_rcs=post, codebook_sizes=sizes, peak_rcs=peak,
                           within_3db_fraction=within)
