# emslb_pkg/reflector/services.py
import logging
from typing import NamedTuple

import numpy as np
from scipy.optimize import bisect, minimize_scalar

from ..errors import InvalidArgumentError
from ..geometry.services import element_indices
from ..models import AnglePair, RisPanel
from ..utils import SPEED_OF_LIGHT, linear_to_db, wavelength

logger = logging.getLogger(__name__)

# |sin(alpha)| below which the sin-ratio is replaced by its limit
SINGULAR_EPS = 1e-9
# N|delta| below which the ratio derivative uses its series expansion
SERIES_EPS = 1e-3
HALF_POWER = 0.5


class Beamwidths(NamedTuple):
    """Half-power half-widths (offset from the beam centre to the -3 dB point), radians."""
    delta_theta: float
    delta_phi: float
    saturated: bool = False


class AmplitudeTerms(NamedTuple):
    """Signed amplitude h (G = h^2) and its gradients in xi and xi_bar (last axis: theta, phi)."""
    h: np.ndarray
    dh_dxi: np.ndarray
    dh_dxi_bar: np.ndarray


# --- Phase profile ---
def phase_profile(panel, xi_bar):
    """
    N x M phase matrix (rad, unwrapped) steering the reflection gain towards xi_bar at f0.
    Row i corresponds to element index n = i - N/2 (so element (0, 0) sits at [N/2, M/2]).
    """
    n = element_indices(panel.n_x)[:, None]
    m = element_indices(panel.n_y)[None, :]
    scale = 4 * np.pi * panel.f0 * panel.d / SPEED_OF_LIGHT
    sin_phi = np.sin(xi_bar.phi)
    return scale * (n * sin_phi * np.cos(xi_bar.theta) + m * sin_phi * np.sin(xi_bar.theta))


# --- Array factor ---
def _squint_arguments(panel, f, theta, phi, theta_bar, phi_bar):
    """alpha_x, alpha_y of the closed-form array factor (broadcast over all inputs)."""
    k = 2 * np.pi * panel.d / SPEED_OF_LIGHT
    carrier = panel.f0
    actual = panel.f0 + np.asarray(f, dtype=float)
    sin_phi, sin_phi_bar = np.sin(phi), np.sin(phi_bar)
    alpha_x = k * (carrier * sin_phi_bar * np.cos(theta_bar) - actual * sin_phi * np.cos(theta))
    alpha_y = k * (carrier * sin_phi_bar * np.sin(theta_bar) - actual * sin_phi * np.sin(theta))
    return alpha_x, alpha_y


def _sin_ratio(alpha, count, derivative=False):
    """
    r(alpha) = sin(count alpha) / (count sin alpha), with removable singularities at
    multiples of pi replaced by their limits. Optionally also returns dr/dalpha.
    """
    alpha = np.asarray(alpha, dtype=float)
    k = np.round(alpha / np.pi)
    delta = alpha - k * np.pi
    # sin(count (delta + k pi)) / sin(delta + k pi) picks up (-1)^(k (count - 1))
    sign = np.where(np.mod(k * (count - 1), 2) == 0, 1.0, -1.0)
    sin_delta = np.sin(delta)
    singular = np.abs(sin_delta) < SINGULAR_EPS
    safe_sin = np.where(singular, 1.0, sin_delta)
    ratio = np.where(singular, 1.0, np.sin(count * delta) / (count * safe_sin))
    if not derivative:
        return sign * ratio

    series = np.abs(count * delta) < SERIES_EPS
    direct = (count * np.cos(count * delta) * safe_sin - np.sin(count * delta) * np.cos(delta)) / (count * safe_sin ** 2)
    d_ratio = np.where(series, -(count ** 2 - 1) * delta / 3.0, direct)
    return sign * ratio, sign * d_ratio


def array_factor_grid(panel, f, theta, phi, theta_bar, phi_bar):
    """Vectorized G(f, xi | xi_bar) over broadcastable arrays of frequencies and angles."""
    alpha_x, alpha_y = _squint_arguments(panel, f, theta, phi, theta_bar, phi_bar)
    gain = (_sin_ratio(alpha_x, panel.n_x) * _sin_ratio(alpha_y, panel.n_y)) ** 2
    return np.clip(gain, 0.0, 1.0)


def array_factor(panel, f, xi, xi_bar):
    """
    Normalized array factor G(f, xi | xi_bar) in [0, 1].

    Args:
        panel: RisPanel.
        f: baseband frequency offset from f0 in Hz (scalar or array).
        xi: incidence angles.
        xi_bar: configuration angles.
    """
    gain = array_factor_grid(panel, f, xi.theta, xi.phi, xi_bar.theta, xi_bar.phi)
    return float(gain) if np.ndim(gain) == 0 else gain


def array_factor_amplitude(panel, f, xi, xi_bar):
    """Signed amplitude h and its analytic gradients with respect to xi and xi_bar."""
    f = np.asarray(f, dtype=float)
    alpha_x, alpha_y = _squint_arguments(panel, f, xi.theta, xi.phi, xi_bar.theta, xi_bar.phi)
    r_x, dr_x = _sin_ratio(alpha_x, panel.n_x, derivative=True)
    r_y, dr_y = _sin_ratio(alpha_y, panel.n_y, derivative=True)

    k = 2 * np.pi * panel.d / SPEED_OF_LIGHT
    actual = k * (panel.f0 + f)
    carrier = k * panel.f0
    st, ct, sp, cp = np.sin(xi.theta), np.cos(xi.theta), np.sin(xi.phi), np.cos(xi.phi)
    stb, ctb, spb, cpb = (np.sin(xi_bar.theta), np.cos(xi_bar.theta),
                          np.sin(xi_bar.phi), np.cos(xi_bar.phi))

    # d(alpha)/d(theta, phi) for the incidence and the configuration angles
    dax_dxi = np.stack(np.broadcast_arrays(actual * sp * st, -actual * cp * ct), axis=-1)
    day_dxi = np.stack(np.broadcast_arrays(-actual * sp * ct, -actual * cp * st), axis=-1)
    dax_dbar = np.array([-carrier * spb * stb, carrier * cpb * ctb])
    day_dbar = np.array([carrier * spb * ctb, carrier * cpb * stb])

    h = r_x * r_y
    coef_x = (dr_x * r_y)[..., None]
    coef_y = (r_x * dr_y)[..., None]
    dh_dxi = coef_x * dax_dxi + coef_y * day_dxi
    dh_dxi_bar = coef_x * dax_dbar + coef_y * day_dbar
    return AmplitudeTerms(h=h, dh_dxi=dh_dxi, dh_dxi_bar=dh_dxi_bar)


def array_factor_bruteforce(panel, f, xi, xi_bar):
    """Array factor from the explicit element double sum; O(NM) reference evaluation."""
    n = element_indices(panel.n_x)[:, None]
    m = element_indices(panel.n_y)[None, :]
    sin_phi = np.sin(xi.phi)
    dtau_nm = (panel.d / SPEED_OF_LIGHT) * (n * sin_phi * np.cos(xi.theta) + m * sin_phi * np.sin(xi.theta))
    phases = -4 * np.pi * (panel.f0 + f) * dtau_nm + phase_profile(panel, xi_bar)
    total = np.sum(np.exp(1j * phases)) / (panel.n_x * panel.n_y)
    return float(np.abs(total) ** 2)


# --- RCS ---
def peak_rcs(area, f):
    """RCS of a metallic plate of the given area at absolute frequency f, m^2."""
    if not (area > 0 and np.all(np.asarray(f) > 0)):
        raise InvalidArgumentError("peak_rcs needs a positive area and frequency")
    return 4 * np.pi * np.asarray(f, dtype=float) ** 2 * area ** 2 / SPEED_OF_LIGHT ** 2


def corner_rcs(f0, a):
    """Peak RCS of a triangular trihedral corner reflector with edge a, m^2."""
    if not a > 0:
        raise InvalidArgumentError("corner reflector edge must be positive")
    return 12 * np.pi * f0 ** 2 * a ** 4 / SPEED_OF_LIGHT ** 2


def size_for_detectability(a_corner, deficit_ratio_db=10.0):
    """
    Panel area (m^2) and square side (m) whose peak RCS is the corner-reflector RCS
    reduced by `deficit_ratio_db`.
    """
    if not a_corner > 0:
        raise InvalidArgumentError("corner reflector edge must be positive")
    ratio = 10 ** (deficit_ratio_db / 10)
    area = a_corner ** 2 * np.sqrt(3.0 / ratio)
    return float(area), float(np.sqrt(area))


def rcs(panel, f, xi, xi_bar):
    """Frequency-dependent RCS: peak plate RCS at f0 + f times the array factor."""
    gain = array_factor(panel, f, xi, xi_bar)
    value = peak_rcs(panel.area, panel.f0 + np.asarray(f, dtype=float)) * gain
    return float(value) if np.ndim(value) == 0 else value


# --- Panel construction ---
def panel_for_side(side_m, f0, d_over_lambda=0.25, xi_bar=None):
    """Square panel with the even element count closest to `side_m` at the given spacing."""
    d = d_over_lambda * wavelength(f0)
    count = max(2, 2 * int(round(side_m / d / 2)))
    panel = RisPanel(n_x=count, n_y=count, d=d, f0=f0)
    return panel if xi_bar is None else panel.configured(xi_bar)


# --- Beam shape ---
def _half_power_offset(gain_at, limit, tol):
    """Offset at which gain_at(offset) crosses 1/2, or None if it stays above up to `limit`."""
    step = 1e-4
    inner = 0.0
    while step < limit:
        if gain_at(step) < HALF_POWER:
            return bisect(lambda t: gain_at(t) - HALF_POWER, inner, step, xtol=tol)
        inner = step
        step *= 1.5
    if gain_at(limit) < HALF_POWER:
        return bisect(lambda t: gain_at(t) - HALF_POWER, inner, limit, xtol=tol)
    return None


def beamwidths(panel, xi, tol=1e-4):
    """
    Half-power half-widths of G(0, . | xi) along azimuth and elevation.

    At the pole both widths are measured as polar-angle offsets in the two
    principal planes (theta = 0 and theta = pi/2). When the beam does not drop
    to half power within the hemisphere the remaining angular room is returned
    with `saturated` set.
    """
    if not xi.phi < np.pi / 2:
        raise InvalidArgumentError("beamwidths needs an incidence angle above the panel plane")
    saturated = False

    def gain(theta, phi):
        return array_factor_grid(panel, 0.0, theta, phi, xi.theta, xi.phi)

    if xi.phi <= 1e-12:
        phi_limit = np.pi / 2
        d_phi = _half_power_offset(lambda t: gain(0.0, t), phi_limit, tol)
        d_theta = _half_power_offset(lambda t: gain(np.pi / 2, t), phi_limit, tol)
    else:
        phi_limit = np.pi / 2 - xi.phi
        d_phi = _half_power_offset(lambda t: gain(xi.theta, xi.phi + t), phi_limit, tol)
        d_theta = _half_power_offset(lambda t: gain(xi.theta + t, xi.phi), np.pi, tol)
        if d_theta is None:
            d_theta = np.pi
            saturated = True
    if d_phi is None:
        d_phi = phi_limit
        saturated = True
    if d_theta is None:
        d_theta = phi_limit
        saturated = True
    if saturated:
        logger.info(f"[Reflector] beam of {panel.n_x}x{panel.n_y} panel saturates the hemisphere at phi={xi.phi:.4f}")
    return Beamwidths(float(d_theta), float(d_phi), saturated)


def squint_loss_db(panel, xi, bandwidth, floor_db=60.0, grid_points=401):
    """
    Worst in-band loss (dB, positive) of the matched array factor G(f, xi | xi) over
    |f| <= bandwidth / 2, floored at `floor_db`.
    """
    f_grid = np.linspace(-bandwidth / 2, bandwidth / 2, grid_points)
    gains = array_factor(panel, f_grid, xi, xi)
    worst = int(np.argmin(gains))
    lo = f_grid[max(worst - 1, 0)]
    hi = f_grid[min(worst + 1, grid_points - 1)]
    refined = minimize_scalar(lambda f: array_factor(panel, f, xi, xi), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-6 * bandwidth})
    minimum = min(float(gains[worst]), float(refined.fun))
    return float(min(-linear_to_db(minimum), floor_db))
