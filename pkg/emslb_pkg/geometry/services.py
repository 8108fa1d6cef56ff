# emslb_pkg/geometry/services.py
import logging
import warnings

import numpy as np

from ..errors import (DegenerateDirectionError, DegenerateGeometryError,
                      InvalidArgumentError, PoleSingularityError)
from ..models import AnglePair, DelayDecomposition, Pose
from ..utils import SPEED_OF_LIGHT

logger = logging.getLogger(__name__)

# Relative threshold under which a direction is treated as lying on the z axis
POLE_EPS = 1e-12


class FarFieldWarning(UserWarning):
    """Aperture is not small compared with the range; linearized delays lose accuracy."""


# --- Rotations and angle transforms ---
def rotation_z(psi):
    """Counterclockwise rotation by `psi` radians about the global z axis."""
    if not np.isfinite(psi):
        raise InvalidArgumentError(f"rotation angle must be finite, got {psi}")
    c, s = np.cos(psi), np.sin(psi)
    return np.array([[c, -s, 0.0],
                     [s, c, 0.0],
                     [0.0, 0.0, 1.0]])


def cart_to_angles(v):
    """
    Cartesian direction to (azimuth, polar) angles.

    On the z axis the azimuth is undefined; it is returned as 0.

    Raises:
        DegenerateDirectionError: for the zero vector.
    """
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if not r > 0:
        raise DegenerateDirectionError("cannot take the direction of a zero vector")
    rho = np.hypot(v[0], v[1])
    theta = 0.0 if rho <= POLE_EPS * r else float(np.arctan2(v[1], v[0]))
    phi = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
    return AnglePair(theta, phi)


def cart_to_angles_batch(v):
    """Vectorized cart_to_angles for an (n, 3) array; returns (theta, phi) arrays."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    if np.any(r <= 0):
        raise DegenerateDirectionError("cannot take the direction of a zero vector")
    rho = np.hypot(v[..., 0], v[..., 1])
    theta = np.where(rho <= POLE_EPS * r, 0.0, np.arctan2(v[..., 1], v[..., 0]))
    # atan2 returns -pi on the negative x axis with y = -0.0
    theta = np.where(theta <= -np.pi, np.pi, theta)
    phi = np.arccos(np.clip(v[..., 2] / r, -1.0, 1.0))
    return theta, phi


def unit_vector(xi):
    """Unit vector (sin phi cos theta, sin phi sin theta, cos phi)."""
    sin_phi = np.sin(xi.phi)
    return np.array([sin_phi * np.cos(xi.theta), sin_phi * np.sin(xi.theta), np.cos(xi.phi)])


def angles_jacobian(v):
    """
    2x3 Jacobian of (theta, phi) with respect to the Cartesian vector v.

    Raises:
        PoleSingularityError: when v lies on the z axis (azimuth derivative undefined).
    """
    v = np.asarray(v, dtype=float)
    r2 = float(v @ v)
    if not r2 > 0:
        raise DegenerateDirectionError("cannot differentiate the direction of a zero vector")
    rho2 = v[0] ** 2 + v[1] ** 2
    if rho2 <= (POLE_EPS ** 2) * r2:
        raise PoleSingularityError("direction lies on the polar axis; azimuth Jacobian undefined")
    rho = np.sqrt(rho2)
    d_theta = np.array([-v[1], v[0], 0.0]) / rho2
    d_phi = (v[2] * v / r2 - np.array([0.0, 0.0, 1.0])) / rho
    return np.vstack([d_theta, d_phi])


# --- Panel angles ---
def ems_incidence_angles(pose, terminal_phase_center_at_origin=True, phase_center=None):
    """
    Incidence angles at the EMS, xi = J(-Q_z(psi) x).

    Args:
        pose: panel pose.
        terminal_phase_center_at_origin: when False, `phase_center` (global m)
            is subtracted from the panel position first.
        phase_center: terminal phase centre, used only with the flag cleared.
    """
    x = pose.x
    if not terminal_phase_center_at_origin:
        if phase_center is None:
            raise InvalidArgumentError("phase_center is required when the terminal is not at the origin")
        x = x - np.asarray(phase_center, dtype=float)
    if not np.linalg.norm(x) > 0:
        raise DegenerateDirectionError("panel coincides with the terminal phase centre")
    return cart_to_angles(-rotation_z(pose.psi) @ x)


def incidence_angles_batch(positions, psi):
    """Incidence angles for an (n, 3) array of candidate panel positions."""
    return cart_to_angles_batch(-(np.asarray(positions, dtype=float) @ rotation_z(psi).T))


def terminal_angles(pose):
    """Pointing angles of the panel seen from the terminal, zeta = J(x)."""
    return cart_to_angles(pose.x)


def incidence_jacobian(pose):
    """2x3 Jacobian d(xi)/dx of the incidence angles with respect to the panel position."""
    q = rotation_z(pose.psi)
    return angles_jacobian(-q @ pose.x) @ (-q)


# --- Element positions ---
def element_indices(count):
    """Element indices -count/2 ... count/2 - 1 for an even element count."""
    if count % 2:
        raise InvalidArgumentError(f"element count must be even, got {count}")
    return np.arange(-count // 2, count // 2)


def element_position(pose, n, m, d):
    """Global position x + Q_z(psi) [n d, m d, 0] of element (n, m)."""
    return pose.x + rotation_z(pose.psi) @ np.array([n * d, m * d, 0.0])


def element_grid(pose, n_x, n_y, d):
    """(N, M, 3) array of all element positions, indexed from -N/2 and -M/2."""
    n = element_indices(n_x)[:, None]
    m = element_indices(n_y)[None, :]
    local = np.stack(np.broadcast_arrays(n * d, m * d, np.zeros_like(n * d, dtype=float)), axis=-1)
    return pose.x + local @ rotation_z(pose.psi).T


# --- Delays ---
def exact_delays(tx, rx, x_nm):
    """Absolute delays (tau_i, tau_o) in seconds from Tx to the element and back to Rx."""
    tx, rx, x_nm = (np.asarray(p, dtype=float) for p in (tx, rx, x_nm))
    d_in = np.linalg.norm(x_nm - tx)
    d_out = np.linalg.norm(rx - x_nm)
    if d_in == 0 or d_out == 0:
        raise DegenerateGeometryError("element coincides with a terminal antenna")
    return d_in / SPEED_OF_LIGHT, d_out / SPEED_OF_LIGHT


def far_field_ratio(scenario):
    """Largest aperture (panel or terminal) over the range."""
    aperture = max(scenario.panel.aperture, scenario.terminal.aperture)
    return aperture / scenario.pose.range_m


def check_far_field(scenario, limit=0.05):
    ratio = far_field_ratio(scenario)
    if ratio > limit:
        message = f"[Geometry] aperture/range = {ratio:.3f} exceeds {limit}; far-field delays are approximate"
        logger.warning(message)
        warnings.warn(message, FarFieldWarning, stacklevel=3)
    return ratio


def linearized_delays(scenario, far_field_limit=0.05):
    """
    Far-field delay decomposition for every channel and element.

    Args:
        scenario: the Scenario (terminal antennas, panel, pose).
        far_field_limit: aperture/range ratio above which a FarFieldWarning is issued.

    Returns:
        DelayDecomposition with tau0 = |x|/c, dtau_i = s.u(zeta)/c,
        dtau_o = r.u(zeta)/c and dtau_nm = p_nm.u(xi)/c.
    """
    pose, panel, terminal = scenario.pose, scenario.panel, scenario.terminal
    distance = pose.range_m
    if not distance > 0:
        raise DegenerateGeometryError("panel position coincides with the terminal")
    check_far_field(scenario, far_field_limit)

    u_zeta = unit_vector(terminal_angles(pose))
    xi = ems_incidence_angles(pose)
    tx, rx = channel_pairs(terminal)

    n = element_indices(panel.n_x)[:, None]
    m = element_indices(panel.n_y)[None, :]
    sin_phi = np.sin(xi.phi)
    dtau_nm = (panel.d / SPEED_OF_LIGHT) * (n * sin_phi * np.cos(xi.theta) + m * sin_phi * np.sin(xi.theta))

    return DelayDecomposition(
        tau0=distance / SPEED_OF_LIGHT,
        dtau_i=tx @ u_zeta / SPEED_OF_LIGHT,
        dtau_o=rx @ u_zeta / SPEED_OF_LIGHT,
        dtau_nm=dtau_nm,
    )


def linearized_round_trip(decomposition):
    """
    (L, N, M) round-trip delays 2 tau0 - dtau_i - dtau_o - 2 dtau_nm.

    Second-order accurate against exact_delays for headings 0 and pi, where
    the local and global element offsets project identically on the line of sight.
    """
    channel = decomposition.dtau_i + decomposition.dtau_o
    return (2 * decomposition.tau0 - channel[:, None, None]
            - 2 * decomposition.dtau_nm[None, :, :])


def exact_round_trip(scenario):
    """(L, N, M) exact round-trip delays over all channels and elements."""
    tx, rx = channel_pairs(scenario.terminal)
    grid = element_grid(scenario.pose, scenario.panel.n_x, scenario.panel.n_y, scenario.panel.d)
    d_in = np.linalg.norm(grid[None, :, :, :] - tx[:, None, None, :], axis=-1)
    d_out = np.linalg.norm(grid[None, :, :, :] - rx[:, None, None, :], axis=-1)
    if np.any(d_in == 0) or np.any(d_out == 0):
        raise DegenerateGeometryError("element coincides with a terminal antenna")
    return (d_in + d_out) / SPEED_OF_LIGHT


def channel_pairs(terminal):
    """(L, 3) Tx and Rx positions per channel, ordered l = t * R + r."""
    n_rx = terminal.rx_positions.shape[0]
    n_tx = terminal.tx_positions.shape[0]
    tx = np.repeat(terminal.tx_positions, n_rx, axis=0)
    rx = np.tile(terminal.rx_positions, (n_tx, 1))
    return tx, rx
