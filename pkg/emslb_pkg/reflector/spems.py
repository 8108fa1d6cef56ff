# emslb_pkg/reflector/spems.py
"""
Static passive EMS (SP-EMS) composite reflector: a set of fixed-profile modules,
each steering its reflection towards one direction of a coverage grid.
"""
import logging
import math

import numpy as np

from ..errors import InvalidArgumentError
from ..models import AnglePair, SpemsReflector
from ..utils import angular_distance
from .services import beamwidths, peak_rcs, rcs, squint_loss_db

logger = logging.getLogger(__name__)

# Composite footprint coverage: full azimuth circle, elevation span from the panel normal
DEFAULT_PHI_SPAN = np.pi / 2


def spems_composite_rcs(reflector, f, xi):
    """
    RCS of the composite reflector, taken as the strongest single module response
    (lobes are assumed well separated so that only one module contributes).
    """
    values = np.stack([np.asarray(rcs(reflector.module_template, f, xi, direction), dtype=float)
                       for direction in reflector.module_directions])
    best = np.max(values, axis=0)
    return float(best) if np.ndim(best) == 0 else best


def spems_module_grid(module_beamwidths, phi_span=DEFAULT_PHI_SPAN, phi_start=0.0, theta_span=2 * np.pi):
    """
    Regular grid of module directions covering `theta_span` in azimuth and
    [phi_start, phi_start + phi_span] in elevation, with spacing no larger than the
    respective beamwidth. Directions are cell-centred.

    Args:
        module_beamwidths: (delta_theta, delta_phi) in radians.
    """
    delta_theta, delta_phi = module_beamwidths[0], module_beamwidths[1]
    if not (delta_theta > 0 and delta_phi > 0):
        raise InvalidArgumentError("module beamwidths must be positive")
    # The 1e-9 slack keeps exact divisions (360/10) from rounding up
    k_theta = max(1, math.ceil(theta_span / delta_theta - 1e-9))
    k_phi = max(1, math.ceil(phi_span / delta_phi - 1e-9))
    step_theta = theta_span / k_theta
    step_phi = phi_span / k_phi
    directions = []
    for k in range(k_theta):
        theta = -np.pi + (k + 0.5) * step_theta
        for q in range(k_phi):
            phi = phi_start + (q + 0.5) * step_phi
            directions.append(AnglePair.clipped(theta, phi))
    logger.debug(f"[Reflector] module grid {k_theta} x {k_phi} = {len(directions)} directions")
    return directions


def tile_offsets(n_modules, pitch):
    """Square tiling of module centres (local frame, m), centred on the origin."""
    per_side = math.ceil(math.sqrt(n_modules))
    centre = (per_side - 1) / 2
    offsets = []
    for index in range(n_modules):
        row, col = divmod(index, per_side)
        offsets.append(np.array([(col - centre) * pitch, (row - centre) * pitch, 0.0]))
    return offsets


def design_spems(module, module_beamwidths=None, phi_span=DEFAULT_PHI_SPAN, phi_start=0.0):
    """
    Builds a composite reflector: one module per coverage-grid direction, tiled on a
    square footprint. Without explicit beamwidths, the module's boresight beam is used.
    """
    if module_beamwidths is None:
        widths = beamwidths(module, AnglePair(0.0, 0.0))
        module_beamwidths = (widths.delta_theta, widths.delta_phi)
    directions = spems_module_grid(module_beamwidths, phi_span=phi_span, phi_start=phi_start)
    offsets = tile_offsets(len(directions), max(module.side_x, module.side_y))
    reflector = SpemsReflector(module_template=module, module_directions=tuple(directions),
                               module_offsets=tuple(offsets))
    logger.info(f"[Reflector] SP-EMS design: {reflector.n_modules} modules of "
                f"{module.side_x * 100:.2f} cm, footprint {footprint_side(reflector) * 100:.1f} cm")
    return reflector


def footprint_side(reflector):
    """Side of the square footprint spanned by the module tiling, m."""
    module = reflector.module_template
    per_side = math.ceil(math.sqrt(reflector.n_modules))
    return per_side * max(module.side_x, module.side_y)


def closest_module_pair(reflector):
    """(smallest pairwise direction separation, module boresight half-beamwidth), radians."""
    module = reflector.module_template
    widths = beamwidths(module, AnglePair(0.0, 0.0))
    limit = min(widths.delta_theta, widths.delta_phi)
    directions = reflector.module_directions
    if len(directions) < 2:
        return float("inf"), limit
    thetas = np.array([d.theta for d in directions])
    phis = np.array([d.phi for d in directions])
    separation = angular_distance(thetas[:, None], phis[:, None], thetas[None, :], phis[None, :])
    np.fill_diagonal(separation, np.inf)
    return float(np.min(separation)), limit


def check_spems_design(reflector, bandwidth, min_rcs):
    """
    Runs the module design criteria and gathers alerts.

    Args:
        reflector: SpemsReflector under review.
        bandwidth: signal bandwidth, Hz.
        min_rcs: RCS (m^2) each module must reach to be detectable.

    Returns:
        A list of alert dictionaries.
    """
    alerts = []
    alerts.extend(_check_detectability(reflector, min_rcs))
    alerts.extend(_check_lobe_separation(reflector))
    alerts.extend(_check_in_band_flatness(reflector, bandwidth))
    logger.info(f"[Reflector] SP-EMS design check on {reflector.n_modules} modules resulted in {len(alerts)} alert(s).")
    return alerts


def _check_detectability(reflector, min_rcs):
    """The peak RCS of a single module must exceed the detectability threshold."""
    module = reflector.module_template
    module_peak = float(peak_rcs(module.area, module.f0))
    if module_peak < min_rcs:
        return [{
            "type": "DETECTABILITY",
            "message": f"Module peak RCS {module_peak:.3g} m^2 is below the required {min_rcs:.3g} m^2.",
            "severity": "Critical"
        }]
    return []


def _check_lobe_separation(reflector):
    """Only one module should contribute in any direction."""
    separation, limit = closest_module_pair(reflector)
    if separation < limit:
        return [{
            "type": "LOBE_OVERLAP",
            "message": f"Module directions {np.rad2deg(separation):.2f} deg apart overlap within the "
                       f"{np.rad2deg(limit):.2f} deg half-beamwidth.",
            "severity": "Warning"
        }]
    return []


def _check_in_band_flatness(reflector, bandwidth, max_loss_db=3.0):
    """Squint loss over the band must stay within 3 dB for the most grazing module."""
    worst = max(reflector.module_directions, key=lambda d: d.phi)
    loss = squint_loss_db(reflector.module_template, worst, bandwidth)
    if loss > max_loss_db:
        return [{
            "type": "IN_BAND_LOSS",
            "message": f"Module steered to phi={np.rad2deg(worst.phi):.1f} deg loses {loss:.1f} dB across "
                       f"{bandwidth / 1e9:.2f} GHz.",
            "severity": "Warning"
        }]
    return []
