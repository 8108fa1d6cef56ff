# emslb_pkg/bounds/quadrature.py
import logging

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.integrate import simpson

from ..errors import AccuracyError, InvalidArgumentError

logger = logging.getLogger(__name__)

MIN_POINTS = 5


def integrate_checked(integrand, f, rel_tol=1e-3, label="integral"):
    """
    Composite trapezoid with one Richardson step (Simpson's rule) of a matrix-valued
    integrand sampled on an odd, uniform grid, checked against the same rule on
    every other sample.

    Args:
        integrand: (Nf, n, n) samples.
        f: (Nf,) grid, Nf odd and >= 5.
        rel_tol: allowed change per entry, relative to sqrt(F_ii F_jj).

    Returns:
        (n, n) integral on the full grid.

    Raises:
        AccuracyError: when halving the step changes an entry by more than rel_tol.
    """
    if f.size < MIN_POINTS or f.size % 2 == 0:
        raise InvalidArgumentError(f"quadrature grid must have an odd number (>= {MIN_POINTS}) of points")
    full = simpson(integrand, x=f, axis=0)
    coarse = simpson(integrand[::2], x=f[::2], axis=0)
    diag = np.abs(np.diag(full))
    scale = np.sqrt(np.outer(diag, diag))
    floor = 1e-14 * max(float(np.max(diag)), np.finfo(float).tiny)
    change = np.abs(full - coarse) / np.maximum(scale, floor)
    worst = float(np.max(change))
    if worst > rel_tol:
        i, j = np.unravel_index(int(np.argmax(change)), change.shape)
        raise AccuracyError(
            f"{label}: quadrature on {f.size} points not converged (entry ({i}, {j}) changed by {worst:.2e})",
            diagnostic={"points": int(f.size), "entry": (int(i), int(j)), "relative_change": worst},
        )
    logger.debug(f"[Bounds] {label}: {f.size}-point quadrature converged (max change {worst:.1e})")
    return full


def gauss_hermite_2d(order):
    """
    Tensor Gauss-Hermite rule for a standard 2D normal.

    Returns:
        nodes (order^2, 2) and weights (order^2,) summing to one.
    """
    nodes, weights = hermegauss(order)
    weights = weights / weights.sum()
    grid_a, grid_b = np.meshgrid(nodes, nodes, indexing="ij")
    weight_grid = np.outer(weights, weights)
    return np.stack([grid_a.ravel(), grid_b.ravel()], axis=-1), weight_grid.ravel()
