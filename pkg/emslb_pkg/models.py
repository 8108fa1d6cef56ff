# emslb_pkg/models.py
"""
Domain types shared across the geometry, reflector, alignment, channel and
bounds services. All types are immutable value objects; array fields are
copied to read-only float arrays on construction.
"""
import dataclasses
import math
import numbers
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArgumentError
from .utils import SPEED_OF_LIGHT, wrap_angle


def _frozen_array(values, shape=None, name="array"):
    array = np.array(values, dtype=float)
    if shape is not None and array.shape != shape:
        raise InvalidArgumentError(f"{name} must have shape {shape}, got {array.shape}")
    if not np.all(np.isfinite(array)):
        raise InvalidArgumentError(f"{name} must be finite")
    array.setflags(write=False)
    return array


# --- Geometry ---
@dataclass(frozen=True)
class Pose:
    """Panel position x (global frame, m) and heading psi (rad) about global z."""
    x: np.ndarray
    psi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x, (3,), "Pose.x"))
        if not np.isfinite(self.psi):
            raise InvalidArgumentError("Pose.psi must be finite")
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    @property
    def range_m(self):
        return float(np.linalg.norm(self.x))

    def moved_to(self, x):
        return Pose(x=x, psi=self.psi)


@dataclass(frozen=True)
class AnglePair:
    """Azimuth theta in (-pi, pi] and polar angle phi in [0, pi], radians."""
    theta: float
    phi: float

    def __post_init__(self):
        if not (np.isfinite(self.theta) and np.isfinite(self.phi)):
            raise InvalidArgumentError("AnglePair components must be finite")
        if not (0.0 <= self.phi <= np.pi):
            raise InvalidArgumentError(f"AnglePair.phi={self.phi} outside [0, pi]")
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        object.__setattr__(self, "phi", float(self.phi))

    @classmethod
    def clipped(cls, theta, phi):
        """Builds a pair, wrapping theta and clipping phi into range."""
        return cls(theta=float(theta), phi=float(np.clip(phi, 0.0, np.pi)))

    @classmethod
    def from_degrees(cls, theta_deg, phi_deg):
        return cls(np.deg2rad(theta_deg), np.deg2rad(phi_deg))

    def as_array(self):
        return np.array([self.theta, self.phi])


BORESIGHT = AnglePair(0.0, 0.0)


@dataclass(frozen=True)
class DelayDecomposition:
    """Linearized delays: tau0 (s), per-channel Tx/Rx excess (L,), per-element excess (N, M)."""
    tau0: float
    dtau_i: np.ndarray
    dtau_o: np.ndarray
    dtau_nm: np.ndarray

    def __post_init__(self):
        if not (np.isfinite(self.tau0) and self.tau0 > 0):
            raise InvalidArgumentError("tau0 must be positive and finite")
        for name in ("dtau_i", "dtau_o", "dtau_nm"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name), name=name))


# --- Reflector ---
@dataclass(frozen=True)
class RisPanel:
    n_x: int
    n_y: int
    d: float
    f0: float
    config_angles: AnglePair = BORESIGHT

    def __post_init__(self):
        for name in ("n_x", "n_y"):
            count = getattr(self, name)
            if int(count) != count or count < 2 or count % 2:
                raise InvalidArgumentError(f"RisPanel.{name} must be an even integer >= 2, got {count}")
            object.__setattr__(self, name, int(count))
        if not self.d > 0:
            raise InvalidArgumentError("RisPanel.d must be positive")
        if not self.f0 > 0:
            raise InvalidArgumentError("RisPanel.f0 must be positive")

    @property
    def area(self):
        return self.n_x * self.n_y * self.d ** 2

    @property
    def side_x(self):
        return self.n_x * self.d

    @property
    def side_y(self):
        return self.n_y * self.d

    @property
    def aperture(self):
        """Aperture diagonal, m."""
        return float(np.hypot(self.side_x, self.side_y))

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.f0

    def configured(self, xi_bar):
        return dataclasses.replace(self, config_angles=xi_bar)


class LobeSeparationWarning(UserWarning):
    """Two SP-EMS module directions are closer than the module beamwidth."""


@dataclass(frozen=True)
class SpemsReflector:
    module_template: RisPanel
    module_directions: tuple
    module_offsets: tuple = ()

    def __post_init__(self):
        directions = tuple(self.module_directions)
        if not directions:
            raise InvalidArgumentError("SpemsReflector needs at least one module")
        offsets = tuple(_frozen_array(o, (3,), "module offset") for o in self.module_offsets)
        if offsets and len(offsets) != len(directions):
            raise InvalidArgumentError("module_offsets and module_directions differ in length")
        object.__setattr__(self, "module_directions", directions)
        object.__setattr__(self, "module_offsets", offsets)

        from .reflector.spems import closest_module_pair
        separation, limit = closest_module_pair(self)
        if separation < limit:
            message = (f"[Reflector] module directions separated by {np.rad2deg(separation):.3f} deg, "
                       f"below the module half-beamwidth {np.rad2deg(limit):.3f} deg")
            warnings.warn(message, LobeSeparationWarning, stacklevel=2)

    @property
    def n_modules(self):
        return len(self.module_directions)


# --- Alignment ---
@dataclass(frozen=True)
class PositionPrior:
    """Coarse position estimate: mean (m) and isotropic std sigma (m)."""
    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen_array(self.mean, (3,), "PositionPrior.mean"))
        if not (np.isfinite(self.sigma) and self.sigma >= 0):
            raise InvalidArgumentError("PositionPrior.sigma must be >= 0")

    @property
    def covariance(self):
        return self.sigma ** 2 * np.eye(3)


@dataclass(frozen=True)
class Codebook:
    entries: tuple
    k_count: int
    q_count: int
    kappa: float
    center: AnglePair
    step_theta: float = 0.0
    step_phi: float = 0.0

    def __post_init__(self):
        if self.k_count < 0 or self.q_count < 0:
            raise InvalidArgumentError("Codebook counts must be >= 0")
        object.__setattr__(self, "entries", tuple(self.entries))
        if len(self.entries) != (self.k_count + 1) * (self.q_count + 1):
            raise InvalidArgumentError("Codebook size does not match (K+1)(Q+1)")

    def __len__(self):
        return len(self.entries)

    def as_arrays(self):
        thetas = np.array([e.theta for e in self.entries])
        phis = np.array([e.phi for e in self.entries])
        return thetas, phis


@dataclass(frozen=True)
class MobilityBudget:
    v: float
    t_pri: float
    d_min: float
    phi_min: float
    kq_max: float

    @property
    def t_train_max(self):
        """Upper bound on the training time, s."""
        return self.t_pri * self.kq_max


# --- Channel ---
@dataclass(frozen=True)
class SensingTerminal:
    tx_positions: np.ndarray
    rx_positions: np.ndarray
    tx_power_dbm: float
    noise_psd_dbm_hz: float
    f0: float
    bandwidth: float

    def __post_init__(self):
        for name in ("tx_positions", "rx_positions"):
            positions = np.atleast_2d(np.array(getattr(self, name), dtype=float))
            if positions.ndim != 2 or positions.shape[1] != 3 or positions.shape[0] < 1:
                raise InvalidArgumentError(f"SensingTerminal.{name} must be a non-empty list of 3-vectors")
            object.__setattr__(self, name, _frozen_array(positions, name=name))
        if not self.bandwidth > 0:
            raise InvalidArgumentError("bandwidth must be positive")
        if not self.f0 > self.bandwidth / 2:
            raise InvalidArgumentError("f0 must exceed half the bandwidth")

    @property
    def n_channels(self):
        return self.tx_positions.shape[0] * self.rx_positions.shape[0]

    @property
    def aperture(self):
        points = np.vstack([self.tx_positions, self.rx_positions])
        return float(np.max(np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)))

    def with_bandwidth(self, bandwidth):
        return dataclasses.replace(self, bandwidth=bandwidth)


@dataclass(frozen=True)
class Waveform:
    """Flat-magnitude baseband spectrum on [-B/2, B/2] carrying `energy` joules."""
    bandwidth: float
    energy: float
    spectrum_model: str = "flat"

    def __post_init__(self):
        if self.spectrum_model != "flat":
            raise InvalidArgumentError(f"unsupported spectrum model '{self.spectrum_model}'")
        if not (self.bandwidth > 0 and self.energy > 0):
            raise InvalidArgumentError("Waveform bandwidth and energy must be positive")


@dataclass(frozen=True)
class ScatterState:
    """Residual phase gamma; the amplitude follows from the radar equation."""
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "gamma", wrap_angle(self.gamma))


@dataclass(frozen=True)
class Scenario:
    terminal: SensingTerminal
    panel: RisPanel
    pose: Pose
    waveform: Waveform
    prior: Optional[PositionPrior] = None
    scatter: ScatterState = field(default_factory=ScatterState)
    quad_points: int = 1025
    quad_rel_tol: float = 1e-3
    mc_samples: int = 512
    rcs_mc_samples: int = 10000
    seed: int = 0
    scenario_id: str = "scenario"

    def __post_init__(self):
        if self.quad_points < 5 or self.quad_points % 2 == 0:
            raise InvalidArgumentError("quad_points must be odd and >= 5")
        if not self.quad_rel_tol > 0:
            raise InvalidArgumentError("quad_rel_tol must be positive")

    @property
    def sigma(self):
        return 0.0 if self.prior is None else self.prior.sigma

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


# --- Bounds ---
@dataclass(frozen=True)
class ParamVector:
    """Estimation parameters [x; xi_bar]: position (m) and configuration angles (rad)."""
    x: np.ndarray
    xi_bar: AnglePair

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen_array(self.x, (3,), "ParamVector.x"))

    def as_array(self):
        return np.concatenate([self.x, self.xi_bar.as_array()])

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=float)
        return cls(x=values[:3], xi_bar=AnglePair.clipped(values[3], values[4]))


PARAM_DIM = 5


@dataclass(frozen=True)
class InfoMatrix:
    """Symmetric PSD information matrix over [x; xi_bar] (5x5) or x alone (3x3)."""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[0] != data.shape[1] or data.shape[0] not in (3, PARAM_DIM):
            raise InvalidArgumentError(f"InfoMatrix must be 3x3 or 5x5, got {data.shape}")
        scale = max(np.max(np.abs(data)), np.finfo(float).tiny)
        if np.max(np.abs(data - data.T)) > 1e-9 * scale:
            raise InvalidArgumentError("InfoMatrix is not symmetric")
        data = 0.5 * (data + data.T)
        eigenvalues = np.linalg.eigvalsh(_diag_scaled(data))
        if eigenvalues.size and eigenvalues[0] < -1e-9 * max(np.sum(np.abs(eigenvalues)), 1.0):
            raise InvalidArgumentError("InfoMatrix is not positive semidefinite")
        object.__setattr__(self, "data", _frozen_array(data, name="InfoMatrix.data"))

    @property
    def dim(self):
        return self.data.shape[0]

    @property
    def F_xx(self):
        return self.data[:3, :3]

    @property
    def F_xxi(self):
        return self.data[:3, 3:]

    @property
    def F_xix(self):
        return self.data[3:, :3]

    @property
    def F_xixi(self):
        return self.data[3:, 3:]

    def __add__(self, other):
        return InfoMatrix(self.data + other.data)

    def scaled(self, factor):
        return InfoMatrix(self.data * factor)


def _diag_scaled(matrix):
    """D^-1/2 M D^-1/2 with zero diagonal entries left unscaled."""
    diag = np.diag(matrix).copy()
    diag[diag <= 0] = 1.0
    scale = 1.0 / np.sqrt(diag)
    return matrix * scale[:, None] * scale[None, :]


@dataclass(frozen=True)
class BoundResult:
    covariance: np.ndarray
    peb_m: float
    mode: str
    bound: str
    cond_number: float = float("nan")
    rmse_m: Optional[float] = None
    bias_m: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "covariance", _frozen_array(self.covariance, name="covariance"))
        if not self.peb_m >= 0:
            raise InvalidArgumentError("peb_m must be non-negative")


# --- Result tables ---
@dataclass
class ResultTable:
    """Rectangular table with (name, unit) columns and a provenance mapping."""
    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def add_row(self, *values):
        if len(values) != len(self.columns):
            raise InvalidArgumentError(f"row has {len(values)} values, table has {len(self.columns)} columns")
        bad = [name for (name, _), value in zip(self.columns, values)
               if isinstance(value, numbers.Real) and not math.isfinite(value)]
        if bad:
            raise InvalidArgumentError(f"non-finite value in column(s) {', '.join(bad)}")
        self.rows.append(tuple(values))

    @property
    def column_names(self):
        return [name for name, _ in self.columns]

    @property
    def units(self):
        return [unit for _, unit in self.columns]

    def column(self, name):
        index = self.column_names.index(name)
        return [row[index] for row in self.rows]
