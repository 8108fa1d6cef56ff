# emslb_pkg/utils.py
import hashlib
import json
import math

import numpy as np

# Exact SI value, m/s
SPEED_OF_LIGHT = 299792458.0


# --- Unit conversions ---
def dbm_to_watt(dbm):
    """Converts a power (or PSD) in dBm (dBm/Hz) to W (W/Hz)."""
    return 10 ** (np.asarray(dbm, dtype=float) / 10 - 3)


def db_to_linear(db):
    return 10 ** (np.asarray(db, dtype=float) / 10)


def linear_to_db(value, floor=1e-300):
    """Power ratio to dB; values at or below `floor` are clamped to it."""
    return 10 * np.log10(np.maximum(value, floor))


def wavelength(frequency_hz):
    return SPEED_OF_LIGHT / frequency_hz


# --- Angles and rounding ---
def wrap_angle(angle):
    """
    Normalizes an angle (scalar or array) to the half-open interval (-pi, pi].
    """
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def round_half_away(value):
    """Rounds to the nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def angular_distance(theta_a, phi_a, theta_b, phi_b):
    """Great-circle angle between two (azimuth, polar) directions, radians."""
    cos_sep = (np.sin(phi_a) * np.sin(phi_b) * np.cos(theta_a - theta_b)
               + np.cos(phi_a) * np.cos(phi_b))
    return np.arccos(np.clip(cos_sep, -1.0, 1.0))


# --- Reproducibility helpers ---
def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(data):
    """sha256 hex digest of the canonical JSON form of a config mapping."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def child_rng(seed, index):
    """
    Counter-based generator for chunk `index` of a run seeded with `seed`.
    The stream depends only on (seed, index), never on worker scheduling.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def chunk_sizes(total, chunk):
    """Splits `total` samples into consecutive chunks of at most `chunk`."""
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes
