# emslb_pkg/cli/scenario.py
"""
Versioned JSON scenario configuration: loading, preset resolution, command-line
overrides, validation and conversion into a Scenario.
"""
import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..alignment.services import MOBILITY_PRESETS
from ..channel.services import TERMINAL_PRESETS, make_waveform, terminal_preset
from ..errors import ConfigValidationError, UnknownExperimentError
from ..models import Pose, PositionPrior, RisPanel, Scenario, SensingTerminal
from ..utils import config_hash, wavelength

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SECTIONS = ("terminal", "panel", "pose", "prior", "waveform", "integration", "experiment")
EXPECTATION_METHODS = ("monte-carlo", "gauss-hermite")


@dataclass
class ScenarioConfig:
    version: int = SCHEMA_VERSION
    scenario_id: str = "scenario"
    terminal: dict = field(default_factory=dict)
    panel: dict = field(default_factory=dict)
    pose: dict = field(default_factory=dict)
    prior: dict = field(default_factory=dict)
    waveform: dict = field(default_factory=dict)
    integration: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"version", "scenario_id", *SECTIONS}
        if unknown:
            raise ConfigValidationError([f"unknown top-level key '{key}'" for key in sorted(unknown)])
        return cls(**copy.deepcopy(data))

    @property
    def experiment_type(self):
        return self.experiment.get("type")

    @property
    def seed(self):
        return self.experiment.get("seed")

    def digest(self):
        return config_hash(self.to_dict())


# --- Package data ---
def _read_data(name):
    return json.loads(resources.files("emslb_pkg").joinpath("data", name).read_text(encoding="utf-8"))


def load_defaults():
    return _read_data("defaults.json")


def load_presets():
    return _read_data("presets.json")


def deep_merge(base, override):
    """Recursive dict merge; override wins, lists are replaced whole."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


# --- Loading ---
def resolve_config(raw):
    """
    Fills a partial config mapping from the checked-in defaults. The experiment
    section starts from the defaults of its own experiment type.
    """
    defaults = load_defaults()
    base = copy.deepcopy(defaults["config"])
    experiment = raw.get("experiment", {}) if isinstance(raw.get("experiment", {}), dict) else {}
    experiment_type = experiment.get("type", base["experiment"]["type"])
    base["experiment"] = deep_merge({"type": experiment_type}, defaults["experiments"].get(experiment_type, {}))
    merged = deep_merge(base, raw)
    if merged.get("version") != SCHEMA_VERSION:
        raise ConfigValidationError(f"unsupported config version {merged.get('version')!r} (expected {SCHEMA_VERSION})")
    return ScenarioConfig.from_dict(merged)


def parse_config(text):
    """Parses JSON text into a resolved ScenarioConfig."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as error:
        raise ConfigValidationError(f"config is not valid JSON: {error}") from error
    if not isinstance(raw, dict):
        raise ConfigValidationError("config must be a JSON object")
    return resolve_config(raw)


def load_config(source):
    """Loads a config from a file path, or from a preset name when no such file exists."""
    path = Path(source)
    if path.is_file():
        logger.debug(f"[CLI] loading config file {path}")
        return parse_config(path.read_text(encoding="utf-8"))
    presets = load_presets()
    if source in presets:
        logger.debug(f"[CLI] using preset '{source}'")
        return resolve_config(presets[source]["overrides"])
    raise ConfigValidationError(f"'{source}' is neither a config file nor a preset "
                                f"(presets: {', '.join(sorted(presets))})")


# --- Overrides ---
def apply_overrides(config, overrides):
    """
    Applies dotted `key=value` assignments; values are parsed as JSON when possible
    (so `panel.n=80` is an integer and `pose.x_m=[1,2,3]` a list), otherwise kept as strings.
    """
    data = config.to_dict()
    for item in overrides or ():
        if "=" not in item:
            raise ConfigValidationError(f"override '{item}' is not of the form key=value")
        key, raw_value = item.split("=", 1)
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value
        path = key.strip().split(".")
        node = data
        for part in path[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[path[-1]] = value
    return ScenarioConfig.from_dict(data)


def with_seed(config, seed):
    data = config.to_dict()
    data["experiment"]["seed"] = int(seed)
    return ScenarioConfig.from_dict(data)


# --- Sweeps ---
def sweep_values(experiment):
    """Sweep points from either an explicit value list or a start/stop/num range."""
    sweep = experiment.get("sweep") or {}
    if "values" in sweep:
        return list(sweep["values"])
    if {"start", "stop", "num"} <= set(sweep):
        return np.linspace(float(sweep["start"]), float(sweep["stop"]), int(sweep["num"])).tolist()
    return []


# --- Validation ---
def validate_config(config, known_experiments=()):
    """
    Collects every problem in the config instead of stopping at the first.

    Returns:
        A list of problem strings (empty when the config is valid).
    """
    problems = []
    problems.extend(_check_terminal(config.terminal))
    problems.extend(_check_panel(config.panel))
    problems.extend(_check_pose(config.pose))
    problems.extend(_check_positive(config.prior, "prior", ("sigma_m",), allow_zero=True))
    problems.extend(_check_waveform(config.waveform, config.panel))
    problems.extend(_check_integration(config.integration))
    problems.extend(_check_experiment(config.experiment, known_experiments))
    return problems


def ensure_valid(config, known_experiments=()):
    problems = validate_config(config, known_experiments)
    if problems:
        if known_experiments and config.experiment_type not in known_experiments:
            raise UnknownExperimentError(problems)
        raise ConfigValidationError(problems)
    return config


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def _check_positive(section, name, keys, allow_zero=False):
    problems = []
    for key in keys:
        value = section.get(key)
        if not _is_number(value):
            problems.append(f"{name}.{key} must be a finite number, got {value!r}")
        elif value < 0 or (value == 0 and not allow_zero):
            problems.append(f"{name}.{key} must be {'non-negative' if allow_zero else 'positive'}, got {value}")
    return problems


def _check_terminal(terminal):
    if "preset" in terminal:
        if terminal["preset"] not in TERMINAL_PRESETS:
            return [f"terminal.preset '{terminal['preset']}' is unknown (known: {', '.join(TERMINAL_PRESETS)})"]
        return []
    problems = []
    for key in ("tx_positions", "rx_positions"):
        positions = terminal.get(key)
        if not (isinstance(positions, list) and positions
                and all(isinstance(p, list) and len(p) == 3 and all(_is_number(c) for c in p) for p in positions)):
            problems.append(f"terminal.{key} must be a non-empty list of 3-vectors")
    return problems


def _check_panel(panel):
    problems = _check_positive(panel, "panel", ("d_over_lambda", "f0_hz"))
    for key in ("n", "m"):
        value = panel.get(key)
        if not (isinstance(value, int) and not isinstance(value, bool) and value >= 2 and value % 2 == 0):
            problems.append(f"panel.{key} must be an even integer >= 2, got {value!r}")
    return problems


def _check_pose(pose):
    problems = []
    x = pose.get("x_m")
    if not (isinstance(x, list) and len(x) == 3 and all(_is_number(c) for c in x)):
        problems.append(f"pose.x_m must be a 3-vector, got {x!r}")
    elif not any(x):
        problems.append("pose.x_m must not coincide with the terminal")
    if not _is_number(pose.get("psi_rad")):
        problems.append(f"pose.psi_rad must be a finite number, got {pose.get('psi_rad')!r}")
    return problems


def _check_waveform(waveform, panel):
    problems = _check_positive(waveform, "waveform", ("bandwidth_hz", "pri_s", "n_pulses"))
    for key in ("tx_power_dbm", "n0_dbm_hz"):
        if not _is_number(waveform.get(key)):
            problems.append(f"waveform.{key} must be a finite number")
    bandwidth, f0 = waveform.get("bandwidth_hz"), panel.get("f0_hz")
    if _is_number(bandwidth) and _is_number(f0) and not f0 > bandwidth / 2:
        problems.append("panel.f0_hz must exceed half of waveform.bandwidth_hz")
    return problems


def _check_integration(integration):
    problems = []
    points = integration.get("quad_points")
    if points is not None and not (isinstance(points, int) and points >= 5 and points % 2 == 1):
        problems.append(f"integration.quad_points must be an odd integer >= 5, got {points!r}")
    for key in ("mc_samples", "rcs_mc_samples"):
        value = integration.get(key)
        if value is not None and not (isinstance(value, int) and value >= 1):
            problems.append(f"integration.{key} must be a positive integer, got {value!r}")
    rel_tol = integration.get("quad_rel_tol")
    if rel_tol is not None and not (_is_number(rel_tol) and rel_tol > 0):
        problems.append(f"integration.quad_rel_tol must be a positive number, got {rel_tol!r}")
    return problems


def _check_experiment(experiment, known_experiments):
    problems = []
    experiment_type = experiment.get("type")
    if known_experiments and experiment_type not in known_experiments:
        problems.append(f"experiment.type '{experiment_type}' is unknown (known: {', '.join(sorted(known_experiments))})")
    expectation = experiment.get("expectation")
    if expectation is not None and expectation not in EXPECTATION_METHODS:
        problems.append(f"experiment.expectation must be one of {', '.join(EXPECTATION_METHODS)}, got {expectation!r}")
    seed = experiment.get("seed")
    if seed is not None and not (isinstance(seed, int) and seed >= 0):
        problems.append(f"experiment.seed must be a non-negative integer, got {seed!r}")
    mobility = experiment.get("mobility")
    if mobility is not None and mobility not in MOBILITY_PRESETS:
        problems.append(f"experiment.mobility '{mobility}' is unknown (known: {', '.join(MOBILITY_PRESETS)})")
    values = sweep_values(experiment)
    if not values:
        problems.append("experiment.sweep is empty")
    elif not all(_is_number(v) for v in values):
        problems.append("experiment.sweep values must be finite numbers")
    return problems


# --- Scenario construction ---
def build_terminal(config, bandwidth=None):
    terminal, waveform, panel = config.terminal, config.waveform, config.panel
    bandwidth = bandwidth or waveform["bandwidth_hz"]
    if "preset" in terminal:
        return terminal_preset(terminal["preset"], panel["f0_hz"], bandwidth,
                               tx_power_dbm=waveform["tx_power_dbm"],
                               noise_psd_dbm_hz=waveform["n0_dbm_hz"],
                               rx_grid=int(terminal.get("rx_grid", 20)))
    return SensingTerminal(tx_positions=terminal["tx_positions"], rx_positions=terminal["rx_positions"],
                           tx_power_dbm=waveform["tx_power_dbm"], noise_psd_dbm_hz=waveform["n0_dbm_hz"],
                           f0=panel["f0_hz"], bandwidth=bandwidth)


def build_scenario(config, settings, n=None, bandwidth=None, sigma=None):
    """
    Scenario for one sweep point. Missing integration settings come from the
    runtime settings mapping (see emslb_pkg.config).
    """
    f0 = config.panel["f0_hz"]
    d = config.panel["d_over_lambda"] * wavelength(f0)
    panel = RisPanel(n_x=int(n or config.panel["n"]), n_y=int(n or config.panel["m"]), d=d, f0=f0)
    pose = Pose(x=config.pose["x_m"], psi=config.pose["psi_rad"])
    terminal = build_terminal(config, bandwidth)
    waveform = make_waveform(terminal, config.waveform["pri_s"], int(config.waveform["n_pulses"]))
    sigma = config.prior["sigma_m"] if sigma is None else sigma
    integration = config.integration
    return Scenario(
        terminal=terminal, panel=panel, pose=pose, waveform=waveform,
        prior=PositionPrior(mean=pose.x, sigma=sigma),
        quad_points=int(integration.get("quad_points", settings["QUAD_POINTS"])),
        quad_rel_tol=float(integration.get("quad_rel_tol", settings["QUAD_REL_TOL"])),
        mc_samples=int(integration.get("mc_samples", settings["HIM_MC_SAMPLES"])),
        rcs_mc_samples=int(integration.get("rcs_mc_samples", settings["RCS_MC_SAMPLES"])),
        seed=int(config.seed if config.seed is not None else settings["DEFAULT_SEED"]),
        scenario_id=config.scenario_id,
    )
