# emslb_pkg/cli/experiments.py
"""
Experiment runners. Each one turns a validated ScenarioConfig into a ResultTable;
rows always follow sweep order, whatever the number of workers.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..alignment.services import (MOBILITY_PRESETS, average_rcs_under_error, simulate_alignment,
                                  training_budget)
from ..bounds.services import (bare_vehicle_benchmark, crb_perfect_config, crb_unknown_config,
                               hcrb)
from ..geometry.services import ems_incidence_angles
from ..models import AnglePair, PositionPrior, ResultTable
from ..reflector.services import beamwidths, corner_rcs, panel_for_side, rcs
from ..reflector.spems import check_spems_design, design_spems, spems_composite_rcs
from ..utils import linear_to_db
from .scenario import build_scenario, ensure_valid, sweep_values, with_seed

logger = logging.getLogger(__name__)

EXPERIMENTS = {}

BOUND_COLUMNS = [
    ("scenario_id", "-"), ("mode", "-"), ("panel_side_m", "m"), ("bandwidth_hz", "Hz"),
    ("sigma_m", "m"), ("peb_m", "m"), ("cond_number", "-"),
]


def experiment(experiment_type):
    """Decorator registering a runner under an experiment type name."""
    def decorator(func):
        if experiment_type in EXPERIMENTS:
            raise ValueError(f"experiment '{experiment_type}' is already registered")
        EXPERIMENTS[experiment_type] = func
        return func
    return decorator


def map_points(func, points, workers=1):
    """Evaluates func over the sweep points; results keep the order of `points`."""
    if workers <= 1 or len(points) <= 1:
        return [func(point) for point in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, points))


def run_experiment(config, app):
    """
    Validates the config, dispatches to the registered runner and stamps the
    provenance (package version, config hash, seed, experiment type) on the table.
    """
    from .. import __version__

    if config.seed is None:
        config = with_seed(config, app.config["DEFAULT_SEED"])
    ensure_valid(config, tuple(app.experiments))
    runner = app.experiments[config.experiment_type]

    started = time.perf_counter()
    table = runner(config, app.config)
    elapsed = time.perf_counter() - started
    table.provenance = {
        "version": __version__,
        "config_sha256": config.digest(),
        "seed": config.seed,
        "experiment": config.experiment_type,
        "scenario_id": config.scenario_id,
    }
    app.logger.info(f"[Experiments] {config.experiment_type} '{config.scenario_id}' produced "
                    f"{len(table.rows)} row(s) in {elapsed:.2f} s")
    return table


# --- Reflector studies ---
@experiment("rcs-vs-freq")
def rcs_vs_freq(config, settings):
    """RCS across the band at matched configuration for each elevation in the sweep."""
    scenario = build_scenario(config, settings)
    panel, bandwidth = scenario.panel, scenario.waveform.bandwidth
    experiment = config.experiment
    freqs = np.linspace(-bandwidth / 2, bandwidth / 2, int(experiment["freq_points"]))
    theta = np.deg2rad(experiment["theta_deg"])
    table = ResultTable(columns=[("phi_deg", "deg"), ("freq_hz", "Hz"), ("rcs_m2", "m^2"), ("rcs_dbsm", "dBsm")])
    for phi_deg in sweep_values(experiment):
        xi = AnglePair(theta, np.deg2rad(phi_deg))
        values = rcs(panel, freqs, xi, xi)
        for f, value in zip(freqs, values):
            table.add_row(float(phi_deg), float(f), float(value), float(linear_to_db(value)))
    return table


@experiment("avg-rcs-vs-size")
def avg_rcs_vs_size(config, settings):
    """Monte-Carlo mean RCS under positioning error over panel sizes and sigma values."""
    experiment = config.experiment
    table = ResultTable(columns=[
        ("n", "-"), ("panel_side_m", "m"), ("sigma_m", "m"), ("mean_rcs_m2", "m^2"),
        ("std_rcs_m2", "m^2"), ("peak_rcs_m2", "m^2"), ("gap_db", "dB"),
    ])

    def evaluate(n):
        scenario = build_scenario(config, settings, n=int(n))
        rows = []
        for sigma in experiment["sigma_values_m"]:
            stats = average_rcs_under_error(scenario, PositionPrior(scenario.pose.x, sigma),
                                            scenario.rcs_mc_samples, scenario.seed, settings["MC_CHUNK"])
            gap = float(linear_to_db(stats.peak / stats.mean))
            rows.append((int(n), scenario.panel.side_x, float(sigma), stats.mean, stats.std, stats.peak, gap))
        return rows

    for rows in map_points(evaluate, sweep_values(experiment), settings["MAX_WORKERS"]):
        for row in rows:
            table.add_row(*row)
    return table


@experiment("align-sim")
def align_sim(config, settings):
    """Codebook alignment efficacy and mobility budget for each sigma in the sweep."""
    experiment = config.experiment
    speed, t_pri = MOBILITY_PRESETS[experiment.get("mobility", "urban")]
    table = ResultTable(columns=[
        ("sigma_m", "m"), ("n_trials", "-"), ("within_3db_fraction", "-"), ("mean_pre_db", "dB"),
        ("mean_post_db", "dB"), ("median_codebook_size", "-"), ("kq_max", "-"), ("fits_budget", "-"),
    ])
    for sigma in sweep_values(experiment):
        scenario = build_scenario(config, settings, sigma=float(sigma))
        report = simulate_alignment(scenario, scenario.prior, int(experiment["n_trials"]), scenario.seed,
                                    float(experiment["kappa"]), bool(experiment.get("strict", False)))
        widths = beamwidths(scenario.panel, ems_incidence_angles(scenario.pose), settings["BISECTION_TOL"])
        budget = training_budget(speed, t_pri, float(experiment["d_min_m"]),
                                 np.deg2rad(experiment["phi_min_deg"]), (widths.delta_theta, widths.delta_phi))
        median_size = int(np.median(report.codebook_sizes))
        table.add_row(float(sigma), int(experiment["n_trials"]), report.within_3db_fraction,
                      float(np.mean(linear_to_db(report.pre_rcs / report.peak_rcs))),
                      float(np.mean(linear_to_db(report.post_rcs / report.peak_rcs))),
                      median_size, budget.kq_max, int(median_size <= budget.kq_max))
    return table


@experiment("spems-coverage")
def spems_coverage(config, settings):
    """Composite SP-EMS RCS over azimuth at each elevation in the sweep."""
    experiment = config.experiment
    f0 = config.panel["f0_hz"]
    module = panel_for_side(experiment["module_side_m"], f0, experiment["module_d_over_lambda"])
    reflector = design_spems(module, np.deg2rad(experiment["module_beamwidths_deg"]),
                             phi_span=np.deg2rad(experiment["phi_span_deg"]))
    min_rcs = corner_rcs(f0, experiment.get("corner_edge_m", 0.1)) / 10 ** (experiment.get("rcs_deficit_db", 10.0) / 10)
    for alert in check_spems_design(reflector, config.waveform["bandwidth_hz"], min_rcs):
        logger.warning(f"[Experiments] {alert['severity']}: {alert['message']}")

    table = ResultTable(columns=[("phi_deg", "deg"), ("theta_deg", "deg"), ("rcs_m2", "m^2"), ("rcs_dbsm", "dBsm")])
    thetas = np.linspace(-180.0, 180.0, int(experiment["theta_points"]))
    for phi_deg in sweep_values(experiment):
        for theta_deg in thetas:
            value = spems_composite_rcs(reflector, 0.0, AnglePair(np.deg2rad(theta_deg), np.deg2rad(phi_deg)))
            table.add_row(float(phi_deg), float(theta_deg), value, float(linear_to_db(value)))
    return table


# --- Localization bounds ---
def _bound_rows(config, scenario, experiment, settings):
    """Long-format bound rows for one sweep point."""
    side = scenario.panel.side_x
    cond_limit = settings["COND_LIMIT"]
    method = experiment.get("expectation", "monte-carlo")
    bandwidth = scenario.waveform.bandwidth
    rows = []

    def add(mode, sigma, result, value=None):
        rows.append((config.scenario_id, mode, side, bandwidth, float(sigma),
                     float(result.peb_m if value is None else value), float(result.cond_number)))

    bounds = experiment["bounds"]
    for mode in experiment["modes"]:
        if "crb" in bounds:
            add(f"{mode}-crb", 0.0, crb_unknown_config(scenario, mode, cond_limit))
        if "hcrb" in bounds:
            for sigma in experiment["sigma_values_m"]:
                prior = PositionPrior(scenario.pose.x, sigma)
                hybrid = hcrb(scenario, prior, mode, scenario.mc_samples, scenario.seed, method, cond_limit,
                              settings["GAUSS_HERMITE_ORDER"])
                add(f"{mode}-hcrb", sigma, hybrid)
        if "crb_perfect" in bounds:
            add(f"{mode}-crb_perfect", 0.0, crb_perfect_config(scenario, mode, cond_limit))
    if "bare" in bounds:
        bare = bare_vehicle_benchmark(scenario, experiment["rcs_deficit_db"], experiment["bias_m"],
                                      cond_limit=cond_limit)
        add("bare-peb", 0.0, bare)
        add("bare-rmse", 0.0, bare, bare.rmse_m)
    return rows


def _bound_table(rows_per_point):
    table = ResultTable(columns=list(BOUND_COLUMNS))
    for rows in rows_per_point:
        for row in rows:
            table.add_row(*row)
    return table


@experiment("peb-vs-size")
def peb_vs_size(config, settings):
    """PEB of every requested bound over panel element counts N = M."""
    experiment = config.experiment

    def evaluate(n):
        return _bound_rows(config, build_scenario(config, settings, n=int(n)), experiment, settings)

    return _bound_table(map_points(evaluate, sweep_values(experiment), settings["MAX_WORKERS"]))


@experiment("peb-vs-bandwidth")
def peb_vs_bandwidth(config, settings):
    """PEB of every requested bound over signal bandwidths."""
    experiment = config.experiment

    def evaluate(bandwidth):
        return _bound_rows(config, build_scenario(config, settings, bandwidth=float(bandwidth)), experiment, settings)

    return _bound_table(map_points(evaluate, sweep_values(experiment), settings["MAX_WORKERS"]))
