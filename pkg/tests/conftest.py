# tests/conftest.py
import os

os.environ.setdefault("EMSLB_ENV", "testing")

import numpy as np
import pytest
from click.testing import CliRunner

from emslb_pkg import create_app
from emslb_pkg.channel.services import make_waveform, terminal_preset
from emslb_pkg.models import Pose, PositionPrior, RisPanel, Scenario
from emslb_pkg.utils import wavelength

F0 = 78.5e9
DEFAULT_X = [10.0, 5.0, -6.5]


def make_scenario(n=100, x=DEFAULT_X, psi=0.0, bandwidth=1e9, sigma=1 / 6, preset="vi-default",
                  rx_grid=20, quad_points=1025, mc_samples=64, seed=7, f0=F0):
    """Scenario with a lambda0/4-spaced square panel, built the way the CLI builds it."""
    terminal = terminal_preset(preset, f0, bandwidth, rx_grid=rx_grid)
    panel = RisPanel(n_x=n, n_y=n, d=wavelength(f0) / 4, f0=f0)
    pose = Pose(x=x, psi=psi)
    return Scenario(
        terminal=terminal, panel=panel, pose=pose, waveform=make_waveform(terminal),
        prior=PositionPrior(mean=pose.x, sigma=sigma),
        quad_points=quad_points, mc_samples=mc_samples, seed=seed,
    )


@pytest.fixture
def scenario():
    return make_scenario()


@pytest.fixture
def small_scenario():
    """Cheap scenario for derivative and bound-ordering checks: 4x4 Rx grid, 40x40 panel."""
    return make_scenario(n=40, rx_grid=4, quad_points=129)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def app():
    return create_app("testing")


@pytest.fixture
def runner():
    return CliRunner()
