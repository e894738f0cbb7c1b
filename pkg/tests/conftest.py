import math

import numpy as np
import pytest

from hyperns.dynamics import SimConfig, make_initial_data, run
from hyperns.spectral import SpectralField, make_lattice
from hyperns.symbols import symbol_log_supercritical


def random_field(lattice, seed=0, solenoidal=False):
    """Random real field with Hermitian coefficients and no Nyquist content."""
    from hyperns.spectral import forward_transform, leray_project

    rng = np.random.default_rng(seed)
    f = forward_transform(rng.standard_normal((lattice.d,) + lattice.shape), lattice)
    return leray_project(f) if solenoidal else f


def mode_field(lattice, wavevector, vector):
    """Real field made of the pair +-wavevector with coefficient ``vector``."""
    c = np.zeros((lattice.d,) + lattice.shape, dtype=complex)
    idx = tuple(w % lattice.n for w in wavevector)
    neg = tuple((-w) % lattice.n for w in wavevector)
    c[(slice(None),) + idx] = vector
    c[(slice(None),) + neg] = np.conj(vector)
    return SpectralField(lattice, c)


# seed-42 nonlinear reference run: 3-D, log-supercritical, 1000 steps
SEED42 = dict(d=3, n=32, dt=2.5e-4, t_end=0.25, record_every=10, k=2)
SEED42_DATA = dict(k_min=1, k_max=2, amplitude=20.0, seed=42)


@pytest.fixture(scope="session")
def seed42_config():
    return SimConfig(symbol=symbol_log_supercritical(3), **SEED42)


@pytest.fixture(scope="session")
def seed42_run(seed42_config):
    lattice = make_lattice(3, 32)
    u0 = make_initial_data("random_band", lattice, **SEED42_DATA)
    return run(seed42_config, u0)


@pytest.fixture
def lat2():
    return make_lattice(2, 16)


@pytest.fixture
def lat3():
    return make_lattice(3, 8)


@pytest.fixture
def two_pi():
    return 2 * math.pi


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[num])
