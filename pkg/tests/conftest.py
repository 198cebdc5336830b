import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nlslab.ground_state import solve_ground_state
from nlslab.model import ComplexField, Grid, derive_params

settings.register_profile(
    "nlslab",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "nlslab"))

# acceptance lines collected by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def p17():
    return derive_params(1, 7)


@pytest.fixture(scope="session")
def gs1(p17):
    """d=1, p=7 ground state on N=2048, L=20."""
    return solve_ground_state(p17, Grid.cube(1, 2048, 20.0))


@pytest.fixture(scope="session")
def gs3():
    """d=3, p=3 radial ground state mapped to a well-resolved 128^3 box."""
    return solve_ground_state(derive_params(3, 3), Grid.cube(3, 128, 16.0))


@pytest.fixture(scope="session")
def gs3_small():
    return solve_ground_state(derive_params(3, 3), Grid.cube(3, 32, 12.0))


@pytest.fixture(scope="session")
def gs2():
    return solve_ground_state(derive_params(2, 5), Grid.cube(2, 512, 24.0))


def random_smooth_field(grid: Grid, rng: np.random.Generator, bumps: int = 3) -> ComplexField:
    """Sum of random complex Gaussian bumps kept well inside the box."""
    vals = np.zeros(grid.dims, dtype=complex)
    half = min(grid.extent)
    for _ in range(bumps):
        center = rng.uniform(-0.3 * half, 0.3 * half, size=grid.ndim)
        width = rng.uniform(0.5, 2.0)
        amp = rng.uniform(0.2, 2.0) * np.exp(2j * np.pi * rng.uniform())
        r2 = sum((x - c) ** 2 for x, c in zip(grid.coords, center))
        vals += amp * np.exp(-r2 / (2 * width**2))
    return ComplexField(grid, vals)


@pytest.fixture
def smooth_field():
    return random_smooth_field
