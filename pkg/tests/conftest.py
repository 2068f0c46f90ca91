import math

import numpy as np
import pytest

from gpflow.grid import Field, Grid, retract
from gpflow.operators import Params


def box_mode(grid):
    """Lowest Dirichlet sine mode sampled on the nodes, unit mass."""
    lx = grid.xmax - grid.xmin
    ly = grid.ymax - grid.ymin
    return retract(
        grid.sample(lambda x, y: np.sin(np.pi * (x - grid.xmin) / lx) * np.sin(np.pi * (y - grid.ymin) / ly))
    )


def box_eigenvalue(grid):
    """Closed-form lowest eigenvalue of the 5-point Dirichlet Laplacian."""
    lx = grid.xmax - grid.xmin
    ly = grid.ymax - grid.ymin
    return (4 / grid.hx**2) * math.sin(math.pi * grid.hx / (2 * lx)) ** 2 + (
        4 / grid.hy**2
    ) * math.sin(math.pi * grid.hy / (2 * ly)) ** 2


def bench_potential(x, y):
    return 0.5 * ((0.9 * x) ** 2 + (1.2 * y) ** 2)


def bench_params(grid):
    return Params.on_grid(grid, bench_potential, beta=100.0, omega=1.2)


def random_field(grid, rng):
    re_, im_ = rng.standard_normal((2, grid.size))
    return Field(grid, re_ + 1j * im_)


def smooth_random_field(grid, rng, modes=4):
    """Random combination of a few low sine modes (resolved on every grid)."""
    lx = grid.xmax - grid.xmin
    ly = grid.ymax - grid.ymin
    vals = np.zeros(grid.size, dtype=complex)
    for p in range(1, modes + 1):
        for q in range(1, modes + 1):
            c = complex(rng.standard_normal(), rng.standard_normal()) / (p * q)
            vals += c * np.sin(p * np.pi * (grid.x - grid.xmin) / lx) * np.sin(q * np.pi * (grid.y - grid.ymin) / ly)
    return Field(grid, vals)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid():
    # deliberately non-square with distinct spacings
    return Grid(11, 9, -3.0, 2.5, -2.0, 3.0)


@pytest.fixture
def bgrid():
    return Grid.square(31)


@pytest.fixture
def params(grid):
    return Params.on_grid(grid, lambda x, y: 0.5 * ((0.9 * x) ** 2 + (1.2 * y) ** 2) + 0.3, beta=7.0, omega=0.8)


# one line per acceptance criterion, shown after the run
ACCEPTANCE = []


def verdict(label, ok, detail):
    ACCEPTANCE.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
    assert ok, f"{label}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
