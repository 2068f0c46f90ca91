"""Named trapping potentials and initial states."""

from __future__ import annotations

import math

import numpy as np

from .grid import retract

__all__ = [
    "harmonic_aniso",
    "zero_potential",
    "vortex_state",
    "gauss_state",
    "random_state",
    "perturb",
    "BENCHMARK",
]


def harmonic_aniso(gamma_x=0.9, gamma_y=1.2):
    """``V(x, y) = ((gamma_x x)^2 + (gamma_y y)^2) / 2``."""

    def potential(x, y):
        return 0.5 * ((gamma_x * x) ** 2 + (gamma_y * y) ** 2)

    return potential


def zero_potential(x, y):
    return np.zeros_like(x)


def vortex_state(grid):
    """Unit-charge vortex ``(x + iy) exp(-(x^2 + y^2)/2) / sqrt(pi)``, retracted."""
    return retract(grid.sample(lambda x, y: (x + 1j * y) / math.sqrt(math.pi) * np.exp(-(x * x + y * y) / 2)))


def gauss_state(grid):
    return retract(grid.sample(lambda x, y: np.exp(-(x * x + y * y) / 2)))


def random_state(grid, seed):
    return retract(grid.random(np.random.default_rng(seed)))


def perturb(u, amplitude, seed):
    """Add a seeded random field of relative L2 size ``amplitude``, then retract.

    The vortex state is odd under ``(x, y) -> (-x, -y)`` and so are the
    potential and rotation terms, so an unperturbed flow never leaves that
    symmetry class. A tiny generic perturbation lets it reach the ground state.
    """
    if amplitude == 0.0:
        return retract(u)
    noise = retract(u.grid.random(np.random.default_rng(seed)))
    return retract(retract(u) + amplitude * noise)


# The rotating anisotropic benchmark used throughout the experiment drivers.
BENCHMARK = {"gamma_x": 0.9, "gamma_y": 1.2, "beta": 100.0, "omega": 1.2}
