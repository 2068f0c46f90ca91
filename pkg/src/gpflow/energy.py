"""Discrete Gross-Pitaevskii energy and its derivatives.

The kinetic term is evaluated through the 5-point Laplacian, so the energy and
:func:`first_variation` form an exactly compatible pair: the directional
derivative of :func:`energy` is ``Re (first_variation(u), v)_{L2}`` up to
rounding.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import GridMismatchError, NotNormalizedError, ZeroFieldError
from .grid import Field, mass
from .operators import laplacian_matrix, lz_matrix

__all__ = [
    "EnergyBreakdown",
    "energy",
    "first_variation",
    "rayleigh",
    "eigen_residual",
    "second_variation_apply",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    interaction: float
    rotation: float

    @property
    def total(self):
        return self.kinetic + self.potential + self.interaction - self.rotation

    def to_dict(self):
        d = asdict(self)
        d["total"] = self.total
        return d


def energy(u, params):
    """Kinetic + potential + interaction - rotation, each as a real number.

    ``u`` need not be normalized.
    """
    g = u.grid
    w = g.cell_area
    vals = u.values
    dens = vals.real**2 + vals.imag**2
    kinetic = 0.5 * w * np.vdot(vals, laplacian_matrix(g) @ vals).real
    potential = 0.5 * w * float(np.dot(params.potential, dens))
    interaction = 0.25 * params.beta * w * float(np.dot(dens, dens))
    rotation = 0.0
    if params.omega != 0.0:
        rotation = 0.5 * params.omega * w * np.vdot(vals, lz_matrix(g) @ vals).real
    return EnergyBreakdown(float(kinetic), potential, interaction, float(rotation))


def _nonlinear_part(u, params):
    """``V u + beta |u|^2 u - Omega L_z u`` as a raw array."""
    vals = u.values
    dens = vals.real**2 + vals.imag**2
    out = (params.potential + params.beta * dens) * vals
    if params.omega != 0.0:
        out = out - params.omega * (lz_matrix(u.grid) @ vals)
    return out


def first_variation(u, params):
    """``-Delta u + V u + beta |u|^2 u - Omega L_z u``: the L2 representative of E'(u)."""
    out = laplacian_matrix(u.grid) @ u.values + _nonlinear_part(u, params)
    return Field._wrap(u.grid, out)


def rayleigh(u, params):
    """Eigenvalue estimate ``Re (E'(u), u) / ||u||^2``."""
    m = mass(u)
    if m == 0.0:
        raise ZeroFieldError("eigenvalue estimate of a zero field")
    e = first_variation(u, params)
    return float(u.grid.cell_area * np.vdot(e.values, u.values).real / m**2)


def eigen_residual(u, params, tol=1e-12):
    """Max-norm of ``E'(u) - lambda(u) u`` for a unit-mass ``u``."""
    m = mass(u)
    if abs(m - 1.0) > tol:
        raise NotNormalizedError(f"eigen residual needs unit mass, got {m:.16g}")
    lam = rayleigh(u, params)
    e = first_variation(u, params)
    return float(np.max(np.abs(e.values - lam * u.values)))


def second_variation_apply(u, v, params):
    """Action of the energy Hessian at ``u`` on the direction ``v``.

    ``-Delta v + V v + beta |u|^2 v - Omega L_z v + 2 beta Re(conj(u) v) u``.
    The result pairs with ``w`` through ``Re (., w)_{L2}``.
    """
    if u.grid != v.grid:
        raise GridMismatchError("fields on different grids")
    uv, vv = u.values, v.values
    dens = uv.real**2 + uv.imag**2
    out = laplacian_matrix(u.grid) @ vv + (params.potential + params.beta * dens) * vv
    if params.omega != 0.0:
        out = out - params.omega * (lz_matrix(u.grid) @ vv)
    out = out + 2.0 * params.beta * (uv.conj() * vv).real * uv
    return Field._wrap(u.grid, out)
