"""Finite-difference operators and the three metric operators.

The discrete kinetic operator is the 5-point Laplacian and the angular
momentum ``L_z = -i (x d/dy - y d/dx)`` uses centered differences, both with
Dirichlet zeros outside the interior. Centered differences are antisymmetric
and commute with the coordinate diagonal they multiply, so the assembled
``L_z`` is exactly Hermitian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatchError
from .grid import Field, Grid, l2_inner

__all__ = [
    "AuAssembler",
    "Params",
    "Metric",
    "MetricOp",
    "Admissibility",
    "laplacian_matrix",
    "lz_matrix",
    "apply_laplacian",
    "apply_lz",
    "assemble_metric",
    "x_inner",
    "x_norm",
    "check_admissibility",
]


class Metric(str, enum.Enum):
    """Which inner product defines the Sobolev gradient."""

    H01 = "h01"
    A0 = "a0"
    AU = "au"

    def __str__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class Params:
    """Physical data: potential samples, interaction strength and rotation speed."""

    potential: np.ndarray
    beta: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        pot = np.array(self.potential, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(pot)):
            raise ValueError("potential must be finite")
        if pot.size and pot.min() < 0:
            raise ValueError("potential must be nonnegative")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.omega < 0:
            raise ValueError("omega must be nonnegative")
        pot.setflags(write=False)
        object.__setattr__(self, "potential", pot)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "omega", float(self.omega))

    @classmethod
    def on_grid(cls, grid, potential, beta=0.0, omega=0.0):
        """Build params by sampling a callable ``potential(x, y)`` (or a constant)."""
        if callable(potential):
            pot = np.broadcast_to(np.asarray(potential(grid.x, grid.y), dtype=float), (grid.size,))
        else:
            pot = np.broadcast_to(np.asarray(potential, dtype=float), (grid.size,))
        return cls(pot, beta, omega)

    @property
    def v_max(self):
        return float(self.potential.max()) if self.potential.size else 0.0

    def with_(self, **changes):
        kw = dict(potential=self.potential, beta=self.beta, omega=self.omega)
        kw.update(changes)
        return Params(**kw)


@lru_cache(maxsize=16)
def laplacian_matrix(grid):
    """Discrete ``-Delta`` on the interior nodes (CSR, real)."""
    tx = sp.diags(
        [-np.ones(grid.nx - 1), 2.0 * np.ones(grid.nx), -np.ones(grid.nx - 1)], [-1, 0, 1]
    ) / grid.hx**2
    ty = sp.diags(
        [-np.ones(grid.ny - 1), 2.0 * np.ones(grid.ny), -np.ones(grid.ny - 1)], [-1, 0, 1]
    ) / grid.hy**2
    mat = sp.kron(sp.identity(grid.ny), tx) + sp.kron(ty, sp.identity(grid.nx))
    return mat.tocsr()


@lru_cache(maxsize=16)
def lz_matrix(grid):
    """Discrete ``L_z`` on the interior nodes (CSR, complex, Hermitian)."""
    dx1 = sp.diags([-np.ones(grid.nx - 1), np.ones(grid.nx - 1)], [-1, 1]) / (2.0 * grid.hx)
    dy1 = sp.diags([-np.ones(grid.ny - 1), np.ones(grid.ny - 1)], [-1, 1]) / (2.0 * grid.hy)
    dx = sp.kron(sp.identity(grid.ny), dx1)
    dy = sp.kron(dy1, sp.identity(grid.nx))
    xd = sp.diags(grid.x)
    yd = sp.diags(grid.y)
    mat = -1j * (xd @ dy - yd @ dx)
    return sp.csr_matrix(mat, dtype=complex)


def apply_laplacian(u):
    return Field._wrap(u.grid, laplacian_matrix(u.grid) @ u.values)


def apply_lz(u):
    return Field._wrap(u.grid, lz_matrix(u.grid) @ u.values)


@dataclass(frozen=True, eq=False)
class MetricOp:
    """An assembled Hermitian metric operator ``A_X`` with its provenance."""

    kind: Metric
    matrix: sp.csr_matrix
    grid: Grid
    params: Params
    density: Optional[np.ndarray] = None
    # constant diagonal shift used by the fast-sine-transform preconditioner
    shift: float = 0.0

    def matvec(self, x):
        return self.matrix @ x

    def apply(self, v):
        if v.grid != self.grid:
            raise GridMismatchError("field and metric live on different grids")
        return Field._wrap(self.grid, self.matrix @ v.values)

    def is_hermitian(self):
        return (self.matrix != self.matrix.conj().T).nnz == 0


def _density(density, grid):
    if density is None:
        raise ValueError("the au metric needs a density snapshot")
    if isinstance(density, Field):
        density = density.density()
    dens = np.asarray(density, dtype=float).reshape(-1)
    if dens.shape[0] != grid.size:
        raise GridMismatchError("density snapshot does not match the grid")
    if dens.size and dens.min() < 0:
        raise ValueError("density must be nonnegative")
    return dens


def assemble_metric(kind, grid, params, density=None):
    """Assemble ``-Delta`` (h01), ``-Delta + V - Omega L_z`` (a0) or
    ``-Delta + V + beta |u|^2 - Omega L_z`` (au).

    ``density`` is the snapshot ``|u|^2`` required for the au metric; a Field
    is accepted and its density taken.
    """
    kind = Metric(kind)
    lap = laplacian_matrix(grid)
    if kind is Metric.H01:
        return MetricOp(kind, lap, grid, params)
    if params.potential.shape[0] != grid.size:
        raise GridMismatchError("potential samples do not match the grid")
    diag = params.potential.copy()
    dens = None
    if kind is Metric.AU:
        dens = _density(density, grid)
        diag = diag + params.beta * dens
    mat = lap + sp.diags(diag)
    if params.omega != 0.0:
        mat = mat - params.omega * lz_matrix(grid)
    mat = sp.csr_matrix(mat, dtype=complex)
    # pointwise potential is a natural shift for the Laplace preconditioner
    shift = float(np.mean(diag))
    return MetricOp(kind, mat, grid, params, dens, shift)


class AuAssembler:
    """Repeated au assembly for one grid and parameter set.

    Only the diagonal changes with the density, so the sparsity pattern and
    off-diagonal entries are built once. Entries equal those of
    :func:`assemble_metric` bit for bit.
    """

    def __init__(self, grid, params):
        base = assemble_metric(Metric.A0, grid, params)
        lap = laplacian_matrix(grid)
        m = base.matrix
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        self._diag_pos = np.flatnonzero(m.indices == rows)
        if self._diag_pos.size != grid.size:
            raise ValueError("metric pattern lacks diagonal entries")
        self._lap_diag = lap.diagonal()
        self._base = m
        self.grid = grid
        self.params = params

    def __call__(self, density):
        dens = _density(density, self.grid)
        diag = self.params.potential + self.params.beta * dens
        mat = self._base.copy()
        mat.data[self._diag_pos] = self._lap_diag + diag
        return MetricOp(Metric.AU, mat, self.grid, self.params, dens, float(np.mean(diag)))


def x_inner(op, u, v):
    """``(u, v)_X = (u, A_X v)_{L2}``."""
    return l2_inner(u, op.apply(v))


def x_norm(op, u):
    return float(np.sqrt(max(x_inner(op, u, u).real, 0.0)))


@dataclass(frozen=True)
class Admissibility:
    """Outcome of checking ``V >= (1+K)/4 Omega^2 (x^2+y^2)``.

    ``status`` is ``"unconstrained"`` (no rotation), ``"admissible"`` with the
    largest admissible ``k_max``, or ``"violated"`` with the worst node.
    """

    status: str
    k_max: Optional[float] = None
    worst_index: Optional[int] = None
    worst_x: Optional[float] = None
    worst_y: Optional[float] = None

    @property
    def ok(self):
        return self.status != "violated"

    def to_dict(self):
        return {
            "status": self.status,
            "k_max": self.k_max,
            "worst_index": self.worst_index,
            "worst_x": self.worst_x,
            "worst_y": self.worst_y,
        }


def check_admissibility(grid, params):
    if params.omega == 0.0:
        return Admissibility("unconstrained")
    r2 = grid.x**2 + grid.y**2
    mask = r2 > 0
    idx = np.flatnonzero(mask)
    ratio = 4.0 * params.potential[mask] / (params.omega**2 * r2[mask]) - 1.0
    k = int(np.argmin(ratio))
    k_max = float(ratio[k])
    node = int(idx[k])
    if k_max > 0:
        return Admissibility("admissible", k_max, node, float(grid.x[node]), float(grid.y[node]))
    return Admissibility("violated", k_max, node, float(grid.x[node]), float(grid.y[node]))
