"""Uniform Dirichlet grid on a rectangle and complex fields sampled on it.

Only interior nodes carry unknowns; boundary values are the homogeneous
Dirichlet zero. Storage is row-major with x fastest: node ``(i, j)`` sits at
flat index ``j * nx + i`` and at coordinates ``(xmin + (i+1) hx, ymin + (j+1) hy)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import FieldFormatError, GridMismatchError, ZeroFieldError

__all__ = [
    "Grid",
    "Field",
    "l2_inner",
    "mass",
    "retract",
    "save_field",
    "load_field",
]


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    xmin: float = -6.0
    xmax: float = 6.0
    ymin: float = -6.0
    ymax: float = 6.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("node counts must be integers")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3 interior nodes per axis, got {self.nx}x{self.ny}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("domain bounds must satisfy xmin < xmax and ymin < ymax")

    @classmethod
    def square(cls, n, half_width=6.0):
        return cls(n, n, -half_width, half_width, -half_width, half_width)

    @property
    def hx(self):
        return (self.xmax - self.xmin) / (self.nx + 1)

    @property
    def hy(self):
        return (self.ymax - self.ymin) / (self.ny + 1)

    @property
    def cell_area(self):
        """Quadrature weight of every interior node."""
        return self.hx * self.hy

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def shape(self):
        """Shape of the 2D view of a field, ``(ny, nx)``."""
        return (self.ny, self.nx)

    @property
    def diag_radius(self):
        """Largest distance from the origin over the closed rectangle."""
        return math.sqrt(max(self.xmin**2, self.xmax**2) + max(self.ymin**2, self.ymax**2))

    @cached_property
    def x1d(self):
        return self.xmin + self.hx * np.arange(1, self.nx + 1)

    @cached_property
    def y1d(self):
        return self.ymin + self.hy * np.arange(1, self.ny + 1)

    @cached_property
    def x(self):
        """x coordinate of every node, flat storage order."""
        return np.tile(self.x1d, self.ny)

    @cached_property
    def y(self):
        """y coordinate of every node, flat storage order."""
        return np.repeat(self.y1d, self.nx)

    def sample(self, func):
        """Evaluate ``func(x, y)`` on the interior nodes and wrap it as a Field."""
        values = np.broadcast_to(np.asarray(func(self.x, self.y), dtype=complex), (self.size,))
        return Field(self, values)

    def zeros(self):
        return Field(self, np.zeros(self.size, dtype=complex))

    def random(self, rng):
        """Complex standard normal values per node (not normalized)."""
        re_, im_ = rng.standard_normal((2, self.size))
        return Field(self, (re_ + 1j * im_) / math.sqrt(2.0))


class Field:
    """A complex function sampled at the interior nodes of a grid.

    Arithmetic with scalars and with fields on the same grid returns new
    fields; the stored array is never modified in place.
    """

    __slots__ = ("grid", "values")
    __array_priority__ = 100

    def __init__(self, grid, values):
        values = np.array(values, dtype=complex, copy=True).reshape(-1)
        if values.shape[0] != grid.size:
            raise GridMismatchError(
                f"field of length {values.shape[0]} does not fit a {grid.nx}x{grid.ny} grid"
            )
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    @classmethod
    def _wrap(cls, grid, values):
        # trusted fast path: values already a fresh complex array of the right size
        obj = cls.__new__(cls)
        values.setflags(write=False)
        obj.grid = grid
        obj.values = values
        return obj

    def __repr__(self):
        return f"Field({self.grid.nx}x{self.grid.ny}, mass={mass(self):.6g})"

    def as_2d(self):
        return self.values.reshape(self.grid.shape)

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field._wrap(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field._wrap(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field._wrap(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field._wrap(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field._wrap(self.grid, self.values / self._other(other))

    def __neg__(self):
        return Field._wrap(self.grid, -self.values)

    def conj(self):
        return Field._wrap(self.grid, self.values.conj())

    def density(self):
        """|u|^2 as a real array."""
        return self.values.real**2 + self.values.imag**2

    def allclose(self, other, rtol=1e-12, atol=0.0):
        return self.grid == other.grid and np.allclose(self.values, other.values, rtol=rtol, atol=atol)


def _check_same(u, v):
    if u.grid != v.grid:
        raise GridMismatchError(
            f"fields on different grids: {u.grid.nx}x{u.grid.ny} vs {v.grid.nx}x{v.grid.ny}"
        )


def l2_inner(u, v):
    """Discrete L2 pairing, conjugate-linear in the first argument."""
    _check_same(u, v)
    return u.grid.cell_area * np.vdot(u.values, v.values)


def mass(u):
    return math.sqrt(max(l2_inner(u, u).real, 0.0))


def retract(v):
    """Scale ``v`` onto the unit L2 sphere."""
    m = mass(v)
    if m == 0.0:
        raise ZeroFieldError("cannot retract a field of zero mass")
    return Field._wrap(v.grid, v.values / m)


_HEADER = re.compile(
    r"#\s*gpflow-field\s+nx=(?P<nx>\d+)\s+ny=(?P<ny>\d+)\s+xmin=(?P<xmin>\S+)\s+"
    r"xmax=(?P<xmax>\S+)\s+ymin=(?P<ymin>\S+)\s+ymax=(?P<ymax>\S+)\s*$"
)


def save_field(u, path):
    """Write ``u`` as a text CSV: one header line, then ``x,y,re,im`` per node."""
    g = u.grid
    header = (
        f"# gpflow-field nx={g.nx} ny={g.ny} xmin={g.xmin:.17g} xmax={g.xmax:.17g} "
        f"ymin={g.ymin:.17g} ymax={g.ymax:.17g}"
    )
    data = np.column_stack([g.x, g.y, u.values.real, u.values.imag])
    path = Path(path)
    with path.open("w") as fh:
        fh.write(header + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",")


def load_field(path):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
        m = _HEADER.match(first)
        if m is None:
            raise FieldFormatError(f"{path}: missing or malformed gpflow-field header")
        try:
            grid = Grid(
                int(m["nx"]),
                int(m["ny"]),
                float(m["xmin"]),
                float(m["xmax"]),
                float(m["ymin"]),
                float(m["ymax"]),
            )
        except ValueError as exc:
            raise FieldFormatError(f"{path}: invalid grid in header ({exc})") from None
        try:
            data = np.loadtxt(fh, delimiter=",", ndmin=2, dtype=float)
        except ValueError as exc:
            raise FieldFormatError(f"{path}: unreadable payload ({exc})") from None
    if data.size == 0:
        data = data.reshape(0, 4)
    if data.shape != (grid.size, 4):
        raise FieldFormatError(
            f"{path}: header declares {grid.size} nodes but payload has "
            f"{data.shape[0]} rows of {data.shape[1] if data.ndim == 2 else '?'} columns"
        )
    return Field(grid, data[:, 2] + 1j * data[:, 3])
