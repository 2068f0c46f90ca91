"""Distances modulo a global phase and convergence-rate estimation."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .grid import l2_inner
from .operators import laplacian_matrix

__all__ = ["AlignedError", "align_phase", "rho_pair", "h01_inner", "estimate_rate"]

NORMS = ("l2", "h01")


@dataclass(frozen=True)
class AlignedError:
    omega_star: float
    rho: float
    which_norm: str


def h01_inner(u, v):
    """``(grad u, grad v)_{L2}`` realized as ``(u, -Delta v)_{L2}``."""
    return l2_inner(u, type(v)._wrap(v.grid, laplacian_matrix(v.grid) @ v.values))


def _wrap_angle(a):
    # into [-pi, pi)
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def align_phase(u, v, norm="l2"):
    """Minimize ``||u - exp(i w) v||`` over the phase ``w`` in closed form.

    With ``c = (u, v)`` the minimizer is ``w* = -arg(c)``. The distance is
    then measured on the aligned difference directly; the expanded form
    ``||u||^2 + ||v||^2 - 2|c|`` loses all digits below about 1e-8.
    """
    if norm not in NORMS:
        raise ValueError(f"norm must be one of {NORMS}")
    inner = l2_inner if norm == "l2" else h01_inner
    c = inner(u, v)
    omega = 0.0 if c == 0 else _wrap_angle(-cmath.phase(c))
    d = u - v * cmath.exp(1j * omega)
    return AlignedError(omega, math.sqrt(max(inner(d, d).real, 0.0)), norm)


def rho_pair(u, uref):
    """``(rho1, rho2)``: L2 and H01 distance to ``uref`` modulo phase."""
    return align_phase(u, uref, "l2").rho, align_phase(u, uref, "h01").rho


def estimate_rate(errors, window=100):
    """Geometric mean of the last ``window`` successive error ratios."""
    errors = np.asarray(errors, dtype=float)
    if window < 2:
        raise ValueError("window must be at least 2")
    if errors.size < window + 1:
        raise ValueError(f"need at least {window + 1} errors, got {errors.size}")
    if np.any(~(errors > 0)):
        raise ValueError("errors must be positive")
    tail = errors[-(window + 1):]
    return float(np.exp((np.log(tail[-1]) - np.log(tail[0])) / window))
