"""Projected Sobolev gradient flows on the unit L2 sphere.

One step is ``u <- R(u - alpha * P_{u,X} grad_X E(u))`` where ``grad_X`` is
the Riesz representative of ``E'(u)`` in the X inner product, ``P_{u,X}`` the
X-orthogonal projection onto the tangent space ``{v : Re (u, v)_{L2} = 0}``
and ``R`` the renormalization. X is one of

* ``h01``: ``grad = u + G(V u + beta |u|^2 u - Omega L_z u)`` with ``G = (-Delta)^{-1}``
* ``a0``:  ``grad = u + G(beta |u|^2 u)`` with ``G = (-Delta + V - Omega L_z)^{-1}``
* ``au``:  ``grad = u`` with ``G = (-Delta + V + beta |u|^2 - Omega L_z)^{-1}``
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .energy import EnergyBreakdown, eigen_residual, energy, rayleigh
from .errors import DissipationError, GPFlowError
from .grid import Field, l2_inner, retract
from .linsolve import SolveConfig, riesz_solve
from .operators import AuAssembler, Metric, assemble_metric, laplacian_matrix, lz_matrix, x_inner
from .quotient import rho_pair

__all__ = [
    "FixedStep",
    "GoldenSection",
    "FlowConfig",
    "TraceRecord",
    "FlowTrace",
    "SolveReport",
    "GradientInfo",
    "SchemeGradient",
    "metric_gradient",
    "project_tangent",
    "projected_gradient",
    "euler_step",
    "golden_search",
    "golden_step",
    "run_flow",
    "TRACE_COLUMNS",
]

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

TRACE_COLUMNS = (
    "n",
    "energy_total",
    "energy_kinetic",
    "energy_potential",
    "energy_interaction",
    "energy_rotation",
    "rayleigh",
    "grad_norm_X",
    "alpha",
    "gamma",
    "rho1",
    "rho2",
    "wall_ms",
)


@dataclass(frozen=True)
class FixedStep:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("fixed step size must be positive")


@dataclass(frozen=True)
class GoldenSection:
    """Exact line search on ``[0, alpha_hi]`` by golden-section bisection."""

    alpha_hi: float = 2.0
    tol: float = 1e-6
    max_eval: int = 80

    def __post_init__(self):
        if not self.alpha_hi > 0:
            raise ValueError("alpha_hi must be positive")
        if not self.tol > 0:
            raise ValueError("golden-section tolerance must be positive")
        if self.max_eval < 2:
            raise ValueError("max_eval must be at least 2")


StepPolicy = Union[FixedStep, GoldenSection]


@dataclass(frozen=True)
class FlowConfig:
    scheme: Metric = Metric.AU
    step: StepPolicy = field(default_factory=GoldenSection)
    grad_tol: float = 1e-9
    energy_tol: float = 0.0
    max_iter: int = 50_000
    warm_start: bool = True
    record_every: int = 1
    # opt-in runtime assertion of E(u_n) - E(u_n+1) >= alpha/2 ||g_n||_X^2
    check_dissipation: bool = False
    dissipation_alpha_max: float = 0.1
    # stop once rho2 against the reference drops below this (0 disables)
    rho_tol: float = 0.0
    plateau_window: int = 20
    plateau_delta: float = 1e-6
    # stop when neither the gradient norm nor the energy has reached a new
    # minimum for this many iterations (0 disables)
    stagnation_window: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "scheme", Metric(self.scheme))
        if self.grad_tol < 0 or self.energy_tol < 0 or self.rho_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class TraceRecord:
    n: int
    energy: EnergyBreakdown
    rayleigh: float
    grad_norm: float
    alpha: float
    gamma: float
    rho1: Optional[float]
    rho2: Optional[float]
    wall_ms: float

    def row(self):
        e = self.energy
        return [
            self.n,
            repr(e.total),
            repr(e.kinetic),
            repr(e.potential),
            repr(e.interaction),
            repr(e.rotation),
            repr(self.rayleigh),
            repr(self.grad_norm),
            repr(self.alpha),
            repr(self.gamma),
            "" if self.rho1 is None else repr(self.rho1),
            "" if self.rho2 is None else repr(self.rho2),
            f"{self.wall_ms:.3f}",
        ]


@dataclass
class FlowTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        if name in ("energy", "energy_total"):
            return np.array([r.energy.total for r in self.records])
        if name == "grad_norm_X":
            name = "grad_norm"
        return np.array([getattr(r, name) for r in self.records], dtype=float)


@dataclass
class SolveReport:
    u: Field
    energy: EnergyBreakdown
    rayleigh: float
    eigen_residual: float
    grad_norm: float
    iterations: int
    termination: str
    trace: FlowTrace
    rho1: Optional[float] = None
    rho2: Optional[float] = None
    # (first, last) iteration of excited-state plateaus left before the end
    plateaus: list = field(default_factory=list)
    wall_s: float = 0.0

    def summary(self):
        return {
            "energy": self.energy.to_dict(),
            "rayleigh": self.rayleigh,
            "eigen_residual": self.eigen_residual,
            "grad_norm_X": self.grad_norm,
            "iterations": self.iterations,
            "termination": self.termination,
            "rho1": self.rho1,
            "rho2": self.rho2,
            "plateaus": [list(p) for p in self.plateaus],
        }


@dataclass
class GradientInfo:
    g: Field  # projected gradient
    gamma: float
    norm: float  # X-norm of g
    grad: Field  # unprojected Sobolev gradient
    g_u: Field  # G_X u
    op: object  # MetricOp of this step


class SchemeGradient:
    """Projected gradients for one scheme, reusing operators across calls.

    The h01 and a0 metrics are assembled once; the au metric is rebuilt from
    ``|u|^2`` on every call. With ``warm_start`` the previous solutions seed
    the next CG solves.
    """

    def __init__(self, scheme, grid, params, solve_cfg=None, warm_start=True):
        self.scheme = Metric(scheme)
        self.grid = grid
        self.params = params
        self.solve_cfg = solve_cfg or SolveConfig()
        self.warm_start = warm_start
        if self.scheme is Metric.AU:
            self._op, self._assemble_au = None, AuAssembler(grid, params)
        else:
            self._op = assemble_metric(self.scheme, grid, params)
        self._prev_gu = None
        self._prev_rhs = None

    def operator(self, u):
        if self.scheme is Metric.AU:
            return self._assemble_au(u.density())
        return self._op

    def _solve(self, op, w, prev):
        return riesz_solve(op, w, self.solve_cfg, prev if self.warm_start else None)

    def sobolev_gradient(self, u, op=None):
        """Unprojected ``grad_X E(u)``."""
        op = op or self.operator(u)
        p = self.params
        if self.scheme is Metric.AU:
            return u
        dens = u.density()
        if self.scheme is Metric.A0:
            if p.beta == 0.0:
                return u
            rhs = Field._wrap(u.grid, p.beta * dens * u.values)
        else:
            vals = (p.potential + p.beta * dens) * u.values
            if p.omega != 0.0:
                vals = vals - p.omega * (lz_matrix(u.grid) @ u.values)
            rhs = Field._wrap(u.grid, vals)
        sol = self._solve(op, rhs, self._prev_rhs)
        self._prev_rhs = sol
        return u + sol

    def __call__(self, u):
        op = self.operator(u)
        grad = self.sobolev_gradient(u, op)
        g_u = self._solve(op, u, self._prev_gu)
        self._prev_gu = g_u
        gamma = l2_inner(grad, u).real / l2_inner(g_u, u).real
        g = grad - gamma * g_u
        norm = math.sqrt(max(x_inner(op, g, g).real, 0.0))
        return GradientInfo(g, gamma, norm, grad, g_u, op)


def metric_gradient(u, params, scheme, solve_cfg=None):
    """Sobolev gradient ``grad_X E(u)``: ``Re (grad, h)_X = Re (E'(u), h)_{L2}``."""
    return SchemeGradient(scheme, u.grid, params, solve_cfg, warm_start=False).sobolev_gradient(u)


def project_tangent(u, w, scheme, params, solve_cfg=None, g_u=None):
    """X-orthogonal projection of ``w`` onto ``{v : Re (u, v)_{L2} = 0}``.

    Uses ``Re (w, G_X u)_X = Re (w, u)_{L2}`` and ``||G_X u||_X^2 = Re (G_X u, u)_{L2}``.
    ``g_u`` may pass a precomputed ``G_X u``.
    """
    if g_u is None:
        op = SchemeGradient(scheme, u.grid, params, solve_cfg, warm_start=False).operator(u)
        g_u = riesz_solve(op, u, solve_cfg)
    coeff = l2_inner(w, u).real / l2_inner(g_u, u).real
    return w - coeff * g_u


def projected_gradient(u, params, scheme, solve_cfg=None):
    """Return ``(P_{u,X} grad_X E(u), gamma)``; ``gamma -> lambda`` at a ground state."""
    info = SchemeGradient(scheme, u.grid, params, solve_cfg, warm_start=False)(u)
    return info.g, info.gamma


def euler_step(u, g, alpha):
    return retract(u - alpha * g)


class _LineEnergy:
    """``phi(alpha) = E(R(u - alpha g)) - E(R(u))`` from precomputed pieces.

    The constant part is cancelled algebraically, so the difference keeps full
    relative precision even when it is far below ``eps * E``. Each evaluation
    costs a few vector operations and no sparse products.
    """

    def __init__(self, u, g, params):
        grid = u.grid
        w = grid.cell_area
        lap = laplacian_matrix(grid)
        a_u = lap @ u.values + params.potential * u.values
        a_g = lap @ g.values + params.potential * g.values
        if params.omega != 0.0:
            lz = lz_matrix(grid)
            a_u = a_u - params.omega * (lz @ u.values)
            a_g = a_g - params.omega * (lz @ g.values)
        # along v = u - alpha g: q(v) = Re (v, A0 v) and m(v) = ||v||^2 are quadratics
        self.q0 = w * np.vdot(u.values, a_u).real
        self.q1 = -2.0 * w * np.vdot(g.values, a_u).real
        self.q2 = w * np.vdot(g.values, a_g).real
        self.m0 = w * np.vdot(u.values, u.values).real
        self.m1 = -2.0 * w * np.vdot(g.values, u.values).real
        self.m2 = w * np.vdot(g.values, g.values).real
        d0 = u.density()
        self.s0 = float(np.dot(d0, d0))
        self.d0 = d0
        self.cross = -2.0 * (u.values.conj() * g.values).real
        self.gg = g.density()
        self.quartic = 0.25 * params.beta * w

    def __call__(self, alpha):
        dm = alpha * (self.m1 + alpha * self.m2)
        m2 = self.m0 + dm
        if not m2 > 0:
            return math.inf
        m0 = self.m0
        quad = alpha * (self.q1 * m0 - self.q0 * self.m1) + alpha**2 * (self.q2 * m0 - self.q0 * self.m2)
        val = 0.5 * quad / (m0 * m2)
        if self.quartic:
            delta = alpha * (self.cross + alpha * self.gg)
            ds = float(np.dot(2.0 * self.d0 + delta, delta))
            num = ds * m0 * m0 - self.s0 * dm * (m2 + m0)
            val += self.quartic * num / (m2 * m2 * m0 * m0)
        return val


def golden_search(phi, lo, hi, tol, max_eval):
    """Golden-section minimization of ``phi`` on ``[lo, hi]``.

    Returns ``(x, phi(x), evaluations, converged)``; ``x`` is the best point
    seen and lies within ``tol`` of a local minimizer when ``converged``.
    """
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = phi(c), phi(d)
    evals = 2
    while b - a > 2.0 * tol and evals < max_eval:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = phi(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = phi(d)
        evals += 1
    converged = b - a <= 2.0 * tol
    x = 0.5 * (a + b)
    fx = phi(x)
    evals += 1
    for cand, fcand in ((c, fc), (d, fd)):
        if fcand < fx:
            x, fx = cand, fcand
    return x, fx, evals, converged


def golden_step(u, g, params, alpha_hi=2.0, tol=1e-6, max_eval=80):
    """Step size minimizing ``E(R(u - alpha g))`` over ``[0, alpha_hi]``."""
    phi = _LineEnergy(u, g, params)
    alpha, _, evals, ok = golden_search(phi, 0.0, alpha_hi, tol, max_eval)
    if not ok:
        log.warning("golden-section search stopped after %d evaluations", evals)
    return alpha


def _find_plateaus(d_energy, grad_ok, window, delta):
    """Runs of >= window small energy changes that are later left again."""
    out = []
    start = None
    for k, de in enumerate(d_energy):
        small = abs(de) < delta and not grad_ok[k]
        if small:
            if start is None:
                start = k
        else:
            if start is not None and k - start >= window:
                out.append((start, k - 1))
            start = None
    return out


class _TraceWriter:
    def __init__(self, path):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(TRACE_COLUMNS)
        self.fh.flush()

    def write(self, rows):
        self.writer.writerows(rows)
        self.fh.flush()

    def close(self):
        self.fh.close()


def run_flow(u0, params, cfg=None, solve_cfg=None, reference=None, trace_path=None, callback=None):
    """Iterate the configured scheme from ``u0`` until a stopping rule fires.

    Records one :class:`TraceRecord` per ``record_every`` iterations, holding
    the state ``u_n`` and the step taken from it. ``reference`` enables the
    rho1/rho2 columns and the ``rho_tol`` stop. ``trace_path`` streams the
    records to CSV as they are produced. ``callback(n, u_n)`` sees every
    visited state, including the final one.
    """
    cfg = cfg or FlowConfig()
    grid = u0.grid
    t0 = time.perf_counter()
    u = retract(u0)
    grad_fn = SchemeGradient(cfg.scheme, grid, params, solve_cfg, cfg.warm_start)
    trace = FlowTrace()
    writer = _TraceWriter(trace_path) if trace_path is not None else None
    e_cur = energy(u, params)
    d_energy, grad_ok = [], []
    best_norm, best_energy, best_at = math.inf, e_cur.total, 0
    termination = "max_iter"
    n = 0
    rho = (None, None)
    try:
        while True:
            if callback is not None:
                callback(n, u)
            info = grad_fn(u)
            rho = rho_pair(u, reference) if reference is not None else (None, None)
            if info.norm < cfg.grad_tol:
                termination = "grad_tol"
                break
            if cfg.rho_tol > 0 and rho[1] is not None and rho[1] <= cfg.rho_tol:
                termination = "rho_tol"
                break
            if n >= cfg.max_iter:
                termination = "max_iter"
                break
            if isinstance(cfg.step, FixedStep):
                alpha = cfg.step.alpha
            else:
                s = cfg.step
                alpha = golden_step(u, info.g, params, s.alpha_hi, s.tol, s.max_eval)
            u_new = euler_step(u, info.g, alpha)
            e_new = energy(u_new, params)
            if not math.isfinite(e_new.total):
                raise GPFlowError(f"non-finite energy at iteration {n}")
            e_old = e_cur.total
            if cfg.check_dissipation and alpha <= cfg.dissipation_alpha_max:
                decrease = e_old - e_new.total
                bound = 0.5 * alpha * info.norm**2 - 1e-10 * (1.0 + abs(e_old))
                if decrease < bound:
                    raise DissipationError(n, decrease, bound)
            if n % cfg.record_every == 0:
                rec = TraceRecord(
                    n,
                    e_cur,
                    rayleigh(u, params),
                    info.norm,
                    alpha,
                    info.gamma,
                    rho[0],
                    rho[1],
                    1e3 * (time.perf_counter() - t0),
                )
                trace.records.append(rec)
                if writer is not None:
                    writer.write([rec.row()])
            change = e_new.total - e_old
            d_energy.append(change)
            grad_ok.append(info.norm < cfg.grad_tol)
            u, e_cur = u_new, e_new
            n += 1
            if cfg.energy_tol > 0 and abs(change) < cfg.energy_tol:
                termination = "energy_tol"
                if callback is not None:
                    callback(n, u)
                info = grad_fn(u)
                rho = rho_pair(u, reference) if reference is not None else (None, None)
                break
            if info.norm < best_norm:
                best_norm, best_at = info.norm, n
            if e_new.total < best_energy - 1e-14 * (1.0 + abs(best_energy)):
                best_energy, best_at = e_new.total, n
            if cfg.stagnation_window and n - best_at >= cfg.stagnation_window:
                termination = "stagnation"
                if callback is not None:
                    callback(n, u)
                info = grad_fn(u)
                rho = rho_pair(u, reference) if reference is not None else (None, None)
                break
    finally:
        if writer is not None:
            writer.close()

    report = SolveReport(
        u=u,
        energy=e_cur,
        rayleigh=rayleigh(u, params),
        eigen_residual=eigen_residual(u, params, tol=1e-10),
        grad_norm=info.norm,
        iterations=n,
        termination=termination,
        trace=trace,
        rho1=rho[0],
        rho2=rho[1],
        plateaus=_find_plateaus(d_energy, grad_ok, cfg.plateau_window, cfg.plateau_delta),
        wall_s=time.perf_counter() - t0,
    )
    log.info(
        "%s flow: %s after %d iterations, E=%.12g, lambda=%.12g, |g|_X=%.3e",
        cfg.scheme,
        termination,
        n,
        report.energy.total,
        report.rayleigh,
        report.grad_norm,
    )
    return report
