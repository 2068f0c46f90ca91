"""Run configuration: a JSON document of flat sections.

Every section is optional and every missing key takes its default, so
``{}`` is a valid config (the rotating benchmark on a 255x255 grid). Unknown
keys are rejected so typos do not silently fall back to defaults.
:meth:`RunConfig.to_dict` returns the fully resolved config, which
:meth:`RunConfig.from_dict` accepts unchanged.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .flow import FixedStep, FlowConfig, GoldenSection
from .grid import Grid, load_field
from .linsolve import PRECONDITIONERS, SolveConfig
from .operators import Metric, Params
from .problems import gauss_state, harmonic_aniso, perturb, random_state, vortex_state, zero_potential

__all__ = ["RunConfig", "load_config"]

POTENTIALS = ("harmonic_aniso", "zero", "file")
INITIAL_STATES = ("vortex", "gauss", "random", "file")
STEP_POLICIES = ("golden", "fixed")
RATE_ERRORS = ("rho2", "rho1", "energy")


class _Section:
    """Typed, validated access to one JSON object; records the keys it reads."""

    def __init__(self, data, name):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(name, "must be a JSON object")
        self.data = data
        self.name = name
        self.seen = set()

    def key(self, k):
        return f"{self.name}.{k}" if self.name else k

    def raw(self, k, default):
        self.seen.add(k)
        return self.data.get(k, default)

    def number(self, k, default, *, positive=False, nonneg=False, allow_none=False):
        v = self.raw(k, default)
        if v is None and allow_none:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(self.key(k), f"expected a finite number, got {v!r}")
        if positive and not v > 0:
            raise ConfigError(self.key(k), f"must be positive, got {v!r}")
        if nonneg and v < 0:
            raise ConfigError(self.key(k), f"must be nonnegative, got {v!r}")
        return float(v)

    def integer(self, k, default, *, minimum=None):
        v = self.raw(k, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(self.key(k), f"expected an integer, got {v!r}")
        if minimum is not None and v < minimum:
            raise ConfigError(self.key(k), f"must be >= {minimum}, got {v}")
        return v

    def choice(self, k, default, options):
        v = self.raw(k, default)
        if v not in options:
            raise ConfigError(self.key(k), f"must be one of {list(options)}, got {v!r}")
        return v

    def flag(self, k, default):
        v = self.raw(k, default)
        if not isinstance(v, bool):
            raise ConfigError(self.key(k), f"expected true or false, got {v!r}")
        return v

    def path(self, k, default=None):
        v = self.raw(k, default)
        if v is not None and not isinstance(v, str):
            raise ConfigError(self.key(k), f"expected a path string, got {v!r}")
        return v

    def done(self):
        extra = sorted(set(self.data) - self.seen)
        if extra:
            raise ConfigError(self.key(extra[0]), "unknown key")


@dataclass(frozen=True)
class Domain:
    nx: int = 255
    ny: int = 255
    xmin: float = -6.0
    xmax: float = 6.0
    ymin: float = -6.0
    ymax: float = 6.0

    def grid(self, n=None):
        nx, ny = (n, n) if n is not None else (self.nx, self.ny)
        return Grid(nx, ny, self.xmin, self.xmax, self.ymin, self.ymax)


@dataclass(frozen=True)
class Physics:
    potential: str = "harmonic_aniso"
    gamma_x: float = 0.9
    gamma_y: float = 1.2
    potential_path: Optional[str] = None
    beta: float = 100.0
    omega: float = 1.2


@dataclass(frozen=True)
class Stepping:
    policy: str = "golden"
    alpha: float = 0.5
    alpha_hi: float = 2.0
    tol: float = 1e-6
    max_eval: int = 80


@dataclass(frozen=True)
class Stopping:
    grad_tol: float = 1e-9
    energy_tol: float = 0.0
    max_iter: int = 50_000
    rho_tol: float = 0.0
    stagnation_window: int = 1000


@dataclass(frozen=True)
class Initial:
    kind: str = "vortex"
    path: Optional[str] = None
    # relative size of the seeded symmetry-breaking perturbation
    noise: float = 1e-6


@dataclass(frozen=True)
class IO:
    trace: str = "trace.csv"
    field: str = "field.csv"
    summary: str = "summary.json"
    reference: Optional[str] = None
    record_every: int = 1


@dataclass(frozen=True)
class Solver:
    rel_tol: float = 1e-12
    max_iter: int = 10
    preconditioner: str = "fst"
    warm_start: bool = True


@dataclass(frozen=True)
class Dissipation:
    check: bool = False
    alpha_max: float = 0.1
    reference_energy: Optional[float] = None


@dataclass(frozen=True)
class FixedStepStudy:
    schemes: tuple = ("h01", "a0", "au")
    alphas: tuple = (0.05, 0.5, 1.5)
    max_iter: int = 2000
    tail: int = 50


@dataclass(frozen=True)
class MeshStudy:
    resolutions: tuple = (15, 31, 63, 127, 255)
    window: int = 100
    start_rho: float = 1e-5
    reference_tol: float = 1e-11
    reference_max_iter: int = 50_000
    error: str = "rho2"


@dataclass(frozen=True)
class RunConfig:
    domain: Domain = field(default_factory=Domain)
    physics: Physics = field(default_factory=Physics)
    scheme: str = "au"
    stepping: Stepping = field(default_factory=Stepping)
    stopping: Stopping = field(default_factory=Stopping)
    initial: Initial = field(default_factory=Initial)
    io: IO = field(default_factory=IO)
    solver: Solver = field(default_factory=Solver)
    dissipation: Dissipation = field(default_factory=Dissipation)
    fixed_step: FixedStepStudy = field(default_factory=FixedStepStudy)
    mesh_study: MeshStudy = field(default_factory=MeshStudy)
    seed: int = 0
    base_dir: str = field(default=".", compare=False)

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_dict(cls, data, base_dir="."):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        top = _Section(data, "")
        kw = {"base_dir": str(base_dir)}
        kw["domain"] = _parse_domain(_Section(top.raw("domain", None), "domain"))
        kw["physics"] = _parse_physics(_Section(top.raw("physics", None), "physics"))
        kw["scheme"] = top.choice("scheme", "au", [m.value for m in Metric])
        kw["stepping"] = _parse_stepping(_Section(top.raw("stepping", None), "stepping"))
        kw["stopping"] = _parse_stopping(_Section(top.raw("stopping", None), "stopping"))
        kw["initial"] = _parse_initial(_Section(top.raw("initial", None), "initial"))
        kw["io"] = _parse_io(_Section(top.raw("io", None), "io"))
        kw["solver"] = _parse_solver(_Section(top.raw("solver", None), "solver"))
        kw["dissipation"] = _parse_dissipation(_Section(top.raw("dissipation", None), "dissipation"))
        kw["fixed_step"] = _parse_fixed_step(_Section(top.raw("fixed_step", None), "fixed_step"))
        kw["mesh_study"] = _parse_mesh_study(_Section(top.raw("mesh_study", None), "mesh_study"))
        kw["seed"] = top.integer("seed", 0, minimum=0)
        top.done()
        return cls(**kw)

    def to_dict(self):
        d = asdict(self)
        d.pop("base_dir")
        d["fixed_step"]["schemes"] = list(self.fixed_step.schemes)
        d["fixed_step"]["alphas"] = list(self.fixed_step.alphas)
        d["mesh_study"]["resolutions"] = list(self.mesh_study.resolutions)
        return d

    def with_seed(self, seed):
        if seed is None:
            return self
        if seed < 0:
            raise ConfigError("seed", "must be nonnegative")
        return replace(self, seed=int(seed))

    # -- building blocks ---------------------------------------------------

    def resolve(self, path):
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def grid(self, n=None):
        return self.domain.grid(n)

    def params(self, grid):
        ph = self.physics
        if ph.potential == "harmonic_aniso":
            pot = harmonic_aniso(ph.gamma_x, ph.gamma_y)
        elif ph.potential == "zero":
            pot = zero_potential
        else:
            samples = self._load(ph.potential_path, "physics.potential_path")
            if samples.grid != grid:
                raise ConfigError("physics.potential_path", "potential samples live on a different grid")
            pot = samples.values.real.copy()
        return Params.on_grid(grid, pot, ph.beta, ph.omega)

    def initial_state(self, grid):
        ini = self.initial
        if ini.kind == "file":
            u = self._load(ini.path, "initial.path")
            if u.grid != grid:
                raise ConfigError("initial.path", "initial field lives on a different grid")
            return perturb(u, ini.noise, self.seed) if ini.noise else u
        if ini.kind == "random":
            return random_state(grid, self.seed)
        base = vortex_state(grid) if ini.kind == "vortex" else gauss_state(grid)
        return perturb(base, ini.noise, self.seed)

    def reference(self, grid=None):
        if self.io.reference is None:
            return None
        u = self._load(self.io.reference, "io.reference")
        if grid is not None and u.grid != grid:
            raise ConfigError("io.reference", "reference field lives on a different grid")
        return u

    def _load(self, path, key):
        if path is None:
            raise ConfigError(key, "a path is required")
        p = self.resolve(path)
        if not p.is_file():
            raise ConfigError(key, f"file not found: {p}")
        return load_field(p)

    def step_policy(self):
        s = self.stepping
        if s.policy == "fixed":
            return FixedStep(s.alpha)
        return GoldenSection(s.alpha_hi, s.tol, s.max_eval)

    def flow_config(self, scheme=None, step=None, **overrides):
        st = self.stopping
        kw = dict(
            scheme=Metric(scheme or self.scheme),
            step=step or self.step_policy(),
            grad_tol=st.grad_tol,
            energy_tol=st.energy_tol,
            max_iter=st.max_iter,
            rho_tol=st.rho_tol,
            stagnation_window=st.stagnation_window,
            warm_start=self.solver.warm_start,
            record_every=self.io.record_every,
            check_dissipation=self.dissipation.check,
            dissipation_alpha_max=self.dissipation.alpha_max,
        )
        kw.update(overrides)
        return FlowConfig(**kw)

    def solve_config(self):
        s = self.solver
        return SolveConfig(s.rel_tol, s.max_iter, s.preconditioner)


def _parse_domain(s):
    n = s.raw("n", None)
    if n is not None:
        if isinstance(n, bool) or not isinstance(n, int):
            raise ConfigError("domain.n", f"expected an integer, got {n!r}")
        if n < 3:
            raise ConfigError("domain.n", f"resolution must be >= 3, got {n}")
    nx = s.integer("nx", n if n is not None else 255, minimum=3)
    ny = s.integer("ny", n if n is not None else 255, minimum=3)
    xmin = s.number("xmin", -6.0)
    xmax = s.number("xmax", 6.0)
    ymin = s.number("ymin", -6.0)
    ymax = s.number("ymax", 6.0)
    if not xmax > xmin:
        raise ConfigError("domain.xmax", "must exceed domain.xmin")
    if not ymax > ymin:
        raise ConfigError("domain.ymax", "must exceed domain.ymin")
    s.done()
    return Domain(nx, ny, xmin, xmax, ymin, ymax)


def _parse_physics(s):
    kind = s.choice("potential", "harmonic_aniso", POTENTIALS)
    gamma_x = s.number("gamma_x", 0.9)
    gamma_y = s.number("gamma_y", 1.2)
    path = s.path("potential_path")
    if kind == "file" and path is None:
        raise ConfigError("physics.potential_path", "required for a sampled potential")
    beta = s.number("beta", 100.0, nonneg=True)
    omega = s.number("omega", 1.2, nonneg=True)
    s.done()
    return Physics(kind, gamma_x, gamma_y, path, beta, omega)


def _parse_stepping(s):
    policy = s.choice("policy", "golden", STEP_POLICIES)
    alpha = s.number("alpha", 0.5, positive=True)
    alpha_hi = s.number("alpha_hi", 2.0, positive=True)
    tol = s.number("tol", 1e-6, positive=True)
    max_eval = s.integer("max_eval", 80, minimum=2)
    s.done()
    return Stepping(policy, alpha, alpha_hi, tol, max_eval)


def _parse_stopping(s):
    out = Stopping(
        grad_tol=s.number("grad_tol", 1e-9, nonneg=True),
        energy_tol=s.number("energy_tol", 0.0, nonneg=True),
        max_iter=s.integer("max_iter", 50_000, minimum=0),
        rho_tol=s.number("rho_tol", 0.0, nonneg=True),
        stagnation_window=s.integer("stagnation_window", 1000, minimum=0),
    )
    s.done()
    return out


def _parse_initial(s):
    kind = s.choice("kind", "vortex", INITIAL_STATES)
    path = s.path("path")
    if kind == "file" and path is None:
        raise ConfigError("initial.path", "required when initial.kind is 'file'")
    default_noise = 0.0 if kind in ("file", "random") else 1e-6
    noise = s.number("noise", default_noise, nonneg=True)
    s.done()
    return Initial(kind, path, noise)


def _parse_io(s):
    out = IO(
        trace=s.path("trace", "trace.csv"),
        field=s.path("field", "field.csv"),
        summary=s.path("summary", "summary.json"),
        reference=s.path("reference"),
        record_every=s.integer("record_every", 1, minimum=1),
    )
    s.done()
    return out


def _parse_solver(s):
    rel_tol = s.number("rel_tol", 1e-12, positive=True)
    if not rel_tol < 1:
        raise ConfigError("solver.rel_tol", "must be below 1")
    out = Solver(
        rel_tol=rel_tol,
        max_iter=s.integer("max_iter", 10, minimum=1),
        preconditioner=s.choice("preconditioner", "fst", PRECONDITIONERS),
        warm_start=s.flag("warm_start", True),
    )
    s.done()
    return out


def _parse_dissipation(s):
    out = Dissipation(
        check=s.flag("check", False),
        alpha_max=s.number("alpha_max", 0.1, positive=True),
        reference_energy=s.number("reference_energy", None, allow_none=True),
    )
    s.done()
    return out


def _parse_list(s, k, default, item):
    v = s.raw(k, default)
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(s.key(k), "expected a non-empty list")
    return tuple(item(x) for x in v)


def _parse_fixed_step(s):
    def scheme(x):
        if x not in [m.value for m in Metric]:
            raise ConfigError("fixed_step.schemes", f"unknown scheme {x!r}")
        return x

    def alpha(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0 or not math.isfinite(x):
            raise ConfigError("fixed_step.alphas", f"step sizes must be positive, got {x!r}")
        return float(x)

    out = FixedStepStudy(
        schemes=_parse_list(s, "schemes", ["h01", "a0", "au"], scheme),
        alphas=_parse_list(s, "alphas", [0.05, 0.5, 1.5], alpha),
        max_iter=s.integer("max_iter", 2000, minimum=1),
        tail=s.integer("tail", 50, minimum=2),
    )
    s.done()
    return out


def _parse_mesh_study(s):
    def res(x):
        if isinstance(x, bool) or not isinstance(x, int) or x < 3:
            raise ConfigError("mesh_study.resolutions", f"resolutions must be integers >= 3, got {x!r}")
        return x

    out = MeshStudy(
        resolutions=_parse_list(s, "resolutions", [15, 31, 63, 127, 255], res),
        window=s.integer("window", 100, minimum=2),
        start_rho=s.number("start_rho", 1e-5, positive=True),
        reference_tol=s.number("reference_tol", 1e-11, positive=True),
        reference_max_iter=s.integer("reference_max_iter", 50_000, minimum=1),
        error=s.choice("error", "rho2", RATE_ERRORS),
    )
    s.done()
    return out


def load_config(path):
    """Read and validate a JSON config file; relative paths resolve against its folder."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {p}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"{p}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return RunConfig.from_dict(data, base_dir=p.parent)
