import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpflow.energy import energy, first_variation
from gpflow.errors import DissipationError
from gpflow.flow import (
    TRACE_COLUMNS,
    FixedStep,
    FlowConfig,
    GoldenSection,
    SchemeGradient,
    _find_plateaus,
    _LineEnergy,
    euler_step,
    golden_search,
    golden_step,
    metric_gradient,
    project_tangent,
    projected_gradient,
    run_flow,
)
from gpflow.grid import Grid, l2_inner, mass, retract
from gpflow.linsolve import riesz_solve
from gpflow.operators import Metric, Params, assemble_metric, x_inner
from gpflow.problems import perturb, vortex_state

from conftest import bench_params, box_eigenvalue, box_mode, random_field

SCHEMES = list(Metric)


def unit(grid, rng):
    return retract(random_field(grid, rng))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_gradient_consistency(grid, params, rng, scheme):
    u = random_field(grid, rng)
    grad = metric_gradient(u, params, scheme)
    op = assemble_metric(scheme, grid, params, u.density())
    e1 = first_variation(u, params)
    for _ in range(10):
        h = random_field(grid, rng)
        lhs = x_inner(op, grad, h).real
        rhs = l2_inner(e1, h).real
        assert lhs == pytest.approx(rhs, rel=1e-8)


def test_au_gradient_is_identity(grid, params, rng):
    u = random_field(grid, rng)
    assert np.array_equal(metric_gradient(u, params, "au").values, u.values)


def test_a0_gradient_without_interaction(grid, params, rng):
    u = random_field(grid, rng)
    assert np.array_equal(metric_gradient(u, params.with_(beta=0.0), "a0").values, u.values)


def test_h01_gradient_free_problem(grid, rng):
    u = random_field(grid, rng)
    p = Params.on_grid(grid, 0.0)
    assert np.allclose(metric_gradient(u, p, "h01").values, u.values, rtol=0, atol=0)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_projection_properties(grid, params, rng, scheme):
    u = unit(grid, rng)
    w = random_field(grid, rng)
    pw = project_tangent(u, w, scheme, params)
    scale = mass(u) * math.sqrt(l2_inner(w, w).real)
    assert abs(l2_inner(pw, u).real) <= 1e-10 * scale
    ppw = project_tangent(u, pw, scheme, params)
    assert np.linalg.norm(ppw.values - pw.values) <= 1e-10 * np.linalg.norm(pw.values)
    # the normal direction G_X u is annihilated
    op = SchemeGradient(scheme, grid, params).operator(u)
    g_u = riesz_solve(op, u)
    assert np.linalg.norm(project_tangent(u, g_u, scheme, params).values) <= 1e-10 * np.linalg.norm(g_u.values)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_tangent_vectors_are_fixed(grid, params, rng, scheme):
    u = unit(grid, rng)
    w = random_field(grid, rng)
    w = w - l2_inner(u, w).real * u  # Re (u, w) = 0 for unit u
    assert abs(l2_inner(w, u).real) < 1e-14
    pw = project_tangent(u, w, scheme, params)
    assert np.linalg.norm(pw.values - w.values) <= 1e-10 * np.linalg.norm(w.values)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_projected_gradient_is_tangent(grid, params, rng, scheme):
    u = unit(grid, rng)
    g, gamma = projected_gradient(u, params, scheme)
    assert abs(l2_inner(g, u).real) < 1e-10
    assert math.isfinite(gamma)


def test_linear_ground_mode_is_stationary(grid):
    p = Params.on_grid(grid, 0.0)
    phi = box_mode(grid)
    g, gamma = projected_gradient(phi, p, "a0")
    op = assemble_metric("a0", grid, p)
    assert math.sqrt(x_inner(op, g, g).real) < 1e-10
    assert gamma == pytest.approx(box_eigenvalue(grid), rel=1e-10)


def test_euler_step_trivial_cases(grid, params, rng):
    u = unit(grid, rng)
    g = random_field(grid, rng)
    assert np.allclose(euler_step(u, g, 0.0).values, u.values, rtol=0, atol=1e-15)
    assert np.allclose(euler_step(u, grid.zeros(), 0.7).values, u.values, rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.0, 5.0))
def test_euler_step_unit_mass(seed, alpha):
    g = Grid(7, 5, -1.0, 1.0, -1.0, 2.0)
    rng = np.random.default_rng(seed)
    u = retract(random_field(g, rng))
    out = euler_step(u, random_field(g, rng), alpha)
    assert abs(mass(out) - 1.0) <= 1e-14


def test_line_energy_matches_direct_evaluation(grid, params, rng):
    u = unit(grid, rng)
    g, _ = projected_gradient(u, params, "a0")
    phi = _LineEnergy(u, g, params)
    e0 = energy(u, params).total
    for alpha in (0.0, 0.01, 0.3, 1.0, 1.9):
        direct = energy(euler_step(u, g, alpha), params).total - e0
        assert phi(alpha) == pytest.approx(direct, rel=1e-9, abs=1e-12 * abs(e0))


def test_golden_search_scalar():
    x, fx, evals, ok = golden_search(lambda a: (a - 0.3) ** 2 + 1.0, 0.0, 2.0, 1e-8, 200)
    assert ok and abs(x - 0.3) < 2e-8 and evals < 60


def test_golden_search_budget_exhausted():
    x, _, evals, ok = golden_search(lambda a: (a - 0.3) ** 2, 0.0, 2.0, 1e-12, 10)
    assert not ok and evals <= 11 and 0.0 <= x <= 2.0


def test_golden_step_matches_dense_scan(grid, rng):
    # linear problem: the line energy is a smooth ratio of quadratics
    p = Params.on_grid(grid, lambda x, y: 0.5 * (x * x + y * y), beta=0.0, omega=0.0)
    u = unit(grid, rng)
    g, _ = projected_gradient(u, p, "h01")
    alpha_hi, tol = 2.0, 1e-7
    alpha = golden_step(u, g, p, alpha_hi, tol, 200)
    phi = _LineEnergy(u, g, p)
    grid_a = np.linspace(0.0, alpha_hi, 10_001)
    vals = np.array([phi(a) for a in grid_a])
    k = int(np.argmin(vals))
    assert 0 < k < len(grid_a) - 1  # interior minimizer
    assert abs(alpha - grid_a[k]) <= 2 * tol + (grid_a[1] - grid_a[0])
    assert phi(alpha) <= vals.min() + 1e-14


def test_golden_step_zero_gradient(grid, params, rng):
    u = unit(grid, rng)
    alpha = golden_step(u, grid.zeros(), params, 2.0, 1e-6, 80)
    assert 0.0 <= alpha <= 2.0
    assert energy(euler_step(u, grid.zeros(), alpha), params).total == pytest.approx(energy(u, params).total, rel=1e-15)


def test_max_iter_zero_returns_retracted_start(grid, params, rng):
    u0 = 3.0 * random_field(grid, rng)
    rep = run_flow(u0, params, FlowConfig(max_iter=0))
    assert rep.iterations == 0 and len(rep.trace) == 0
    assert np.allclose(rep.u.values, retract(u0).values, rtol=0, atol=1e-15)
    assert rep.termination == "max_iter"


def test_box_mode_recovered_from_random_start(grid, rng):
    p = Params.on_grid(grid, 0.0)
    rep = run_flow(unit(grid, rng), p, FlowConfig(scheme="a0", step=FixedStep(0.5), grad_tol=1e-12))
    assert rep.termination == "grad_tol"
    assert rep.rayleigh == pytest.approx(box_eigenvalue(grid), rel=0, abs=1e-9)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_iterates_stay_on_sphere(bgrid, rng, scheme):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 1)
    masses = []
    run_flow(u0, p, FlowConfig(scheme=scheme, max_iter=30), callback=lambda n, u: masses.append(mass(u)))
    assert len(masses) == 31
    assert max(abs(m - 1.0) for m in masses) <= 1e-13


@pytest.mark.parametrize("scheme", SCHEMES)
def test_phase_equivariance(bgrid, scheme):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 7)
    phase = np.exp(0.83j)
    cfg = FlowConfig(scheme=scheme, step=FixedStep(0.05), max_iter=25, warm_start=False)
    a, b = [], []
    run_flow(u0, p, cfg, callback=lambda n, u: a.append(u.values.copy()))
    run_flow(phase * u0, p, cfg, callback=lambda n, u: b.append(u.values.copy()))
    for x, y in zip(a, b):
        assert np.max(np.abs(y - phase * x)) <= 1e-10


def test_warm_start_does_not_change_iterates(bgrid):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 3)
    cfg = FlowConfig(scheme="a0", step=FixedStep(0.5), max_iter=20)
    warm = run_flow(u0, p, cfg)
    cold = run_flow(u0, p, FlowConfig(scheme="a0", step=FixedStep(0.5), max_iter=20, warm_start=False))
    assert np.max(np.abs(warm.u.values - cold.u.values)) <= 1e-9


def test_gamma_equals_eigenvalue_at_convergence():
    g = Grid.square(23)
    p = bench_params(g)
    u0 = perturb(vortex_state(g), 1e-3, 0)
    rep = run_flow(u0, p, FlowConfig(scheme="au", grad_tol=1e-10, max_iter=20_000))
    assert rep.termination == "grad_tol"
    _, gamma = projected_gradient(rep.u, p, "au")
    assert abs(gamma - rep.rayleigh) < 1e-6
    assert rep.eigen_residual < 1e-7


def test_dissipation_assertion(bgrid):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 0)
    rep = run_flow(u0, p, FlowConfig(scheme="au", step=FixedStep(0.05), max_iter=50, check_dissipation=True))
    assert rep.iterations == 50
    e = rep.trace.column("energy")
    assert np.all(np.diff(e) <= 1e-10 * (1 + np.abs(e[:-1])))
    # far outside the admissible step range the inequality is violated and the run halts
    with pytest.raises(DissipationError):
        run_flow(
            u0,
            p,
            FlowConfig(scheme="h01", step=FixedStep(5.0), max_iter=50, check_dissipation=True, dissipation_alpha_max=10),
        )


def test_trace_csv_stream(tmp_path, bgrid):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 0)
    path = tmp_path / "trace.csv"
    rep = run_flow(u0, p, FlowConfig(max_iter=17, record_every=3), trace_path=path, reference=u0)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) - 1 == len(rep.trace) == math.ceil(17 / 3)
    assert [int(r[0]) for r in rows[1:]] == [0, 3, 6, 9, 12, 15]
    assert float(rows[1][TRACE_COLUMNS.index("rho2")]) == pytest.approx(0.0, abs=1e-12)
    rep2 = run_flow(u0, p, FlowConfig(max_iter=2), trace_path=tmp_path / "t2.csv")
    with open(tmp_path / "t2.csv") as fh:
        r = list(csv.reader(fh))[1]
    assert r[TRACE_COLUMNS.index("rho1")] == "" and r[TRACE_COLUMNS.index("rho2")] == ""
    assert rep2.rho2 is None


def test_golden_steps_order_by_scheme(bgrid):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 0)
    med = {}
    for scheme in ("h01", "au"):
        rep = run_flow(u0, p, FlowConfig(scheme=scheme, step=GoldenSection(), max_iter=30))
        med[scheme] = np.median(rep.trace.column("alpha"))
    assert med["au"] > 0.5 and med["h01"] < 0.5 * med["au"]


def test_rho_tol_stop(bgrid):
    p = bench_params(bgrid)
    u0 = perturb(vortex_state(bgrid), 1e-3, 0)
    ref = run_flow(u0, p, FlowConfig(grad_tol=1e-7, max_iter=5000))
    rep = run_flow(u0, p, FlowConfig(rho_tol=1e-3, max_iter=5000), reference=ref.u)
    assert rep.termination == "rho_tol" and rep.rho2 <= 1e-3
    assert rep.trace.column("rho2")[-1] > 1e-3


def test_energy_tol_stop(bgrid):
    p = bench_params(bgrid)
    rep = run_flow(vortex_state(bgrid), p, FlowConfig(energy_tol=1e-8, grad_tol=0.0, max_iter=5000))
    assert rep.termination == "energy_tol"
    assert abs(rep.trace.column("energy")[-1] - rep.energy.total) < 1e-8


def test_find_plateaus():
    d = [-1.0] * 5 + [1e-8] * 25 + [-1e-3] * 3 + [1e-9] * 30
    ok = [False] * 33 + [True] * 30
    assert _find_plateaus(d, ok, 20, 1e-6) == [(5, 29)]
    assert _find_plateaus(d, ok, 30, 1e-6) == []


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FixedStep(0.0)
    with pytest.raises(ValueError):
        GoldenSection(alpha_hi=-1.0)
    with pytest.raises(ValueError):
        FlowConfig(record_every=0)
    with pytest.raises(ValueError):
        FlowConfig(scheme="l2")
