import math

import numpy as np
import pytest

from gpflow.energy import (
    eigen_residual,
    energy,
    first_variation,
    rayleigh,
    second_variation_apply,
)
from gpflow.errors import NotNormalizedError, ZeroFieldError
from gpflow.grid import Grid, l2_inner, mass, retract
from gpflow.operators import Params, assemble_metric, x_inner

from conftest import box_eigenvalue, box_mode, random_field


def harmonic_ground_state(grid):
    return retract(grid.sample(lambda x, y: np.exp(-(x * x + y * y) / (2 * math.sqrt(2)))))


def test_breakdown_signs_and_total(grid, params, rng):
    u = random_field(grid, rng)
    e = energy(u, params)
    assert e.total == pytest.approx(e.kinetic + e.potential + e.interaction - e.rotation, rel=1e-15)
    assert e.kinetic >= 0 and e.potential >= 0 and e.interaction >= 0
    d = e.to_dict()
    assert set(d) == {"kinetic", "potential", "interaction", "rotation", "total"}


def test_box_mode_energy_is_half_eigenvalue(grid):
    p = Params.on_grid(grid, 0.0)
    phi = box_mode(grid)
    assert energy(phi, p).total == pytest.approx(box_eigenvalue(grid) / 2, rel=1e-12)
    assert rayleigh(phi, p) == pytest.approx(box_eigenvalue(grid), rel=1e-12)
    e = first_variation(phi, p)
    assert np.allclose(e.values, box_eigenvalue(grid) * phi.values, rtol=1e-12, atol=1e-13)
    assert eigen_residual(phi, p) < 1e-12


def test_harmonic_oscillator_energy():
    g = Grid.square(255)
    p = Params.on_grid(g, lambda x, y: 0.5 * (x * x + y * y))
    u = harmonic_ground_state(g)
    assert abs(energy(u, p).total - math.sqrt(2) / 2) < 5e-3
    assert abs(rayleigh(u, p) - math.sqrt(2)) < 1e-2


def test_harmonic_rayleigh_second_order():
    errs = []
    for n in (63, 127, 255):
        g = Grid.square(n)
        p = Params.on_grid(g, lambda x, y: 0.5 * (x * x + y * y))
        errs.append(abs(rayleigh(harmonic_ground_state(g), p) - math.sqrt(2)))
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_vortex_rotation_term():
    g = Grid.square(127)
    u = g.sample(lambda x, y: (x + 1j * y) / math.sqrt(math.pi) * np.exp(-(x * x + y * y) / 2))
    p = Params.on_grid(g, 0.0, omega=1.2)
    ratio = energy(u, p).rotation / l2_inner(u, u).real
    assert ratio == pytest.approx(0.6, abs=5e-3)


def test_first_variation_finite_difference(grid, params, rng):
    for _ in range(5):
        u, v = random_field(grid, rng), random_field(grid, rng)
        t = 1e-5
        fd = (energy(u + t * v, params).total - energy(u - t * v, params).total) / (2 * t)
        exact = l2_inner(first_variation(u, params), v).real
        assert fd == pytest.approx(exact, rel=1e-6)


def test_first_variation_zero(grid, params):
    assert np.all(first_variation(grid.zeros(), params).values == 0)


def test_rayleigh_identity_with_au_metric(grid, params, rng):
    u = random_field(grid, rng)
    op = assemble_metric("au", grid, params, u.density())
    assert rayleigh(u, params) == pytest.approx(x_inner(op, u, u).real / mass(u) ** 2, rel=1e-12)


def test_rayleigh_zero_field(grid, params):
    with pytest.raises(ZeroFieldError):
        rayleigh(grid.zeros(), params)


def test_eigen_residual_requires_unit_mass(grid, params, rng):
    u = random_field(grid, rng)
    with pytest.raises(NotNormalizedError):
        eigen_residual(2.0 * retract(u), params)
    r = eigen_residual(retract(u), params)
    assert r > 0 and math.isfinite(r)


@pytest.mark.parametrize("omega", [0.3, -1.2, math.pi / 2])
def test_phase_invariance(grid, params, rng, omega):
    u = random_field(grid, rng)
    e1 = energy(u, params)
    e2 = energy(np.exp(1j * omega) * u, params)
    for a, b in zip(e1.to_dict().values(), e2.to_dict().values()):
        assert a == pytest.approx(b, rel=1e-13, abs=1e-13)
    f1 = first_variation(u, params)
    f2 = first_variation(np.exp(1j * omega) * u, params)
    assert np.allclose(f2.values, np.exp(1j * omega) * f1.values, rtol=1e-12, atol=1e-12 * np.abs(f1.values).max())


def test_quadratic_part_is_half_a0_norm(grid, params, rng):
    u = random_field(grid, rng)
    e = energy(u, params)
    a0 = assemble_metric("a0", grid, params)
    assert e.kinetic + e.potential - e.rotation == pytest.approx(0.5 * x_inner(a0, u, u).real, rel=1e-12)


def test_second_variation_reduces_to_a0(grid, params, rng):
    p = params.with_(beta=0.0)
    u, v = random_field(grid, rng), random_field(grid, rng)
    a0 = assemble_metric("a0", grid, p)
    assert np.allclose(second_variation_apply(u, v, p).values, a0.apply(v).values, rtol=1e-14, atol=1e-12)


def test_second_variation_symmetric(grid, params, rng):
    for _ in range(5):
        u, v, w = (random_field(grid, rng) for _ in range(3))
        a = l2_inner(second_variation_apply(u, v, params), w).real
        b = l2_inner(second_variation_apply(u, w, params), v).real
        assert a == pytest.approx(b, rel=1e-12)


def test_second_variation_finite_difference(grid, params, rng):
    for _ in range(5):
        u, v = random_field(grid, rng), random_field(grid, rng)
        t = 1e-4
        fd = (
            energy(u + t * v, params).total - 2 * energy(u, params).total + energy(u - t * v, params).total
        ) / t**2
        exact = l2_inner(second_variation_apply(u, v, params), v).real
        assert fd == pytest.approx(exact, rel=1e-4)
