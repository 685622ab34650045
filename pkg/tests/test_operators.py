import numpy as np
import pytest

from src.fields import ScalarField, VelocityField, enforce_boundary, inner_product, lp_norm, velocity_from_functions
from src.grid import make_grid
from src.operators import (
    boundary_energy_term,
    deformation,
    div_deformation,
    divergence,
    edge_deformation,
    gradient,
    laplacian,
    nonlinear_term,
    vector_laplacian,
    velocity_gradient,
)


def test_gradient_divergence_adjoint(channel_grid, box_grid, grid3d, random_velocity, random_scalar):
    """(grad s, v) = -(s, div v) for tangential v"""
    for grid in (channel_grid, box_grid, grid3d):
        s, v = random_scalar(grid), random_velocity(grid)
        lhs = inner_product(gradient(s), v)
        rhs = -inner_product(s, divergence(v))
        assert abs(lhs - rhs) <= 1e-12 * lp_norm(gradient(s), 2) * lp_norm(v, 2)


def test_laplacian_is_div_grad(box_grid, random_scalar):
    s = random_scalar(box_grid)
    assert np.allclose(laplacian(s).values, divergence(gradient(s)).values, rtol=0, atol=1e-10)


def test_nonlinear_term_skew_symmetric(channel_grid, box_grid, grid3d, random_velocity):
    """(nl(u), u) vanishes for non-solenoidal tangential fields too"""
    for grid in (channel_grid, box_grid, grid3d):
        u = random_velocity(grid)
        nl = nonlinear_term(u)
        assert abs(inner_product(nl, u)) <= 1e-12 * lp_norm(nl, 2) * lp_norm(u, 2)


def test_nonlinear_term_tangential(box_grid, random_velocity):
    nl = nonlinear_term(random_velocity(box_grid))
    assert not nl.components[0][0].any() and not nl.components[1][:, -1].any()


def test_div_deformation_identity(box_grid, grid3d, random_velocity):
    """2 div Du = laplacian u + grad div u"""
    for grid in (box_grid, grid3d):
        u = random_velocity(grid)
        lhs = div_deformation(u) * 2.0
        rhs = vector_laplacian(u) + enforce_boundary(gradient(divergence(u)))
        assert (lhs - rhs).max_abs() <= 1e-12 * rhs.max_abs()


def test_div_deformation_of_quadratic_shear(channel_grid):
    """u = (y^2, 0) gives 2 div Du = (2, 0) away from the walls"""
    u = velocity_from_functions(channel_grid, [lambda x, y: y**2, lambda x, y: 0.0 * x])
    w = div_deformation(u) * 2.0
    assert np.allclose(w.components[0][:, 1:-1], 2.0, atol=1e-9)
    assert np.allclose(w.components[1], 0.0)


def test_shear_gradient_and_deformation(channel_grid):
    """u = (y, 0): d_y u_x = 1 on interior edges and zero on the free-slip walls"""
    u = velocity_from_functions(channel_grid, [lambda x, y: y, lambda x, y: 0.0 * x])
    g = velocity_gradient(u)
    assert np.allclose(g[(0, 1)].values[:, 1:-1], 1.0)
    assert np.allclose(g[(0, 1)].values[:, [0, -1]], 0.0)
    d = edge_deformation(u)
    assert d[(0, 1)] is d[(1, 0)]
    assert np.allclose(d[(0, 1)].values[:, 1:-1], 0.5)


def test_deformation_tensor_symmetric(box_grid, random_velocity):
    d = deformation(random_velocity(box_grid))
    assert d.is_symmetric()
    assert d.frobenius_sq() > 0


def test_constant_field_has_no_gradient(periodic_grid):
    u = VelocityField(periodic_grid, (np.ones((16, 16)), np.full((16, 16), -2.0)))
    assert all(not e.values.any() for e in velocity_gradient(u).values())
    assert not nonlinear_term(u).components[0].any()
    assert not divergence(u).values.any()


def test_boundary_term_flat_walls(box_grid, random_velocity):
    """Flat walls have zero shape operator, so the surface term vanishes"""
    assert boundary_energy_term(random_velocity(box_grid)) == 0.0


def test_boundary_term_with_shape_operator(channel_grid):
    """u = (1, 0) with S = I picks up one unit per wall length"""
    u = VelocityField(channel_grid, (np.ones((16, 16)), np.zeros((16, 17))))
    assert boundary_energy_term(u, np.eye(2)) == pytest.approx(2.0)


def test_boundary_term_periodic_grid(periodic_grid):
    u = VelocityField(periodic_grid, (np.ones((16, 16)), np.ones((16, 16))))
    assert boundary_energy_term(u, np.eye(2)) == 0.0


def test_divergence_of_sine_field_second_order():
    """div of a smooth tangential field converges at second order"""
    errors = []
    for n in (16, 32):
        grid = make_grid(2, (n, n), (1.0, 1.0), ("wall", "wall"))
        u = velocity_from_functions(
            grid,
            [lambda x, y: np.sin(np.pi * x) * np.cos(np.pi * y), lambda x, y: 0.0 * x],
        )
        exact = np.pi * np.cos(np.pi * grid.mesh(grid.center)[0]) * np.cos(np.pi * grid.mesh(grid.center)[1])
        errors.append(np.max(np.abs(divergence(u).values - exact)))
    assert 3.5 < errors[0] / errors[1] < 4.5


def test_laplacian_keeps_location(box_grid, random_scalar):
    s = random_scalar(box_grid, stagger=(True, False))
    out = laplacian(s)
    assert out.stagger == (True, False)
    assert isinstance(out, ScalarField)
