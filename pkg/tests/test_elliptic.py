import numpy as np
import pytest

from src.elliptic import (
    EllipticSolveError,
    helmholtz,
    orthogonality_defect,
    regularity_ratio,
    residual_of_pressure,
    solve_coupled_pressure,
    solve_diffusion,
    solve_dual,
    solve_neumann_poisson,
    solve_pressure,
)
from src.fields import ScalarField, VelocityField, lp_norm, sample_function
from src.grid import make_grid
from src.operators import divergence, gradient, laplacian


@pytest.mark.parametrize("method", ["spectral", "cg"])
def test_poisson_residual(channel_grid, box_grid, grid3d, random_scalar, method):
    """Mean-zero solution whose Laplacian reproduces the compatible rhs"""
    for grid in (channel_grid, box_grid, grid3d):
        rhs = random_scalar(grid).without_mean()
        s = solve_neumann_poisson(rhs, method=method)
        assert s.mean_zero and abs(s.mean()) < 1e-12 * s.max_abs()
        assert lp_norm(laplacian(s) - rhs, 2) <= 1e-9 * lp_norm(rhs, 2)


def test_poisson_matches_dense_oracle(rng):
    """Spectral solve agrees with a least-squares solve of the assembled matrix"""
    grid = make_grid(2, (8, 8), (1.0, 1.5), ("periodic", "wall"))
    n = 64
    matrix = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        matrix[:, k] = laplacian(ScalarField(grid, e.reshape(8, 8))).values.ravel()
    rhs = ScalarField(grid, rng.standard_normal((8, 8))).without_mean()
    dense, *_ = np.linalg.lstsq(matrix, rhs.values.ravel(), rcond=None)
    dense = ScalarField(grid, dense.reshape(8, 8)).without_mean()
    s = solve_neumann_poisson(rhs)
    assert np.allclose(s.values, dense.values, atol=1e-10 * np.max(np.abs(dense.values)))


def test_cosine_is_discrete_eigenfunction():
    """cos modes at cell centers are exact eigenvectors of the Neumann Laplacian"""
    grid = make_grid(2, (16, 8), (1.0, 1.0), ("wall", "wall"))
    h = grid.h
    rhs = sample_function(grid, grid.center, lambda x, y: np.cos(np.pi * x) * np.cos(2 * np.pi * y))
    lam = (2 * np.cos(np.pi * h[0]) - 2) / h[0] ** 2 + (2 * np.cos(2 * np.pi * h[1]) - 2) / h[1] ** 2
    s = solve_neumann_poisson(ScalarField(grid, rhs))
    assert np.allclose(s.values, rhs / lam, atol=1e-12)


def test_solve_on_staggered_interior(channel_grid, random_scalar):
    """Normal-face data: boundary entries are pinned, interior solves the Dirichlet problem"""
    stagger = channel_grid.velocity_stagger(1)
    rhs = random_scalar(channel_grid, stagger)
    s = solve_neumann_poisson(rhs)
    assert not s.values[:, [0, -1]].any()
    residual = laplacian(s).values - rhs.values
    assert np.max(np.abs(residual[:, 1:-1])) <= 1e-9 * np.max(np.abs(rhs.values))


def test_incompatible_rhs_mean_removed(box_grid):
    rhs = ScalarField(box_grid, np.ones((16, 16)))
    s = solve_neumann_poisson(rhs)
    assert np.allclose(s.values, 0.0)


def test_pressure_is_q_over_epsilon(channel_grid, random_velocity):
    """-eps lap p + div u = 0 solves to p = q / eps"""
    u = random_velocity(channel_grid)
    q = helmholtz(u).q
    for eps in (1.0, 1e-3):
        p = solve_pressure(u, eps)
        assert np.allclose(p.values, q.values / eps, rtol=0, atol=1e-10 * np.max(np.abs(q.values)) / eps)
        assert residual_of_pressure(p, u, eps) <= 1e-9 * lp_norm(divergence(u), 2)


def test_pressure_requires_positive_epsilon(channel_grid):
    with pytest.raises(ValueError, match="epsilon must be > 0"):
        solve_pressure(VelocityField.zeros(channel_grid), 0.0)


def test_helmholtz_decomposition(box_grid, random_velocity):
    """u = Pu + Qu with Pu solenoidal and orthogonal to Qu"""
    u = random_velocity(box_grid)
    dec = helmholtz(u)
    assert lp_norm(divergence(dec.pu), 2) <= 1e-9 * lp_norm(divergence(u), 2)
    assert abs(orthogonality_defect(dec)) <= 1e-10 * lp_norm(u, 2) ** 2
    assert np.allclose((dec.pu + dec.qu).components[0], u.components[0])


def test_helmholtz_of_gradient_field(channel_grid, random_scalar):
    """A pure gradient has no solenoidal part"""
    u = gradient(random_scalar(channel_grid))
    assert helmholtz(u).pu.max_abs() <= 1e-9 * u.max_abs()


def test_diffusion_solve(channel_grid, random_velocity):
    """(I - tau lap) v = r componentwise"""
    r = random_velocity(channel_grid)
    tau = 0.01
    v = solve_diffusion(r, tau)
    for i in range(2):
        comp = v.component(i)
        residual = comp.values - tau * laplacian(comp).values - r.components[i]
        interior = ~channel_grid.boundary_mask(comp.stagger)
        assert np.max(np.abs(residual[interior])) <= 1e-9 * np.max(np.abs(r.components[i]))


def test_coupled_pressure_solve(box_grid, random_velocity):
    """(eps + tau) lap p - tau eps lap^2 p = div v"""
    v = random_velocity(box_grid)
    eps, tau = 1e-2, 1e-3
    p = solve_coupled_pressure(v, eps, tau)
    lap = laplacian(p)
    lhs = lap * (eps + tau) - laplacian(lap) * (tau * eps)
    rhs = divergence(v).without_mean()
    assert lp_norm(lhs - rhs, 2) <= 1e-8 * lp_norm(rhs, 2)


def test_dual_problem(box_grid, random_scalar):
    """g solves lap g = |p|^(-1/3) p (regularised) and the ratio is finite"""
    p = random_scalar(box_grid).without_mean()
    dual = solve_dual(p)
    assert dual.delta > 0
    assert np.isfinite(regularity_ratio(p, dual.g))
    zero = solve_dual(ScalarField.zeros(box_grid), delta=1e-8)
    assert not zero.g.values.any()
    with pytest.raises(ValueError):
        solve_dual(p, delta=0.0)


def test_unknown_method_rejected(box_grid):
    with pytest.raises(ValueError, match="unknown elliptic method"):
        solve_neumann_poisson(ScalarField.zeros(box_grid), method="multigrid")


def test_cg_failure_raises(random_scalar):
    """An unreachable tolerance surfaces as EllipticSolveError"""
    grid = make_grid(2, (8, 8), (1.0, 1.0), ("wall", "wall"))
    rhs = random_scalar(grid).without_mean()
    with pytest.raises(EllipticSolveError) as info:
        solve_neumann_poisson(rhs, tol=1e-30, method="cg")
    assert info.value.residual > 0


def _dense_laplacian(grid):
    n = grid.n_cells[0] * grid.n_cells[1]
    matrix = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        matrix[:, k] = laplacian(ScalarField(grid, e.reshape(grid.n_cells))).values.ravel()
    return matrix


def test_dual_matches_dense_oracle():
    """g agrees with a least-squares solve against the regularised rhs"""
    grid = make_grid(2, (8, 8), (1.0, 1.0), ("wall", "wall"))
    p = ScalarField(grid, sample_function(grid, grid.center, lambda x, y: np.cos(np.pi * y))).without_mean()
    delta = 1e-8
    rhs = (np.abs(p.values) + delta) ** (-1.0 / 3.0) * p.values
    rhs = rhs - rhs.mean()
    dense, *_ = np.linalg.lstsq(_dense_laplacian(grid), rhs.ravel(), rcond=None)
    dense = ScalarField(grid, dense.reshape(8, 8)).without_mean()
    dual = solve_dual(p, delta=delta)
    assert np.allclose(dual.g.values, dense.values, atol=1e-8 * np.max(np.abs(dense.values)))


def test_dual_insensitive_to_small_delta(box_grid, random_scalar):
    p = random_scalar(box_grid).without_mean()
    coarse = solve_dual(p, delta=1e-8).g
    fine = solve_dual(p, delta=1e-10).g
    assert lp_norm(coarse - fine, 2) <= 1e-4 * lp_norm(fine, 2)


def test_poisson_second_order():
    """Manufactured solution cos(2 pi x) cos(pi y) converges at second order"""
    errors = []
    for n in (16, 32, 64):
        grid = make_grid(2, (n, n), (1.0, 1.0), ("periodic", "wall"))
        rhs = sample_function(grid, grid.center, lambda x, y: np.cos(2 * np.pi * x) * np.cos(np.pi * y))
        exact = -rhs / (5.0 * np.pi**2)
        s = solve_neumann_poisson(ScalarField(grid, rhs))
        errors.append(float(np.max(np.abs(s.values - exact))))
    orders = [np.log2(a / b) for a, b in zip(errors, errors[1:])]
    assert min(orders) >= 1.8
