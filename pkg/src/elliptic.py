"""
Neumann-Laplacian solves on the box.

Every operator solved here is a polynomial in the discrete Laplacian,
``shift * I + lap * L + bilap * L^2``, applied to data at one staggered
location. The default method diagonalises L exactly with real-to-real and
complex FFTs (DCT-II on cell-centred wall axes, DST-I on the interior faces
of a normal component, FFT on periodic axes). ``method="cg"`` runs SciPy
conjugate gradients on the mean-zero subspace instead.
"""

import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
from scipy import fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from src.fields import ScalarField, VelocityField, inner_product, lp_norm, second_difference
from src.grid import Grid, Stagger
from src.observability.metrics import ELLIPTIC_SECONDS, ELLIPTIC_SOLVES, RHS_MEAN_SUBTRACTIONS
from src.observability.structured_logger import StructuredLogger
from src.operators import divergence, gradient, gradient_entries_norm, laplacian, velocity_gradient

DEFAULT_TOL = 1e-10
DUAL_EXPONENT = 5.0 / 3.0
COMPATIBILITY_TOL = 1e-10
METHODS = ("spectral", "cg")

logger = StructuredLogger(__name__)


class EllipticSolveError(RuntimeError):
    """A solve missed its residual target; carries the final relative residual."""

    def __init__(self, message: str, residual: float, iterations: Optional[int] = None):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Operator:
    shift: float = 0.0
    lap: float = 1.0
    bilap: float = 0.0
    name: str = "poisson"

    @property
    def singular(self) -> bool:
        return self.shift == 0.0


POISSON = Operator()


@dataclass
class HelmholtzDecomposition:
    pu: VelocityField
    q: ScalarField
    qu: VelocityField


@dataclass
class DualField:
    g: ScalarField
    delta: float
    alpha: float = DUAL_EXPONENT


# ---------------------------------------------------------------------------
# spectral machinery
# ---------------------------------------------------------------------------

def _has_kernel(grid: Grid, stagger: Stagger) -> bool:
    """Constants lie in the Laplacian kernel unless a wall-normal axis pins them."""
    return not any(s and grid.is_wall(a) for a, s in enumerate(stagger))


@lru_cache(maxsize=64)
def _eigenvalues(grid: Grid, stagger: Stagger) -> np.ndarray:
    lam = np.zeros(())
    for a, s in enumerate(stagger):
        n, h = grid.n_cells[a], grid.h[a]
        if not grid.is_wall(a):
            k = np.arange(n)
            axis_lam = (2.0 * np.cos(2.0 * np.pi * k / n) - 2.0) / h**2
        elif s:
            k = np.arange(1, n)
            axis_lam = (2.0 * np.cos(np.pi * k / n) - 2.0) / h**2
        else:
            k = np.arange(n)
            axis_lam = (2.0 * np.cos(np.pi * k / n) - 2.0) / h**2
        lam = np.add.outer(lam, axis_lam)
    return lam


def _interior(a: np.ndarray, grid: Grid, stagger: Stagger) -> np.ndarray:
    index = tuple(slice(1, -1) if (s and grid.is_wall(ax)) else slice(None) for ax, s in enumerate(stagger))
    return a[index]


def _embed(interior: np.ndarray, grid: Grid, stagger: Stagger) -> np.ndarray:
    out = np.zeros(grid.shape(stagger))
    index = tuple(slice(1, -1) if (s and grid.is_wall(ax)) else slice(None) for ax, s in enumerate(stagger))
    out[index] = interior
    return out


def _forward(a: np.ndarray, grid: Grid, stagger: Stagger) -> np.ndarray:
    out = a
    periodic = []
    for ax, s in enumerate(stagger):
        if not grid.is_wall(ax):
            periodic.append(ax)
        elif s:
            out = sfft.dst(out, type=1, axis=ax, norm="ortho")
        else:
            out = sfft.dct(out, type=2, axis=ax, norm="ortho")
    if periodic:
        out = sfft.fftn(out, axes=periodic)
    return out


def _inverse(coef: np.ndarray, grid: Grid, stagger: Stagger) -> np.ndarray:
    periodic = [ax for ax in range(grid.dim) if not grid.is_wall(ax)]
    out = coef
    if periodic:
        out = sfft.ifftn(out, axes=periodic).real
    for ax, s in enumerate(stagger):
        if not grid.is_wall(ax):
            continue
        if s:
            out = sfft.idst(out, type=1, axis=ax, norm="ortho")
        else:
            out = sfft.idct(out, type=2, axis=ax, norm="ortho")
    return np.real(out)


def _spectral_solve(rhs: np.ndarray, grid: Grid, stagger: Stagger, op: Operator) -> np.ndarray:
    lam = _eigenvalues(grid, stagger)
    symbol = op.shift + op.lap * lam + op.bilap * lam**2
    coef = _forward(_interior(rhs, grid, stagger), grid, stagger)
    zero = symbol == 0.0
    safe = np.where(zero, 1.0, symbol)
    coef = np.where(zero, 0.0, coef / safe)
    return _embed(_inverse(coef, grid, stagger), grid, stagger)


# ---------------------------------------------------------------------------
# conjugate gradients
# ---------------------------------------------------------------------------

def _apply(x: np.ndarray, grid: Grid, stagger: Stagger, op: Operator) -> np.ndarray:
    lx = second_difference(x, stagger, grid)
    out = op.shift * x + op.lap * lx
    if op.bilap:
        out = out + op.bilap * second_difference(lx, stagger, grid)
    return out


def _cg_solve(rhs: np.ndarray, grid: Grid, stagger: Stagger, op: Operator, tol: float) -> Tuple[np.ndarray, int]:
    shape = grid.shape(stagger)
    mask = grid.boundary_mask(stagger)
    weights = grid.weights(stagger)
    # definite sign: -L is positive semi-definite
    sign = -1.0 if op.lap > 0 or (op.lap == 0 and op.bilap < 0) else 1.0
    kernel = op.singular and _has_kernel(grid, stagger)

    def project(v):
        v = np.where(mask, 0.0, v)
        if kernel:
            v = v - np.sum(weights * v) / np.sum(weights)
        return v

    def matvec(flat):
        x = project(flat.reshape(shape))
        return project(sign * _apply(x, grid, stagger, op)).ravel()

    n = int(np.prod(shape))
    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    b = project(sign * rhs).ravel()
    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    x, info = cg(A, b, rtol=0.1 * tol, atol=0.0, maxiter=20 * n, callback=count)
    x = project(x.reshape(shape))
    if info != 0:
        residual = float(np.linalg.norm(A.matvec(x.ravel()) - b) / max(np.linalg.norm(b), 1e-300))
        raise EllipticSolveError(f"conjugate gradients did not converge for {op.name}", residual, iterations)
    return x, iterations


# ---------------------------------------------------------------------------
# public solves
# ---------------------------------------------------------------------------

def solve_operator(
    rhs: ScalarField,
    op: Operator = POISSON,
    tol: float = DEFAULT_TOL,
    method: str = "spectral",
) -> ScalarField:
    """Solve ``op(s) = rhs`` at the rhs location; singular operators return mean-zero s."""
    if method not in METHODS:
        raise ValueError(f"unknown elliptic method {method!r}; expected one of {METHODS}")
    grid, stagger = rhs.grid, rhs.stagger
    values = np.where(grid.boundary_mask(stagger), 0.0, rhs.values)
    kernel = op.singular and _has_kernel(grid, stagger)
    if kernel:
        scale = float(np.max(np.abs(values))) if values.size else 0.0
        mean = rhs.mean()
        if abs(mean) > COMPATIBILITY_TOL * scale:
            RHS_MEAN_SUBTRACTIONS.labels(operator=op.name).inc()
            logger.debug("subtracting incompatible rhs mean", operator=op.name, mean=mean)
        values = values - mean

    start = time.perf_counter()
    if method == "spectral":
        solution = _spectral_solve(values, grid, stagger, op)
        iterations = None
    else:
        solution, iterations = _cg_solve(values, grid, stagger, op, tol)
    if kernel:
        solution = solution - ScalarField(grid, solution, stagger=stagger).mean()
    ELLIPTIC_SECONDS.observe(time.perf_counter() - start)
    ELLIPTIC_SOLVES.labels(method=method, operator=op.name).inc()

    target = ScalarField(grid, values, stagger=stagger)
    result = ScalarField(grid, solution, mean_zero=kernel, stagger=stagger)
    residual_norm = lp_norm(ScalarField(grid, _apply(solution, grid, stagger, op) - values, stagger=stagger), 2)
    rhs_norm = lp_norm(target, 2)
    if residual_norm > tol * rhs_norm and residual_norm > 0.0:
        relative = residual_norm / rhs_norm if rhs_norm > 0 else float("inf")
        logger.error("elliptic residual above tolerance", operator=op.name, method=method, residual=relative)
        raise EllipticSolveError(f"{op.name} solve missed tolerance {tol:.1e}", relative, iterations)
    return result


def solve_neumann_poisson(rhs: ScalarField, tol: float = DEFAULT_TOL, method: str = "spectral") -> ScalarField:
    """Mean-zero s with laplacian(s) = rhs (rhs mean removed when incompatible)."""
    return solve_operator(rhs, POISSON, tol=tol, method=method)


def solve_pressure(u: VelocityField, epsilon: float, tol: float = DEFAULT_TOL, method: str = "spectral") -> ScalarField:
    """Solve -eps * laplacian(p) + div u = 0 with mean-zero p."""
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return solve_neumann_poisson(divergence(u) / epsilon, tol=tol, method=method)


def helmholtz(u: VelocityField, tol: float = DEFAULT_TOL, method: str = "spectral") -> HelmholtzDecomposition:
    q = solve_neumann_poisson(divergence(u), tol=tol, method=method)
    qu = gradient(q)
    return HelmholtzDecomposition(pu=u - qu, q=q, qu=qu)


def default_delta(p: ScalarField) -> float:
    peak = p.max_abs()
    return 1e-8 * peak if peak > 0 else 1e-8


def dual_rhs(p: ScalarField, delta: float, alpha: float = DUAL_EXPONENT) -> ScalarField:
    """(|p| + delta)^(alpha - 2) p with its mean removed."""
    values = (np.abs(p.values) + delta) ** (alpha - 2.0) * p.values
    return ScalarField(p.grid, values, stagger=p.stagger).without_mean()


def solve_dual(
    p: ScalarField,
    delta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    method: str = "spectral",
) -> DualField:
    delta = default_delta(p) if delta is None else delta
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    g = solve_neumann_poisson(dual_rhs(p, delta), tol=tol, method=method)
    return DualField(g=g, delta=delta)


def solve_diffusion(r: VelocityField, tau: float, tol: float = DEFAULT_TOL, method: str = "spectral") -> VelocityField:
    """Componentwise (I - tau * laplacian) v = r for implicit viscous steps."""
    op = Operator(shift=1.0, lap=-tau, name="diffusion")
    out = []
    for i in range(r.grid.dim):
        out.append(solve_operator(r.component(i), op, tol=tol, method=method).values)
    return VelocityField(r.grid, tuple(out))


def solve_coupled_pressure(
    v: VelocityField,
    epsilon: float,
    tau: float,
    tol: float = DEFAULT_TOL,
    method: str = "spectral",
) -> ScalarField:
    """
    (eps + tau) L p - tau * eps * L^2 p = div v, the pressure of the
    implicit-diffusion step where grad div is carried by the constraint.
    """
    op = Operator(shift=0.0, lap=epsilon + tau, bilap=-tau * epsilon, name="coupled_pressure")
    return solve_operator(divergence(v), op, tol=tol, method=method)


def regularity_ratio(p: ScalarField, g: ScalarField) -> float:
    """||D^2 g||_{5/2} / ||p||_{5/3}^{2/3}; 0 when p vanishes."""
    denom = lp_norm(p, DUAL_EXPONENT) ** (2.0 / 3.0)
    if denom == 0.0:
        return 0.0
    return gradient_entries_norm(velocity_gradient(gradient(g)), 2.5) / denom


def orthogonality_defect(decomposition: HelmholtzDecomposition) -> float:
    return inner_product(decomposition.pu, decomposition.qu)


def residual_of_pressure(p: ScalarField, u: VelocityField, epsilon: float) -> float:
    """||-eps * laplacian(p) + div u||_2."""
    return lp_norm(divergence(u) - laplacian(p) * epsilon, 2)
