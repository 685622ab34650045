"""
Invariant suite behind ``check``: discrete identities that hold to
round-off on any grid, exercised on random fields.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from src.diagnostics.korn import korn_ratio
from src.diagnostics.ledger import check_energy_identity
from src.elliptic import helmholtz, orthogonality_defect, solve_pressure
from src.fields import ScalarField, VelocityField, enforce_boundary, inner_product, lp_norm
from src.grid import Grid, make_grid
from src.observability.structured_logger import StructuredLogger
from src.operators import (
    div_deformation,
    divergence,
    gradient,
    nonlinear_term,
    vector_laplacian,
)

logger = StructuredLogger(__name__)

IDENTITY_TOL = 1e-12
SOLVER_TOL = 1e-9
PRESSURE_EPSILONS = (1.0, 1e-3)
KORN_SAMPLES = 20

NonlinearTerm = Callable[[VelocityField], VelocityField]


@dataclass
class CheckResult:
    name: str
    grid: str
    value: float
    threshold: float
    passed: bool

    def as_list(self) -> list:
        return [self.name, self.grid, self.value, self.threshold, self.passed]


CHECK_COLUMNS = ["name", "grid", "value", "threshold", "passed"]


def suite_grids(grid_size: int) -> List[Grid]:
    n3 = max(4, grid_size // 2)
    return [
        make_grid(2, (grid_size, grid_size), (1.0, 1.0), ("periodic", "wall")),
        make_grid(2, (grid_size, grid_size), (1.0, 2.0), ("wall", "wall")),
        make_grid(3, (n3, n3, n3), (1.0, 1.0, 1.0), ("wall", "periodic", "wall")),
    ]


def _label(grid: Grid) -> str:
    kinds = ",".join(k.value for k in grid.axis_kinds)
    return f"{'x'.join(str(n) for n in grid.n_cells)}[{kinds}]"


def _random_velocity(grid: Grid, rng: np.random.Generator) -> VelocityField:
    comps = tuple(rng.standard_normal(grid.shape(grid.velocity_stagger(i))) for i in range(grid.dim))
    return enforce_boundary(VelocityField(grid, comps))


def _random_scalar(grid: Grid, rng: np.random.Generator) -> ScalarField:
    return ScalarField(grid, rng.standard_normal(grid.shape(grid.center)))


def _relative(defect: float, scale: float) -> float:
    return abs(defect) / scale if scale > 0 else abs(defect)


def _worst_over(trials: int, rng, measure) -> float:
    return max(measure(rng) for _ in range(trials))


def check_grid(grid: Grid, trials: int, seed: int, nonlinear: Optional[NonlinearTerm] = None) -> List[CheckResult]:
    nl = nonlinear or nonlinear_term
    rng = np.random.default_rng(seed)
    label = _label(grid)

    def adjoint(r):
        s, v = _random_scalar(grid, r), _random_velocity(grid, r)
        g = gradient(s)
        return _relative(inner_product(g, v) + inner_product(s, divergence(v)), lp_norm(g, 2) * lp_norm(v, 2))

    def skew(r):
        u = _random_velocity(grid, r)
        n = nl(u)
        return _relative(inner_product(n, u), lp_norm(n, 2) * lp_norm(u, 2))

    def div_deformation_identity(r):
        u = _random_velocity(grid, r)
        lap = vector_laplacian(u)
        residual = div_deformation(u) * 2.0 - lap - enforce_boundary(gradient(divergence(u)))
        return _relative(residual.max_abs(), lap.max_abs())

    def energy(r):
        return check_energy_identity(_random_velocity(grid, r), quadrature="staggered")

    def projection(r):
        u = _random_velocity(grid, r)
        pu = enforce_boundary(helmholtz(u).pu)
        again = helmholtz(pu).qu
        return _relative(again.max_abs(), u.max_abs())

    def orthogonality(r):
        decomposition = helmholtz(_random_velocity(grid, r))
        scale = lp_norm(decomposition.pu, 2) * lp_norm(decomposition.qu, 2)
        return _relative(orthogonality_defect(decomposition), scale)

    def pressure(r):
        u = _random_velocity(grid, r)
        q = helmholtz(u).q
        worst = 0.0
        for eps in PRESSURE_EPSILONS:
            p = solve_pressure(u, eps)
            expected = q / eps
            worst = max(worst, _relative((p - expected).max_abs(), expected.max_abs()))
        return worst

    results = []
    for name, measure, threshold in (
        ("grad_div_adjoint", adjoint, IDENTITY_TOL),
        ("nonlinear_skew", skew, IDENTITY_TOL),
        ("div_deformation_identity", div_deformation_identity, IDENTITY_TOL),
        ("energy_identity", energy, IDENTITY_TOL),
        ("helmholtz_idempotent", projection, SOLVER_TOL),
        ("helmholtz_orthogonal", orthogonality, SOLVER_TOL),
        ("pressure_equals_q_over_eps", pressure, SOLVER_TOL),
    ):
        value = _worst_over(trials, rng, measure)
        results.append(CheckResult(name, label, value, threshold, value <= threshold))

    if grid.wall_axes:
        ratio = korn_ratio(grid, min(trials, KORN_SAMPLES), seed=seed)
        results.append(CheckResult("korn_positive", label, ratio, 0.0, not math.isnan(ratio) and ratio > 0.0))
    return results


def run_invariant_suite(
    grid_size: int = 16,
    trials: int = 100,
    seed: int = 0,
    nonlinear: Optional[NonlinearTerm] = None,
) -> List[CheckResult]:
    """
    Every identity on every suite grid. The 3D grid gets a tenth of the
    trials. ``nonlinear`` replaces the advection operator (negative controls).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    results: List[CheckResult] = []
    for k, grid in enumerate(suite_grids(grid_size)):
        n = trials if grid.dim == 2 else max(1, trials // 10)
        results.extend(check_grid(grid, n, seed + k, nonlinear))
    failed = [r.name for r in results if not r.passed]
    logger.info("invariant suite finished", checks=len(results), failed=failed)
    return results
