"""Initial velocity fields. Every selector is projected with P and boundary-enforced."""

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.elliptic import DEFAULT_TOL, helmholtz
from src.fields import VelocityField, enforce_boundary, velocity_from_functions
from src.grid import Grid

SELECTORS = ("taylor_green", "solenoidal_random", "from_file", "zero")


class InitialConditionError(ValueError):
    pass


@dataclass(frozen=True)
class InitialCondition:
    selector: str = "taylor_green"
    seed: int = 0
    band: Tuple[int, int] = (1, 4)
    amplitude: float = 1.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.selector not in SELECTORS:
            raise InitialConditionError(f"unknown initial condition {self.selector!r}; expected one of {SELECTORS}")
        lo, hi = self.band
        if lo < 1 or hi < lo:
            raise InitialConditionError(f"band must satisfy 1 <= low <= high, got {self.band}")
        if self.selector == "from_file" and not self.path:
            raise InitialConditionError("from_file needs a path")


def wavenumber(grid: Grid, axis: int, mode: int = 1) -> float:
    """Lowest admissible wavenumber times ``mode``: half-waves on walls, full waves when periodic."""
    base = np.pi if grid.is_wall(axis) else 2.0 * np.pi
    return base * mode / grid.lengths[axis]


def taylor_green(grid: Grid, amplitude: float = 1.0) -> VelocityField:
    """
    (sin k0 x cos k1 y, -(k0/k1) cos k0 x sin k1 y) times cos k_z z in 3D.
    On the unit square with walls this is (sin pi x cos pi y, -cos pi x sin pi y).
    """
    k = [wavenumber(grid, a) for a in range(grid.dim)]

    def extra(coords):
        out = 1.0
        for a in range(2, grid.dim):
            out = out * np.cos(k[a] * coords[a])
        return out

    fns = [
        lambda *x: amplitude * np.sin(k[0] * x[0]) * np.cos(k[1] * x[1]) * extra(x),
        lambda *x: -amplitude * (k[0] / k[1]) * np.cos(k[0] * x[0]) * np.sin(k[1] * x[1]) * extra(x),
    ]
    fns += [lambda *x: 0.0] * (grid.dim - 2)
    return velocity_from_functions(grid, fns)


def modal_field(grid: Grid, rng: np.random.Generator, band: Tuple[int, int], n_modes: int = 6) -> VelocityField:
    """
    Random sum of low modes compatible with the walls: the normal component
    uses sines on its own wall axis, tangential components use cosines.
    """
    lo, hi = band
    components = []
    for i in range(grid.dim):
        stagger = grid.velocity_stagger(i)
        mesh = grid.mesh(stagger)
        total = np.zeros(grid.shape(stagger))
        for _ in range(n_modes):
            modes = rng.integers(0, hi + 1, size=grid.dim)
            modes[rng.integers(0, grid.dim)] = rng.integers(lo, hi + 1)
            if grid.is_wall(i) and modes[i] == 0:
                modes[i] = lo
            term = np.full(grid.shape(stagger), rng.normal())
            for a in range(grid.dim):
                kx = wavenumber(grid, a, int(modes[a])) * mesh[a]
                if not grid.is_wall(a):
                    term = term * np.cos(kx + rng.uniform(0.0, 2.0 * np.pi))
                elif a == i:
                    term = term * np.sin(kx)
                else:
                    term = term * np.cos(kx)
            total += term
        components.append(total)
    return VelocityField(grid, tuple(components))


def project(u: VelocityField, tol: float = DEFAULT_TOL, method: str = "spectral") -> VelocityField:
    return enforce_boundary(helmholtz(enforce_boundary(u), tol=tol, method=method).pu)


def solenoidal_random(
    grid: Grid,
    seed: int,
    band: Tuple[int, int] = (1, 4),
    amplitude: float = 1.0,
    tol: float = DEFAULT_TOL,
    method: str = "spectral",
) -> VelocityField:
    rng = np.random.default_rng(seed)
    u = project(modal_field(grid, rng, band), tol=tol, method=method)
    peak = u.max_abs()
    if peak == 0.0:
        raise InitialConditionError(f"random modes in band {band} vanish after projection on this grid")
    return u * (amplitude / peak)


def initial_condition(
    selector: Union[str, InitialCondition],
    grid: Grid,
    tol: float = DEFAULT_TOL,
    method: str = "spectral",
) -> VelocityField:
    ic = InitialCondition(selector=selector) if isinstance(selector, str) else selector
    if ic.selector == "zero":
        return VelocityField.zeros(grid)
    if ic.selector == "taylor_green":
        u = taylor_green(grid, ic.amplitude)
    elif ic.selector == "solenoidal_random":
        return solenoidal_random(grid, ic.seed, ic.band, ic.amplitude, tol=tol, method=method)
    else:
        from src.persistence import read_snapshot

        u = read_snapshot(ic.path, grid).u
    return project(u, tol=tol, method=method)
