"""
Nonnegative, compactly supported analytic test functions

    phi(x, t) = theta(t) * prod_a psi_a(x_a)

built from one bump profile per factor, with hard-coded first and second
derivatives so inequality slacks carry no differentiation error.
"""

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from src.grid import Grid, Stagger

PROFILES = ("poly2", "poly3", "sin4")
SUPPORT_MARGIN_CELLS = 2
SUPPORT_MARGIN_STEPS = 2


class BumpFunctionError(ValueError):
    """Raised when a test function's support comes too close to the boundary."""


def _profile(kind: str, x: np.ndarray, a: float, b: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, first and second derivative of a bump on [a, b], peak normalised to 1."""
    inside = (x > a) & (x < b)
    half = 0.5 * (b - a)
    if kind in ("poly2", "poly3"):
        m = 2 if kind == "poly2" else 3
        w = (x - a) * (b - x)
        dw = a + b - 2.0 * x
        scale = half ** (-2 * m)
        f = w**m
        df = m * w ** (m - 1) * dw
        d2f = m * (m - 1) * w ** (m - 2) * dw**2 - 2.0 * m * w ** (m - 1)
    elif kind == "sin4":
        k = np.pi / (b - a)
        s, c = np.sin(k * (x - a)), np.cos(k * (x - a))
        scale = 1.0
        f = s**4
        df = 4.0 * k * s**3 * c
        d2f = k**2 * (12.0 * s**2 * c**2 - 4.0 * s**4)
    else:
        raise BumpFunctionError(f"unknown profile {kind!r}; expected one of {PROFILES}")
    return tuple(np.where(inside, scale * v, 0.0) for v in (f, df, d2f))


@dataclass(frozen=True)
class BumpFunction:
    profile: str
    support: Tuple[Tuple[float, float], ...]
    time_support: Tuple[float, float]
    amplitude: float = 1.0

    @property
    def name(self) -> str:
        return self.profile if self.amplitude == 1.0 else f"{self.profile}x{self.amplitude:g}"

    def scaled(self, factor: float) -> "BumpFunction":
        return replace(self, amplitude=self.amplitude * factor)

    def validate(self, grid: Grid, dt: float, T: float) -> None:
        """Support must stay 2h away from every face and 2 dt away from 0 and T."""
        problems = []
        for axis, (a, b) in enumerate(self.support):
            margin = SUPPORT_MARGIN_CELLS * grid.h[axis]
            if not (a >= margin - 1e-14 and b <= grid.lengths[axis] - margin + 1e-14 and b > a):
                problems.append(f"axis {axis} support [{a:g}, {b:g}] needs margin {margin:g}")
        t0, t1 = self.time_support
        margin = SUPPORT_MARGIN_STEPS * dt
        if not (t0 >= margin - 1e-14 and t1 <= T - margin + 1e-14 and t1 > t0):
            problems.append(f"time support [{t0:g}, {t1:g}] needs margin {margin:g} inside [0, {T:g}]")
        if problems:
            raise BumpFunctionError("; ".join(problems))

    def time_factor(self, t: float) -> Tuple[float, float]:
        f, df, _ = _profile(self.profile, np.asarray(t, dtype=float), *self.time_support)
        return float(f) * self.amplitude, float(df) * self.amplitude

    def spatial(self, grid: Grid, stagger: Stagger) -> dict:
        """psi, grad psi and lap psi sampled at a staggered location."""
        mesh = grid.mesh(stagger)
        factors = [_profile(self.profile, mesh[a], *self.support[a]) for a in range(grid.dim)]
        value = np.ones(grid.shape(stagger))
        for f, _, _ in factors:
            value = value * f
        grad, lap = [], np.zeros(grid.shape(stagger))
        for a in range(grid.dim):
            g = np.ones(grid.shape(stagger))
            l2 = np.ones(grid.shape(stagger))
            for b, (f, df, d2f) in enumerate(factors):
                g = g * (df if b == a else f)
                l2 = l2 * (d2f if b == a else f)
            grad.append(g)
            lap = lap + l2
        return {"value": value, "grad": grad, "lap": lap}


def default_library(grid: Grid, T: float, profiles: Sequence[str] = PROFILES) -> List[BumpFunction]:
    """One test function per profile, with nested supports inside the box and (0, T)."""
    out = []
    for n, profile in enumerate(profiles):
        lo, hi = 0.15 + 0.05 * n, 0.85 - 0.05 * n
        # keep clear of the boundary band on coarse grids
        support = tuple(
            (max(lo * L, (SUPPORT_MARGIN_CELLS + 1) * h), min(hi * L, L - (SUPPORT_MARGIN_CELLS + 1) * h))
            for L, h in zip(grid.lengths, grid.h)
        )
        out.append(BumpFunction(profile=profile, support=support, time_support=(0.1 * T, 0.9 * T)))
    return out
