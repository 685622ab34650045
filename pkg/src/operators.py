"""
Second-order staggered difference operators.

All operators are pure functions of boundary-enforced fields. Gradient and
divergence are exact negative adjoints; the velocity gradient is kept on its
native locations (diagonal entries at cell centers, off-diagonal entries on
edges) so that the flat-wall energy identity and the skew-symmetry of the
nonlinear term hold to round-off.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.fields import (
    ScalarField,
    VelocityField,
    avg_to_center,
    avg_to_face,
    diff_to_center,
    diff_to_face,
    enforce_boundary,
    inner_product,
    lp_norm,
    second_difference,
)
from src.grid import Grid

GradientEntries = Dict[Tuple[int, int], ScalarField]


@dataclass
class TensorField:
    """dim x dim cell-centred tensor; ``components[i, j]`` is one array."""

    grid: Grid
    components: np.ndarray

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.components[i, j]

    def is_symmetric(self) -> bool:
        return all(
            np.array_equal(self.components[i, j], self.components[j, i])
            for i in range(self.grid.dim)
            for j in range(i + 1, self.grid.dim)
        )

    def frobenius_sq(self) -> float:
        w = self.grid.weights(self.grid.center)
        return float(np.sum(w * np.sum(self.components**2, axis=(0, 1))))


def gradient(s: ScalarField) -> VelocityField:
    grid = s.grid
    return VelocityField(grid, tuple(diff_to_face(s.values, i, grid) for i in range(grid.dim)))


def divergence(u: VelocityField) -> ScalarField:
    grid = u.grid
    total = np.zeros(grid.shape(grid.center))
    for i, c in enumerate(u.components):
        total += diff_to_center(c, i, grid)
    return ScalarField(grid, total)


def laplacian(s: ScalarField) -> ScalarField:
    """Neumann Laplacian div(grad s); the operator every elliptic solve inverts."""
    return ScalarField(s.grid, second_difference(s.values, s.stagger, s.grid), stagger=s.stagger)


def vector_laplacian(u: VelocityField) -> VelocityField:
    grid = u.grid
    out = VelocityField(grid, tuple(second_difference(c, u.stagger(i), grid) for i, c in enumerate(u.components)))
    return enforce_boundary(out)


def velocity_gradient(u: VelocityField) -> GradientEntries:
    """d_j u_i at native locations, keyed by (i, j). Free-slip walls give zero edge values."""
    grid = u.grid
    entries = {}
    for i, c in enumerate(u.components):
        for j in range(grid.dim):
            if i == j:
                values = diff_to_center(c, i, grid)
            else:
                values = diff_to_face(c, j, grid)
            entries[(i, j)] = ScalarField(grid, values, stagger=grid.gradient_stagger(i, j))
    return entries


def edge_deformation(u: VelocityField) -> GradientEntries:
    """Du at native locations; entries (i, j) and (j, i) share one array."""
    g = velocity_gradient(u)
    out = {}
    for (i, j), entry in g.items():
        if i == j:
            out[(i, j)] = entry
        elif i < j:
            sym = ScalarField(u.grid, 0.5 * (entry.values + g[(j, i)].values), stagger=entry.stagger)
            out[(i, j)] = sym
            out[(j, i)] = sym
    return out


def deformation(u: VelocityField) -> TensorField:
    """D u = (grad u + grad u^T) / 2 averaged to cell centers."""
    grid = u.grid
    d = edge_deformation(u)
    comps = np.zeros((grid.dim, grid.dim) + grid.shape(grid.center))
    for (i, j), entry in d.items():
        if i == j:
            comps[i, i] = entry.values
        elif i < j:
            centred = avg_to_center(avg_to_center(entry.values, i, grid), j, grid)
            comps[i, j] = centred
            comps[j, i] = centred
    return TensorField(grid, comps)


def deformation_inner(u: VelocityField, v: VelocityField) -> float:
    """(Du, Dv) summed over all entries on native locations."""
    du, dv = edge_deformation(u), edge_deformation(v)
    return sum(inner_product(du[key], dv[key]) for key in du)


def gradient_norm_sq(u: VelocityField) -> float:
    return sum(inner_product(e, e) for e in velocity_gradient(u).values())


def gradient_entries_norm(entries: GradientEntries, p: float) -> float:
    """l^p-sum norm over all entries of a gradient-like collection."""
    if np.isinf(p):
        return max(lp_norm(e, p) for e in entries.values())
    return sum(lp_norm(e, p) ** p for e in entries.values()) ** (1.0 / p)


def div_deformation(u: VelocityField) -> VelocityField:
    """div(Du), face-centred; 2 * div_deformation(u) = laplacian + grad div exactly."""
    grid = u.grid
    d = edge_deformation(u)
    out = []
    for i in range(grid.dim):
        acc = diff_to_face(d[(i, i)].values, i, grid)
        for j in range(grid.dim):
            if j != i:
                acc = acc + diff_to_center(d[(i, j)].values, j, grid)
        out.append(acc)
    return enforce_boundary(VelocityField(grid, tuple(out)))


def nonlinear_term(u: VelocityField) -> VelocityField:
    """
    nl(u, u) = div(u (x) u) - u div(u) / 2 with arithmetic-mean interpolation.
    (nl(u, u), u) = 0 to round-off for every u with u.n = 0, solenoidal or not.
    """
    grid = u.grid
    div_u = divergence(u).values
    out = []
    for i, ui in enumerate(u.components):
        centred = avg_to_center(ui, i, grid)
        acc = diff_to_face(centred * centred, i, grid)
        for j, uj in enumerate(u.components):
            if j == i:
                continue
            flux = avg_to_face(uj, i, grid) * avg_to_face(ui, j, grid)
            acc = acc + diff_to_center(flux, j, grid)
        acc = acc - 0.5 * ui * avg_to_face(div_u, i, grid)
        out.append(acc)
    return enforce_boundary(VelocityField(grid, tuple(out)))


def boundary_energy_term(u: VelocityField, shape_operator: Optional[np.ndarray] = None) -> float:
    """
    Surface quadrature of u . (grad n) . u over the walls. ``shape_operator``
    overrides the grid constant; flat walls give exactly 0.
    """
    grid = u.grid
    S = grid.shape_operator_matrix() if shape_operator is None else np.asarray(shape_operator, dtype=float)
    if not grid.wall_axes or not np.any(S):
        return 0.0
    h = grid.h
    total = 0.0
    for a in grid.wall_axes:
        area = float(np.prod([h[b] for b in range(grid.dim) if b != a]))
        for k in (0, -1):
            vec = []
            for b, c in enumerate(u.components):
                if b == a:
                    face = np.take(c, k, axis=a)
                else:
                    face = np.take(avg_to_face(avg_to_center(c, b, grid), a, grid), k, axis=a)
                vec.append(face)
            vec = np.stack(vec)
            total += area * float(np.sum(np.einsum("i...,ij,j...->...", vec, S, vec)))
    return total
