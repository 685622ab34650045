"""
Computational domain: an axis-aligned box with periodic or flat free-slip
walls per axis, plus the staggered (MAC) layout every field lives on.

A location is described by a staggering tuple of booleans, one per axis.
``True`` on axis ``a`` means the entry sits on faces normal to ``a``.
Cell centers are all-``False``; velocity component ``i`` is staggered on
axis ``i`` only; the off-diagonal gradient entry ``(i, j)`` sits on the
edge staggered on both ``i`` and ``j``.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

MIN_CELLS = 4

Stagger = Tuple[bool, ...]


class GridError(ValueError):
    """Raised when a grid description is not a valid computational domain."""


class AxisKind(str, Enum):
    PERIODIC = "periodic"
    WALL = "wall"


@dataclass(frozen=True)
class BoundaryFrame:
    """Outward unit normal and unit tangents of one flat wall face."""

    normal: Tuple[float, ...]
    tangents: Tuple[Tuple[float, ...], ...]

    @property
    def axis(self) -> int:
        return int(np.flatnonzero(np.asarray(self.normal))[0])

    @property
    def side(self) -> int:
        """-1 for the low wall of the axis, +1 for the high wall."""
        return int(np.sign(self.normal[self.axis]))


@dataclass(frozen=True)
class Grid:
    dim: int
    n_cells: Tuple[int, ...]
    lengths: Tuple[float, ...]
    axis_kinds: Tuple[AxisKind, ...]
    ghost_width: int = 1
    # grid-level constant shape operator (grad n); flat walls only
    shape_operator: Tuple[Tuple[float, ...], ...] = field(default=(), compare=False)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.n_cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def center(self) -> Stagger:
        return (False,) * self.dim

    def is_wall(self, axis: int) -> bool:
        return self.axis_kinds[axis] == AxisKind.WALL

    @property
    def wall_axes(self) -> Tuple[int, ...]:
        return tuple(a for a in range(self.dim) if self.is_wall(a))

    @property
    def all_periodic(self) -> bool:
        return not self.wall_axes

    def velocity_stagger(self, i: int) -> Stagger:
        return tuple(a == i for a in range(self.dim))

    def edge_stagger(self, i: int, j: int) -> Stagger:
        return tuple(a in (i, j) for a in range(self.dim))

    def gradient_stagger(self, i: int, j: int) -> Stagger:
        """Native location of d_j u_i: cell center when i == j, edge otherwise."""
        return self.center if i == j else self.edge_stagger(i, j)

    def axis_size(self, axis: int, staggered: bool) -> int:
        n = self.n_cells[axis]
        return n + 1 if (staggered and self.is_wall(axis)) else n

    def shape(self, stagger: Stagger) -> Tuple[int, ...]:
        return tuple(self.axis_size(a, s) for a, s in enumerate(stagger))

    def coords(self, axis: int, staggered: bool) -> np.ndarray:
        h = self.h[axis]
        k = np.arange(self.axis_size(axis, staggered), dtype=float)
        return k * h if staggered else (k + 0.5) * h

    def mesh(self, stagger: Stagger) -> List[np.ndarray]:
        axes = [self.coords(a, s) for a, s in enumerate(stagger)]
        return np.meshgrid(*axes, indexing="ij")

    def axis_weights(self, axis: int, staggered: bool) -> np.ndarray:
        w = np.full(self.axis_size(axis, staggered), self.h[axis])
        if staggered and self.is_wall(axis):
            w[0] *= 0.5
            w[-1] *= 0.5
        return w

    def weights(self, stagger: Stagger) -> np.ndarray:
        """Quadrature weights at a location; they sum to the box volume."""
        out = np.ones(())
        for a, s in enumerate(stagger):
            w = self.axis_weights(a, s)
            out = np.multiply.outer(out, w)
        return out

    def boundary_mask(self, stagger: Stagger) -> np.ndarray:
        """True at entries lying on a wall along an axis they are staggered on."""
        mask = np.zeros(self.shape(stagger), dtype=bool)
        for a, s in enumerate(stagger):
            if s and self.is_wall(a):
                index = [slice(None)] * self.dim
                index[a] = 0
                mask[tuple(index)] = True
                index[a] = -1
                mask[tuple(index)] = True
        return mask

    def shape_operator_matrix(self) -> np.ndarray:
        if self.shape_operator:
            return np.asarray(self.shape_operator, dtype=float)
        return np.zeros((self.dim, self.dim))

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "n_cells": list(self.n_cells),
            "lengths": list(self.lengths),
            "axis_kinds": [k.value for k in self.axis_kinds],
        }


def make_grid(
    dim: int,
    n_cells: Sequence[int],
    lengths: Sequence[float],
    axis_kinds: Sequence,
) -> Grid:
    """Validate a box description and build the grid."""
    if dim not in (2, 3):
        raise GridError(f"dim must be 2 or 3, got {dim}")
    n_cells = tuple(int(n) for n in n_cells)
    lengths = tuple(float(L) for L in lengths)
    if len(n_cells) != dim or len(lengths) != dim or len(axis_kinds) != dim:
        raise GridError(
            f"expected {dim} entries for n_cells, lengths and axis_kinds, got "
            f"{len(n_cells)}, {len(lengths)}, {len(axis_kinds)}"
        )
    if any(n < MIN_CELLS for n in n_cells):
        raise GridError(f"grid too coarse: need at least {MIN_CELLS} cells per axis, got {list(n_cells)}")
    if any(not np.isfinite(L) or L <= 0 for L in lengths):
        raise GridError(f"lengths must be positive, got {list(lengths)}")
    try:
        kinds = tuple(AxisKind(k) for k in axis_kinds)
    except ValueError as e:
        raise GridError(f"unknown axis kind: {e}") from e
    return Grid(dim=dim, n_cells=n_cells, lengths=lengths, axis_kinds=kinds)


def boundary_faces(grid: Grid) -> List[Tuple[Tuple[int, ...], BoundaryFrame]]:
    """
    Enumerate every wall face once. The face index addresses the array of
    the velocity component normal to that wall.
    """
    faces = []
    for axis in grid.wall_axes:
        stagger = grid.velocity_stagger(axis)
        shape = grid.shape(stagger)
        others = [range(shape[b]) if b != axis else None for b in range(grid.dim)]
        tangents = tuple(
            tuple(1.0 if c == b else 0.0 for c in range(grid.dim))
            for b in range(grid.dim)
            if b != axis
        )
        for side, boundary_index in ((-1, 0), (1, shape[axis] - 1)):
            normal = tuple(float(side) if c == axis else 0.0 for c in range(grid.dim))
            frame = BoundaryFrame(normal=normal, tangents=tangents)
            ranges = [r if r is not None else (boundary_index,) for r in others]
            for index in np.ndindex(*[len(r) for r in ranges]):
                face = tuple(ranges[b][index[b]] for b in range(grid.dim))
                faces.append((face, frame))
    return faces
