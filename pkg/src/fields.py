"""
Field storage and algebra on the staggered grid.

Arrays are stored without ghost cells. The ghost convention is applied on
demand by the one-axis stencil helpers below and by ``pad_with_ghosts``:
periodic axes wrap, cell-centred and tangential data mirror evenly across a
wall, and the normal velocity component is mirrored oddly about its zero
boundary face.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.grid import Grid, Stagger

MEAN_ZERO_TOL = 1e-12


class FieldLayoutError(ValueError):
    """Raised when two fields do not share a grid and a staggering."""


# ---------------------------------------------------------------------------
# one-axis stencils
# ---------------------------------------------------------------------------

def _pad_spec(ndim: int, axis: int, before: int, after: int):
    spec = [(0, 0)] * ndim
    spec[axis] = (before, after)
    return spec


def _take(a: np.ndarray, axis: int, sl: slice) -> np.ndarray:
    index = [slice(None)] * a.ndim
    index[axis] = sl
    return a[tuple(index)]


def _pad_to_face(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    if grid.is_wall(axis):
        return np.pad(a, _pad_spec(a.ndim, axis, 1, 1), mode="symmetric")
    return np.pad(a, _pad_spec(a.ndim, axis, 1, 0), mode="wrap")


def _pad_to_center(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    if grid.is_wall(axis):
        return a
    return np.pad(a, _pad_spec(a.ndim, axis, 0, 1), mode="wrap")


def diff_to_face(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Centered difference of data unstaggered on ``axis``; lands on faces."""
    return np.diff(_pad_to_face(a, axis, grid), axis=axis) / grid.h[axis]


def avg_to_face(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    padded = _pad_to_face(a, axis, grid)
    return 0.5 * (_take(padded, axis, slice(1, None)) + _take(padded, axis, slice(None, -1)))


def diff_to_center(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    """Centered difference of data staggered on ``axis``; lands on centers."""
    return np.diff(_pad_to_center(a, axis, grid), axis=axis) / grid.h[axis]


def avg_to_center(a: np.ndarray, axis: int, grid: Grid) -> np.ndarray:
    padded = _pad_to_center(a, axis, grid)
    return 0.5 * (_take(padded, axis, slice(1, None)) + _take(padded, axis, slice(None, -1)))


def second_difference(a: np.ndarray, stagger: Stagger, grid: Grid) -> np.ndarray:
    """Componentwise discrete Laplacian of data living at ``stagger``."""
    out = np.zeros_like(a, dtype=float)
    for axis, staggered in enumerate(stagger):
        if staggered:
            out += diff_to_face(diff_to_center(a, axis, grid), axis, grid)
        else:
            out += diff_to_center(diff_to_face(a, axis, grid), axis, grid)
    return out


def pad_with_ghosts(values: np.ndarray, stagger: Stagger, grid: Grid) -> np.ndarray:
    """Materialize one ghost layer per axis following the boundary convention."""
    out = np.asarray(values, dtype=float)
    w = grid.ghost_width
    for axis, staggered in enumerate(stagger):
        spec = _pad_spec(out.ndim, axis, w, w)
        if not grid.is_wall(axis):
            out = np.pad(out, spec, mode="wrap")
        elif staggered:
            out = np.pad(out, spec, mode="reflect", reflect_type="odd")
        else:
            out = np.pad(out, spec, mode="symmetric")
    return out


# ---------------------------------------------------------------------------
# field types
# ---------------------------------------------------------------------------

@dataclass
class ScalarField:
    """Scalar data at one location (cell centers unless told otherwise)."""

    grid: Grid
    values: np.ndarray
    mean_zero: bool = False
    stagger: Optional[Stagger] = None

    def __post_init__(self):
        if self.stagger is None:
            self.stagger = self.grid.center
        self.values = np.asarray(self.values, dtype=float)
        expected = self.grid.shape(self.stagger)
        if self.values.shape != expected:
            raise FieldLayoutError(f"scalar shape {self.values.shape} does not match layout {expected}")

    @classmethod
    def zeros(cls, grid: Grid, stagger: Optional[Stagger] = None, mean_zero: bool = False) -> "ScalarField":
        stagger = stagger if stagger is not None else grid.center
        return cls(grid, np.zeros(grid.shape(stagger)), mean_zero=mean_zero, stagger=stagger)

    def _like(self, values, mean_zero=None) -> "ScalarField":
        return ScalarField(
            self.grid, values, mean_zero=self.mean_zero if mean_zero is None else mean_zero, stagger=self.stagger
        )

    def copy(self) -> "ScalarField":
        return self._like(self.values.copy())

    def mean(self) -> float:
        w = self.grid.weights(self.stagger)
        return float(np.sum(w * self.values) / self.grid.volume)

    def without_mean(self) -> "ScalarField":
        return self._like(self.values - self.mean(), mean_zero=True)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def check_mean_zero(self, tol: float = MEAN_ZERO_TOL) -> bool:
        return abs(self.mean()) <= tol * max(self.max_abs(), np.finfo(float).tiny)

    def __add__(self, other):
        _require_same_layout(self, other)
        return self._like(self.values + other.values, mean_zero=self.mean_zero and other.mean_zero)

    def __sub__(self, other):
        _require_same_layout(self, other)
        return self._like(self.values - other.values, mean_zero=self.mean_zero and other.mean_zero)

    def __mul__(self, factor: float):
        return self._like(self.values * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor: float):
        return self._like(self.values / factor)

    def __neg__(self):
        return self._like(-self.values)


@dataclass
class VelocityField:
    """One array per velocity component, component i staggered on axis i."""

    grid: Grid
    components: Tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self):
        self.components = tuple(np.asarray(c, dtype=float) for c in self.components)
        if len(self.components) != self.grid.dim:
            raise FieldLayoutError(f"expected {self.grid.dim} components, got {len(self.components)}")
        for i, c in enumerate(self.components):
            expected = self.grid.shape(self.grid.velocity_stagger(i))
            if c.shape != expected:
                raise FieldLayoutError(f"component {i} shape {c.shape} does not match layout {expected}")

    @classmethod
    def zeros(cls, grid: Grid) -> "VelocityField":
        return cls(grid, tuple(np.zeros(grid.shape(grid.velocity_stagger(i))) for i in range(grid.dim)))

    def stagger(self, i: int) -> Stagger:
        return self.grid.velocity_stagger(i)

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.components[i], stagger=self.stagger(i))

    def copy(self) -> "VelocityField":
        return VelocityField(self.grid, tuple(c.copy() for c in self.components))

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.components)

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(c))) for c in self.components)

    def _map(self, fn) -> "VelocityField":
        return VelocityField(self.grid, tuple(fn(c) for c in self.components))

    def __add__(self, other):
        _require_same_layout(self, other)
        return VelocityField(self.grid, tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        _require_same_layout(self, other)
        return VelocityField(self.grid, tuple(a - b for a, b in zip(self.components, other.components)))

    def __mul__(self, factor: float):
        return self._map(lambda c: c * factor)

    __rmul__ = __mul__

    def __truediv__(self, factor: float):
        return self._map(lambda c: c / factor)

    def __neg__(self):
        return self._map(lambda c: -c)


Field = Union[ScalarField, VelocityField]


def _require_same_layout(a: Field, b: Field) -> None:
    if type(a) is not type(b):
        raise FieldLayoutError(f"cannot combine {type(a).__name__} with {type(b).__name__}")
    if a.grid != b.grid:
        raise FieldLayoutError("fields live on different grids")
    if isinstance(a, ScalarField) and a.stagger != b.stagger:
        raise FieldLayoutError(f"staggering {a.stagger} does not match {b.stagger}")


def _pieces(f: Field) -> List[Tuple[np.ndarray, Stagger]]:
    if isinstance(f, VelocityField):
        return [(c, f.stagger(i)) for i, c in enumerate(f.components)]
    return [(f.values, f.stagger)]


# ---------------------------------------------------------------------------
# norms and products
# ---------------------------------------------------------------------------

def lp_norm(f: Field, p: float) -> float:
    """
    (int |f|^p)^(1/p) by quadrature on the field's native locations.

    For velocity fields the component integrals are summed before the root,
    so p = 2 is the Euclidean L2 norm; p = inf is the largest entry.
    """
    if p < 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    pieces = _pieces(f)
    if math.isinf(p):
        return max((float(np.max(np.abs(v))) if v.size else 0.0) for v, _ in pieces)
    total = 0.0
    for values, stagger in pieces:
        w = f.grid.weights(stagger)
        total += float(np.sum(w * np.abs(values) ** p))
    return total ** (1.0 / p)


def inner_product(a: Field, b: Field) -> float:
    _require_same_layout(a, b)
    total = 0.0
    for (va, stagger), (vb, _) in zip(_pieces(a), _pieces(b)):
        total += float(np.sum(a.grid.weights(stagger) * va * vb))
    return total


def enforce_boundary(u: VelocityField) -> VelocityField:
    """
    Return a copy with u.n = 0 on every wall face. Tangential ghost values
    follow the even mirror whenever stencils are applied, so the stored
    arrays only carry the normal constraint.
    """
    out = []
    for i, c in enumerate(u.components):
        c = c.copy()
        if u.grid.is_wall(i):
            c[_boundary_index(c.ndim, i, 0)] = 0.0
            c[_boundary_index(c.ndim, i, -1)] = 0.0
        out.append(c)
    return VelocityField(u.grid, tuple(out))


def wall_normal_max(u: VelocityField) -> float:
    """Largest |u.n| over all wall faces (0 on all-periodic grids)."""
    worst = 0.0
    for i in u.grid.wall_axes:
        c = u.components[i]
        for k in (0, -1):
            worst = max(worst, float(np.max(np.abs(c[_boundary_index(c.ndim, i, k)]))))
    return worst


def _boundary_index(ndim: int, axis: int, k: int):
    index = [slice(None)] * ndim
    index[axis] = k
    return tuple(index)


# ---------------------------------------------------------------------------
# space-time bookkeeping
# ---------------------------------------------------------------------------

@dataclass
class SpaceTimeNorm:
    """
    Running L^r(0, t; L^s) accumulator. ``value`` is int ||f||_s^r dt for
    finite r and sup_t ||f||_s for r = inf.
    """

    r: float
    s: float
    value: float = 0.0
    sample_times: List[float] = field(default_factory=list)

    @property
    def norm(self) -> float:
        if math.isinf(self.r):
            return self.value
        return self.value ** (1.0 / self.r)


def accumulate_space_time_norm(
    norm_state: SpaceTimeNorm,
    f: Union[Field, float],
    dt: float,
    t: Optional[float] = None,
) -> SpaceTimeNorm:
    """Add one rectangle-rule slab dt * ||f||_s^r; mutates and returns ``norm_state``."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    spatial = float(f) if isinstance(f, (int, float, np.floating)) else lp_norm(f, norm_state.s)
    if math.isinf(norm_state.r):
        norm_state.value = max(norm_state.value, spatial)
    else:
        norm_state.value += dt * spatial ** norm_state.r
    last = norm_state.sample_times[-1] if norm_state.sample_times else 0.0
    norm_state.sample_times.append(last + dt if t is None else t)
    return norm_state


def sample_function(grid: Grid, stagger: Stagger, fn) -> np.ndarray:
    """Evaluate ``fn(*coords)`` at a location."""
    return np.asarray(fn(*grid.mesh(stagger)), dtype=float) * np.ones(grid.shape(stagger))


def velocity_from_functions(grid: Grid, fns: Sequence) -> VelocityField:
    return VelocityField(grid, tuple(sample_function(grid, grid.velocity_stagger(i), fn) for i, fn in enumerate(fns)))
