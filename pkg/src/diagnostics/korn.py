"""Empirical Korn-type coercivity: min 2||Dv||^2 / ||grad v||^2 over sampled tangential fields."""

import math
from typing import Optional

import numpy as np

from src.fields import VelocityField, enforce_boundary
from src.grid import Grid
from src.initial_conditions import modal_field
from src.operators import deformation_inner, gradient_norm_sq


def deformation_ratio(u: VelocityField) -> Optional[float]:
    """
    2||Du||^2 / ||grad u||^2. None only when grad u vanishes; a field with
    grad u != 0 and Du = 0 reports 0.
    """
    grad_sq = gradient_norm_sq(u)
    if grad_sq == 0.0:
        return None
    return 2.0 * deformation_inner(u, u) / grad_sq


def korn_ratio(grid: Grid, n_samples: int, seed: int = 0, band=(1, 4)) -> float:
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    best = math.inf
    for _ in range(n_samples):
        ratio = deformation_ratio(enforce_boundary(modal_field(grid, rng, band)))
        if ratio is not None:
            best = min(best, ratio)
    return best if math.isfinite(best) else math.nan
