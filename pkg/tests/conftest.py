import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure the project root (which contains the 'src' package) is importable in tests
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from src.fields import ScalarField, VelocityField, enforce_boundary  # noqa: E402
from src.grid import make_grid  # noqa: E402


@pytest.fixture
def channel_grid():
    """16x16 unit box, periodic in x, walls in y"""
    return make_grid(2, (16, 16), (1.0, 1.0), ("periodic", "wall"))


@pytest.fixture
def box_grid():
    """16x16 box with walls on every side"""
    return make_grid(2, (16, 16), (1.0, 1.0), ("wall", "wall"))


@pytest.fixture
def periodic_grid():
    return make_grid(2, (16, 16), (1.0, 1.0), ("periodic", "periodic"))


@pytest.fixture
def grid3d():
    return make_grid(3, (6, 6, 6), (1.0, 1.0, 1.0), ("wall", "periodic", "wall"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_velocity(rng):
    """Factory for boundary-enforced random velocity fields"""

    def make(grid):
        comps = tuple(rng.standard_normal(grid.shape(grid.velocity_stagger(i))) for i in range(grid.dim))
        return enforce_boundary(VelocityField(grid, comps))

    return make


@pytest.fixture
def random_scalar(rng):
    def make(grid, stagger=None):
        stagger = stagger if stagger is not None else grid.center
        return ScalarField(grid, rng.standard_normal(grid.shape(stagger)), stagger=stagger)

    return make


@pytest.fixture
def toml_config(tmp_path):
    """Write a small run configuration and return its path"""

    def write(extra: str = "", solver: str = "epsilon = 0.01\nT = 0.01\n"):
        text = (
            "[grid]\n"
            "dim = 2\n"
            "n_cells = [8, 8]\n"
            "lengths = [1.0, 1.0]\n"
            'axis_kinds = ["periodic", "wall"]\n'
            "\n[solver]\n" + solver + "\n"
            f'[output]\ndirectory = "{(tmp_path / "out").as_posix()}"\n' + extra
        )
        path = tmp_path / "run.toml"
        path.write_text(text, encoding="utf-8")
        return path

    return write
