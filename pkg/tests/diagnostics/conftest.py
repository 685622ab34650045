from dataclasses import dataclass
from typing import Dict, List

import pytest

from src.diagnostics.bump_functions import default_library
from src.diagnostics.local_energy import LocalEnergyObserver, LocalEnergyReport
from src.diagnostics.pressure_lemma import PressureLemmaObserver, PressureLemmaReport
from src.diagnostics.weak_form import WeakResidualObserver, WeakResidualReport
from src.grid import make_grid
from src.initial_conditions import InitialCondition
from src.stepper import SolverConfig, run

REFINEMENT_LEVELS = (16, 32, 64)
REFINEMENT_EPSILON = 1e-2
REFINEMENT_T = 0.02


@dataclass
class RefinementLevel:
    n: int
    local_energy: List[LocalEnergyReport]
    pressure_lemma: PressureLemmaReport
    weak: WeakResidualReport


@pytest.fixture(scope="session")
def taylor_green_refinement() -> Dict[int, RefinementLevel]:
    """Taylor-Green on the walled unit square at 16, 32 and 64 cells per side"""
    coarse = make_grid(2, (REFINEMENT_LEVELS[0],) * 2, (1.0, 1.0), ("wall", "wall"))
    # supports fixed on the coarse grid so every level sees the same test functions
    library = default_library(coarse, REFINEMENT_T)
    levels = {}
    for n in REFINEMENT_LEVELS:
        grid = make_grid(2, (n, n), (1.0, 1.0), ("wall", "wall"))
        config = SolverConfig(
            grid=grid, epsilon=REFINEMENT_EPSILON, T=REFINEMENT_T, initial=InitialCondition(selector="taylor_green")
        )
        local = LocalEnergyObserver(library)
        lemma = PressureLemmaObserver()
        weak = WeakResidualObserver()
        run(config, observers=[local, lemma, weak], log_every=0)
        levels[n] = RefinementLevel(n, local.reports(), lemma.report, weak.report())
    return levels
