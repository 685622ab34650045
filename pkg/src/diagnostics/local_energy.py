"""
Local (generalized) energy inequality against analytic test functions.

    LHS = int int (|grad u|^2 + |div u|^2 + eps |grad p|^2) phi
    RHS = int int |u|^2/2 (phi_t + lap phi)
        + int int (u |u|^2/2 + p u - eps p grad p - u div u) . grad phi

Each term is evaluated at the native location of its data and integrated in
time with the trapezoid rule; the eps and div-transport corrections are
reported separately so the eps -> 0 form can be read off.

The Laplacian term is paired in flux form, -int grad(|u|^2/2) . grad phi, so
only the continuous first derivatives of phi enter the quadrature (poly2 is
C^1 and its lap phi jumps at the edge of the support).
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence

import numpy as np

from src.diagnostics.bump_functions import BumpFunction
from src.diagnostics.time_integral import TrapezoidIntegral, states_of
from src.fields import avg_to_center, avg_to_face, diff_to_face
from src.operators import divergence, velocity_gradient
from src.stepper import RunObserver, SimState, SolverConfig, StepRecord, stable_dt

LHS_TERMS = ("grad_sq", "div_sq", "eps_grad_p_sq")
RHS_TERMS = (
    "kinetic_time",
    "kinetic_laplacian",
    "transport",
    "pressure_flux",
    "eps_pressure_flux",
    "div_transport",
)
LOCAL_ENERGY_COLUMNS = ["test_function", "lhs", "rhs", "slack", *LHS_TERMS, *RHS_TERMS]


@dataclass
class LocalEnergyReport:
    test_function: str
    lhs: float
    rhs: float
    slack: float
    terms: Dict[str, float] = field(default_factory=dict)

    def as_list(self) -> list:
        return [self.test_function, self.lhs, self.rhs, self.slack] + [
            self.terms[n] for n in LHS_TERMS + RHS_TERMS
        ]


class LocalEnergyAccumulator:
    def __init__(self, phi: BumpFunction, epsilon: float):
        self.phi = phi
        self.epsilon = epsilon
        self.integral = TrapezoidIntegral(LHS_TERMS + RHS_TERMS)
        self._spatial: Dict[tuple, dict] = {}

    def _psi(self, grid, stagger) -> dict:
        key = tuple(stagger)
        if key not in self._spatial:
            self._spatial[key] = self.phi.spatial(grid, stagger)
        return self._spatial[key]

    def densities(self, state: SimState) -> Dict[str, float]:
        theta, dtheta = self.phi.time_factor(state.t)
        if theta == 0.0 and dtheta == 0.0:
            return {n: 0.0 for n in LHS_TERMS + RHS_TERMS}
        u, p, grid, eps = state.u, state.p, state.grid, self.epsilon

        def integral(values, stagger, weight):
            return float(np.sum(grid.weights(stagger) * values * weight))

        out = dict.fromkeys(LHS_TERMS + RHS_TERMS, 0.0)
        for entry in velocity_gradient(u).values():
            out["grad_sq"] += theta * integral(entry.values**2, entry.stagger, self._psi(grid, entry.stagger)["value"])
        div_u = divergence(u).values
        out["div_sq"] = theta * integral(div_u**2, grid.center, self._psi(grid, grid.center)["value"])

        kinetic = 0.5 * sum(avg_to_center(c * c, i, grid) for i, c in enumerate(u.components))
        for i, ui in enumerate(u.components):
            stagger = u.stagger(i)
            psi = self._psi(grid, stagger)
            dpsi = theta * psi["grad"][i]
            p_face = avg_to_face(p.values, i, grid)
            dp = diff_to_face(p.values, i, grid)
            out["eps_grad_p_sq"] += eps * theta * integral(dp**2, stagger, psi["value"])
            out["kinetic_time"] += integral(0.5 * ui**2, stagger, dtheta * psi["value"])
            out["kinetic_laplacian"] -= integral(diff_to_face(kinetic, i, grid), stagger, dpsi)
            out["transport"] += integral(ui * avg_to_face(kinetic, i, grid), stagger, dpsi)
            out["pressure_flux"] += integral(p_face * ui, stagger, dpsi)
            out["eps_pressure_flux"] -= eps * integral(p_face * dp, stagger, dpsi)
            out["div_transport"] -= integral(ui * avg_to_face(div_u, i, grid), stagger, dpsi)
        return out

    def add(self, state: SimState) -> None:
        self.integral.add(state.t, self.densities(state))

    def report(self) -> LocalEnergyReport:
        totals = self.integral.totals
        lhs = sum(totals[n] for n in LHS_TERMS)
        rhs = sum(totals[n] for n in RHS_TERMS)
        return LocalEnergyReport(self.phi.name, lhs, rhs, rhs - lhs, dict(totals))


class LocalEnergyObserver(RunObserver):
    """Streams every accepted step into one accumulator per test function."""

    def __init__(self, test_functions: Sequence[BumpFunction]):
        self.test_functions = list(test_functions)
        self.accumulators: List[LocalEnergyAccumulator] = []

    def on_start(self, state: SimState, config: SolverConfig) -> None:
        dt = config.dt if config.dt is not None else stable_dt(state, config)
        for phi in self.test_functions:
            phi.validate(state.grid, dt, config.T)
        self.accumulators = [LocalEnergyAccumulator(phi, config.epsilon) for phi in self.test_functions]
        for acc in self.accumulators:
            acc.add(state)

    def on_step(self, record: StepRecord, config: SolverConfig) -> None:
        current = SimState(t=record.t, step=record.step, u=record.u, p=record.p)
        for acc in self.accumulators:
            acc.add(current)

    def reports(self) -> List[LocalEnergyReport]:
        return [acc.report() for acc in self.accumulators]


def local_energy_residual(trajectory: Iterable[StepRecord], phi: BumpFunction, epsilon: float) -> LocalEnergyReport:
    records = list(trajectory)
    states = states_of(records)
    if records:
        phi.validate(states[0].grid, max(r.dt for r in records), states[-1].t)
    acc = LocalEnergyAccumulator(phi, epsilon)
    for state in states:
        acc.add(state)
    return acc.report()
