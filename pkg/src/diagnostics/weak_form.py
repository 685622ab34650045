"""
Weak-form residuals of a recorded trajectory against analytic test data.

Momentum, for a tangential phi with phi(T) = 0:

    int_0^T [-(u, phi_t) + (nl(u), phi) + 2 (Du, D phi) + (grad p, phi)] dt - (u0, phi(0))

Pressure, for a mean-zero psi:

    int_0^T [eps (grad p, grad psi) + (div u, psi)] dt

Each residual is divided by the sum of the absolute values of its terms, with
an absolute floor of 1e-10 ||u0|| ||phi|| (times T for the pressure pairing),
so round-off on a vanishing pairing reports 0 rather than 1.
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.diagnostics.time_integral import TrapezoidIntegral, states_of
from src.fields import diff_to_face
from src.grid import Grid, Stagger
from src.initial_conditions import wavenumber
from src.operators import divergence, edge_deformation, nonlinear_term
from src.stepper import RunObserver, SimState, SolverConfig, StepRecord

MOMENTUM_TERMS = ("time", "nonlinear", "viscous", "pressure")
PRESSURE_TERMS = ("eps_pressure", "divergence")
WEAK_COLUMNS = ["momentum_residual", "pressure_residual", *MOMENTUM_TERMS, "initial", *PRESSURE_TERMS]
MEAN_ZERO_TOL = 1e-10
# relative to ||u0|| ||phi||; terms below it are round-off
NOISE_FLOOR = 1e-10


class WeakFormError(ValueError):
    pass


def _theta(t: float, T: float) -> Tuple[float, float]:
    """cos^2(pi t / 2T) and its derivative; vanishes at T."""
    w = math.pi / (2.0 * T)
    return math.cos(w * t) ** 2, -w * math.sin(2.0 * w * t)


def _axis_factor(grid: Grid, axis: int, x: np.ndarray, kind: str, mode: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    k = wavenumber(grid, axis, mode)
    if kind == "sin":
        return np.sin(k * x), k * np.cos(k * x)
    return np.cos(k * x), -k * np.sin(k * x)


class VectorTestField:
    """
    theta(t) times a fixed mix of three tangential modes:

      - the lowest stream-function mode, the shape of the Taylor-Green vortex
      - the same stream function with the x wavenumber doubled, at half weight
      - grad of a doubled-wavenumber cosine sum, at half weight, which pairs
        with the gradient part of the advection and with grad p

    Each mode is a product of one sine (on the component's own axis, so
    phi.n = 0 on every wall) and cosines elsewhere.
    """

    def __init__(self, grid: Grid, T: float):
        if T <= 0:
            raise WeakFormError("weak residuals need a positive horizon")
        self.grid, self.T = grid, T
        self.terms = self._modes(grid)

    @staticmethod
    def _modes(grid: Grid) -> List[Tuple[int, float, Tuple[int, ...]]]:
        """(component, coefficient, per-axis mode) triples."""
        dim = grid.dim
        k0, k1 = wavenumber(grid, 0), wavenumber(grid, 1)
        rest = (1,) * (dim - 2)
        terms = [
            (0, 1.0, (1, 1) + rest),
            (1, -k0 / k1, (1, 1) + rest),
            (0, 0.5, (2, 1) + rest),
            (1, -k0 / k1, (2, 1) + rest),
        ]
        for i in range(dim):
            terms.append((i, 0.5, tuple(2 if a == i else 0 for a in range(dim))))
        return terms

    def time_factor(self, t: float) -> Tuple[float, float]:
        return _theta(t, self.T)

    def _term(self, i: int, modes: Tuple[int, ...], stagger: Stagger, j: Optional[int] = None) -> np.ndarray:
        mesh = self.grid.mesh(stagger)
        out = np.ones(self.grid.shape(stagger))
        for a in range(self.grid.dim):
            f, df = _axis_factor(self.grid, a, mesh[a], "sin" if a == i else "cos", modes[a])
            out = out * (df if a == j else f)
        return out

    def component(self, i: int) -> np.ndarray:
        stagger = self.grid.velocity_stagger(i)
        out = np.zeros(self.grid.shape(stagger))
        for comp, coef, modes in self.terms:
            if comp == i:
                out = out + coef * self._term(i, modes, stagger)
        return out

    def derivative(self, i: int, j: int, stagger: Stagger) -> np.ndarray:
        """d_j phi_i (spatial part) sampled at ``stagger``."""
        out = np.zeros(self.grid.shape(stagger))
        for comp, coef, modes in self.terms:
            if comp == i:
                out = out + coef * self._term(i, modes, stagger, j)
        return out

    def deformation(self) -> Dict[Tuple[int, int], np.ndarray]:
        grid = self.grid
        out = {}
        for i in range(grid.dim):
            for j in range(grid.dim):
                stagger = grid.gradient_stagger(i, j)
                out[(i, j)] = 0.5 * (self.derivative(i, j, stagger) + self.derivative(j, i, stagger))
        return out


class ScalarTestField:
    """psi = theta(t) prod_a cos(m_a k_a x_a); mean-zero unless every mode is 0."""

    def __init__(self, grid: Grid, T: float, modes: Sequence[int] = None):
        if T <= 0:
            raise WeakFormError("weak residuals need a positive horizon")
        self.grid, self.T = grid, T
        self.modes = tuple(modes) if modes is not None else (1,) + (0,) * (grid.dim - 1)
        if len(self.modes) != grid.dim:
            raise WeakFormError(f"expected {grid.dim} modes, got {len(self.modes)}")

    def time_factor(self, t: float) -> Tuple[float, float]:
        return _theta(t, self.T)

    def _factor(self, a: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k = wavenumber(self.grid, a, self.modes[a])
        return np.cos(k * x), -k * np.sin(k * x)

    def value(self, stagger: Stagger) -> np.ndarray:
        mesh = self.grid.mesh(stagger)
        out = np.ones(self.grid.shape(stagger))
        for a in range(self.grid.dim):
            out = out * self._factor(a, mesh[a])[0]
        return out

    def gradient(self, i: int) -> np.ndarray:
        stagger = self.grid.velocity_stagger(i)
        mesh = self.grid.mesh(stagger)
        out = np.ones(self.grid.shape(stagger))
        for a in range(self.grid.dim):
            f, df = self._factor(a, mesh[a])
            out = out * (df if a == i else f)
        return out

    def require_mean_zero(self) -> None:
        values = self.value(self.grid.center)
        w = self.grid.weights(self.grid.center)
        mean = float(np.sum(w * values)) / self.grid.volume
        if abs(mean) > MEAN_ZERO_TOL * max(float(np.max(np.abs(values))), 1e-300):
            raise WeakFormError(f"scalar test function must have zero mean, got mean {mean:.3e}")


@dataclass
class WeakResidualReport:
    momentum_residual: float
    pressure_residual: float
    terms: Dict[str, float]

    def as_pair(self) -> Tuple[float, float]:
        return self.momentum_residual, self.pressure_residual

    def as_list(self) -> List[float]:
        return [self.momentum_residual, self.pressure_residual] + [
            self.terms[n] for n in (*MOMENTUM_TERMS, "initial", *PRESSURE_TERMS)
        ]


def _normalised(terms: Sequence[float], floor: float = 0.0) -> float:
    scale = max(sum(abs(t) for t in terms), floor)
    return abs(sum(terms)) / scale if scale > 0 else 0.0


def _weighted_norm(grid: Grid, arrays: Sequence[np.ndarray], staggers: Sequence[Stagger]) -> float:
    return math.sqrt(sum(float(np.sum(grid.weights(s) * a * a)) for a, s in zip(arrays, staggers)))


class WeakResidualAccumulator:
    def __init__(self, phi: VectorTestField, psi: ScalarTestField, epsilon: float):
        psi.require_mean_zero()
        self.phi, self.psi, self.epsilon = phi, psi, epsilon
        grid = phi.grid
        self.integral = TrapezoidIntegral(MOMENTUM_TERMS + PRESSURE_TERMS)
        self.initial = 0.0
        self._phi = [phi.component(i) for i in range(grid.dim)]
        self._dphi = phi.deformation()
        self._psi = psi.value(grid.center)
        self._grad_psi = [psi.gradient(i) for i in range(grid.dim)]
        self._started = False
        self.floors = (0.0, 0.0)

    def add(self, state: SimState) -> None:
        grid, u, p = state.grid, state.u, state.p
        theta, dtheta = self.phi.time_factor(state.t)
        if not self._started:
            self.initial = -theta * sum(
                float(np.sum(grid.weights(u.stagger(i)) * u.components[i] * self._phi[i])) for i in range(grid.dim)
            )
            staggers = [grid.velocity_stagger(i) for i in range(grid.dim)]
            u0 = _weighted_norm(grid, u.components, staggers)
            self.floors = (
                NOISE_FLOOR * u0 * _weighted_norm(grid, self._phi, staggers),
                NOISE_FLOOR * self.phi.T * u0 * _weighted_norm(grid, self._grad_psi, staggers),
            )
            self._started = True

        def pair(values, other, stagger):
            return float(np.sum(grid.weights(stagger) * values * other))

        nl = nonlinear_term(u)
        du = edge_deformation(u)
        values = dict.fromkeys(MOMENTUM_TERMS + PRESSURE_TERMS, 0.0)
        for i in range(grid.dim):
            stagger = u.stagger(i)
            values["time"] -= dtheta * pair(u.components[i], self._phi[i], stagger)
            values["nonlinear"] += theta * pair(nl.components[i], self._phi[i], stagger)
            values["pressure"] += theta * pair(diff_to_face(p.values, i, grid), self._phi[i], stagger)
        for key, entry in du.items():
            values["viscous"] += 2.0 * theta * pair(entry.values, self._dphi[key], entry.stagger)

        psi_t, _ = self.psi.time_factor(state.t)
        for i in range(grid.dim):
            stagger = grid.velocity_stagger(i)
            values["eps_pressure"] += self.epsilon * psi_t * pair(diff_to_face(p.values, i, grid), self._grad_psi[i], stagger)
        values["divergence"] = psi_t * pair(divergence(u).values, self._psi, grid.center)
        self.integral.add(state.t, values)

    def report(self) -> WeakResidualReport:
        totals = dict(self.integral.totals)
        totals["initial"] = self.initial
        momentum = [totals[n] for n in MOMENTUM_TERMS] + [self.initial]
        pressure = [totals[n] for n in PRESSURE_TERMS]
        return WeakResidualReport(_normalised(momentum, self.floors[0]), _normalised(pressure, self.floors[1]), totals)


def weak_residual(
    trajectory: Iterable[StepRecord],
    test_field: VectorTestField,
    test_scalar: ScalarTestField,
    epsilon: float,
) -> WeakResidualReport:
    acc = WeakResidualAccumulator(test_field, test_scalar, epsilon)
    for state in states_of(trajectory):
        acc.add(state)
    return acc.report()


class WeakResidualObserver(RunObserver):
    """Default test data on the run's grid and horizon; needs T > 0."""

    def __init__(self, modes: Sequence[int] = None):
        self.modes = modes
        self.accumulator: Optional[WeakResidualAccumulator] = None

    def on_start(self, state: SimState, config: SolverConfig) -> None:
        phi = VectorTestField(state.grid, config.T)
        psi = ScalarTestField(state.grid, config.T, self.modes)
        self.accumulator = WeakResidualAccumulator(phi, psi, config.epsilon)
        self.accumulator.add(state)

    def on_step(self, record: StepRecord, config: SolverConfig) -> None:
        self.accumulator.add(SimState(t=record.t, step=record.step, u=record.u, p=record.p))

    def report(self) -> WeakResidualReport:
        return self.accumulator.report()
