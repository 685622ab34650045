"""
Time integration of the artificial-compressibility system

    d_t u + nl(u, u) - 2 div D u + grad p = 0,    -eps lap p + div u = 0.

Explicit mode: two-stage midpoint for the advective and viscous terms with
the coupled pressure update applied after each stage. Implicit mode:
backward Euler for the Laplacian (componentwise Helmholtz-type solves) with
grad div carried by a coupled pressure solve; first order in time.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np

from src.elliptic import (
    DEFAULT_TOL,
    METHODS,
    solve_coupled_pressure,
    solve_diffusion,
    solve_neumann_poisson,
    solve_pressure,
)
from src.fields import ScalarField, VelocityField, enforce_boundary, lp_norm
from src.grid import Grid
from src.initial_conditions import InitialCondition, initial_condition
from src.observability.metrics import RUN_SECONDS, STEP_FAILURES, STEPS_TOTAL, track_duration
from src.observability.structured_logger import StructuredLogger
from src.operators import div_deformation, divergence, gradient, laplacian, nonlinear_term

DIFFUSION_MODES = ("explicit", "implicit")
VISCOSITY = 1.0
TINY_SPEED = 1e-12
# absolute floor on the constraint residual, relative to ||u|| / h
CONSTRAINT_FLOOR = 1e-12

logger = StructuredLogger(__name__)


class SimulationError(RuntimeError):
    """A step produced an invalid state; ``step`` is the index being computed."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    epsilon: float
    T: float
    dt: Optional[float] = None
    cfl_safety: float = 0.5
    diffusion_mode: str = "explicit"
    elliptic_tol: float = DEFAULT_TOL
    elliptic_method: str = "spectral"
    initial: InitialCondition = field(default_factory=InitialCondition)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.T >= 0:
            raise ValueError("T must be >= 0")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.diffusion_mode not in DIFFUSION_MODES:
            raise ValueError(f"diffusion_mode must be one of {DIFFUSION_MODES}")
        if self.elliptic_method not in METHODS:
            raise ValueError(f"elliptic_method must be one of {METHODS}")
        if not self.elliptic_tol > 0:
            raise ValueError("elliptic_tol must be > 0")

    @property
    def nu(self) -> float:
        return VISCOSITY

    def with_epsilon(self, epsilon: float) -> "SolverConfig":
        return replace(self, epsilon=epsilon)


@dataclass
class SimState:
    t: float
    step: int
    u: VelocityField
    p: ScalarField
    # velocity at which the explicit terms of the last stage were evaluated
    stage: Optional[VelocityField] = None

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def kinetic_energy(self) -> float:
        return 0.5 * lp_norm(self.u, 2) ** 2


@dataclass
class StepRecord:
    step: int
    t_prev: float
    t: float
    dt: float
    u_prev: VelocityField
    p_prev: ScalarField
    u: VelocityField
    p: ScalarField
    stage: Optional[VelocityField] = None

    @property
    def stage_velocity(self) -> VelocityField:
        return self.stage if self.stage is not None else self.u_prev


class RunObserver:
    """Observers see the initial state, every accepted step, and the final state."""

    def on_start(self, state: SimState, config: SolverConfig) -> None:
        pass

    def on_step(self, record: StepRecord, config: SolverConfig) -> None:
        pass

    def on_finish(self, state: SimState, config: SolverConfig) -> None:
        pass


def initial_state(config: SolverConfig, u0: Optional[VelocityField] = None) -> SimState:
    """u0 from the configured selector and p(0) from the pressure solve of u0."""
    if u0 is None:
        u0 = initial_condition(config.initial, config.grid, tol=config.elliptic_tol, method=config.elliptic_method)
    u0 = enforce_boundary(u0)
    p0 = solve_pressure(u0, config.epsilon, tol=config.elliptic_tol, method=config.elliptic_method)
    return SimState(t=0.0, step=0, u=u0, p=p0)


def stable_dt(state: SimState, config: SolverConfig) -> float:
    grid = state.grid
    h = min(grid.h)
    limit = h / (state.u.max_abs() + TINY_SPEED)
    if config.diffusion_mode == "explicit":
        limit = min(limit, h * h / (4.0 * grid.dim * config.nu))
    return config.cfl_safety * limit


def momentum_rhs(u: VelocityField) -> VelocityField:
    """2 div D u - nl(u, u)."""
    return div_deformation(u) * 2.0 - nonlinear_term(u)


def _pressure_update(u_star: VelocityField, config: SolverConfig, tau: float, step: int):
    """Solve lap p = div u* / (eps + tau), then u = u* - tau grad p."""
    div_star = divergence(u_star)
    p = solve_neumann_poisson(
        div_star / (config.epsilon + tau), tol=config.elliptic_tol, method=config.elliptic_method
    )
    u = enforce_boundary(u_star - gradient(p) * tau)
    _check_constraint(u, p, div_star, u_star, config, step)
    return u, p


def _check_constraint(u, p, div_star, u_star, config, step) -> None:
    residual = lp_norm(divergence(u) - laplacian(p) * config.epsilon, 2)
    bound = config.elliptic_tol * lp_norm(div_star, 2)
    floor = CONSTRAINT_FLOOR * lp_norm(u_star, 2) / min(u.grid.h)
    if residual > max(bound, floor):
        STEP_FAILURES.labels(reason="constraint").inc()
        raise SimulationError(f"constraint residual {residual:.3e} exceeds {max(bound, floor):.3e}", step)


def _require_finite(u: VelocityField, step: int) -> None:
    if not u.is_finite():
        STEP_FAILURES.labels(reason="non_finite").inc()
        logger.error("non-finite velocity", step=step)
        raise SimulationError("non-finite values in velocity", step)


def step(state: SimState, config: SolverConfig, dt: Optional[float] = None) -> SimState:
    """Advance one step of size ``dt`` (CFL-limited when omitted)."""
    dt = stable_dt(state, config) if dt is None else dt
    index = state.step + 1
    u = state.u
    if config.diffusion_mode == "explicit":
        half = 0.5 * dt
        u_half, _ = _pressure_update(u + momentum_rhs(u) * half, config, half, index)
        _require_finite(u_half, index)
        u_new, p_new = _pressure_update(u + momentum_rhs(u_half) * dt, config, dt, index)
        stage = u_half
    else:
        w = enforce_boundary(u - nonlinear_term(u) * dt)
        v = enforce_boundary(solve_diffusion(w, dt, tol=config.elliptic_tol, method=config.elliptic_method))
        p_new = solve_coupled_pressure(v, config.epsilon, dt, tol=config.elliptic_tol, method=config.elliptic_method)
        potential = p_new - laplacian(p_new) * config.epsilon
        u_new = enforce_boundary(v - gradient(potential) * dt)
        _check_constraint(u_new, p_new, divergence(v), v, config, index)
        stage = u
    _require_finite(u_new, index)
    if not p_new.is_finite():
        raise SimulationError("non-finite values in pressure", index)
    STEPS_TOTAL.inc()
    return SimState(t=state.t + dt, step=index, u=u_new, p=p_new, stage=stage)


@dataclass
class RunResult:
    state: SimState
    steps: int
    observers: List[RunObserver]


def _notify(observers: Sequence[RunObserver], method: str, *args) -> None:
    for observer in observers:
        getattr(observer, method)(*args)


@track_duration(RUN_SECONDS)
def run(
    config: SolverConfig,
    observers: Iterable[RunObserver] = (),
    start: Optional[SimState] = None,
    log_every: int = 100,
) -> RunResult:
    """
    Advance from ``start`` (or the configured initial state) to T. The last
    step is clipped so the run lands on T exactly.
    """
    observers = list(observers)
    state = start if start is not None else initial_state(config)
    logger.info(
        "run starting",
        grid=config.grid.describe(),
        epsilon=config.epsilon,
        T=config.T,
        dt=config.dt,
        diffusion_mode=config.diffusion_mode,
        resume_step=state.step,
    )
    _notify(observers, "on_start", state, config)
    taken = 0
    while state.t < config.T and not math.isclose(state.t, config.T, rel_tol=1e-12, abs_tol=1e-15):
        dt = config.dt if config.dt is not None else stable_dt(state, config)
        if state.t + dt > config.T:
            dt = config.T - state.t
        new = step(state, config, dt)
        record = StepRecord(
            step=new.step,
            t_prev=state.t,
            t=new.t,
            dt=dt,
            u_prev=state.u,
            p_prev=state.p,
            u=new.u,
            p=new.p,
            stage=new.stage,
        )
        _notify(observers, "on_step", record, config)
        state = new
        taken += 1
        if log_every and state.step % log_every == 0:
            logger.info("progress", step=state.step, t=state.t, kinetic=state.kinetic_energy())
    _notify(observers, "on_finish", state, config)
    logger.info("run finished", steps=taken, t=state.t, kinetic=state.kinetic_energy())
    return RunResult(state=state, steps=taken, observers=observers)
