import math

import numpy as np
import pytest

from src.elliptic import helmholtz, residual_of_pressure
from src.fields import ScalarField, VelocityField, enforce_boundary, lp_norm, wall_normal_max
from src.grid import make_grid
from src.initial_conditions import InitialCondition, InitialConditionError, initial_condition
from src.operators import divergence
from src.stepper import (
    RunObserver,
    SimState,
    SimulationError,
    SolverConfig,
    initial_state,
    momentum_rhs,
    run,
    stable_dt,
    step,
)


def make_config(grid, **kwargs):
    params = {"epsilon": 1e-2, "T": 0.01}
    params.update(kwargs)
    return SolverConfig(grid=grid, **params)


class Recorder(RunObserver):
    def __init__(self):
        self.started = 0
        self.records = []
        self.finished = None

    def on_start(self, state, config):
        self.started += 1

    def on_step(self, record, config):
        self.records.append(record)

    def on_finish(self, state, config):
        self.finished = state


def test_config_validation(channel_grid):
    """Invalid solver parameters are refused with a readable message"""
    with pytest.raises(ValueError, match="epsilon must be > 0"):
        make_config(channel_grid, epsilon=-1.0)
    with pytest.raises(ValueError, match="T must be >= 0"):
        make_config(channel_grid, T=-0.1)
    with pytest.raises(ValueError, match="diffusion_mode"):
        make_config(channel_grid, diffusion_mode="crank")
    with pytest.raises(ValueError, match="cfl_safety"):
        make_config(channel_grid, cfl_safety=1.5)


def test_zero_velocity_is_fixed_point(channel_grid):
    """u = 0 stays exactly 0 with zero pressure"""
    config = make_config(channel_grid, initial=InitialCondition(selector="zero"))
    result = run(config, log_every=0)
    assert result.steps > 0
    assert result.state.u.max_abs() == 0.0
    assert result.state.p.max_abs() == 0.0


def test_stable_dt_examples(channel_grid):
    """Diffusive limit for u = 0, advective limit in implicit mode"""
    config = make_config(channel_grid)
    zero = SimState(t=0.0, step=0, u=VelocityField.zeros(channel_grid), p=ScalarField.zeros(channel_grid))
    assert stable_dt(zero, config) == pytest.approx(0.5 * (1 / 16) ** 2 / 8)
    moving = SimState(
        t=0.0,
        step=0,
        u=VelocityField(channel_grid, (np.ones((16, 16)), np.zeros((16, 17)))),
        p=ScalarField.zeros(channel_grid),
    )
    implicit = make_config(channel_grid, diffusion_mode="implicit")
    assert stable_dt(moving, implicit) == pytest.approx(0.5 / 16)


def test_run_lands_on_horizon(channel_grid):
    """The last step is clipped so t ends exactly at T"""
    config = make_config(channel_grid, T=0.00025, dt=0.0001)
    recorder = Recorder()
    result = run(config, observers=[recorder], log_every=0)
    assert result.steps == 3
    assert result.state.t == pytest.approx(0.00025, abs=1e-15)
    assert recorder.records[-1].dt == pytest.approx(0.00005)
    assert recorder.started == 1 and recorder.finished is result.state


def test_zero_horizon(channel_grid):
    """T = 0 takes no steps but still notifies observers"""
    recorder = Recorder()
    result = run(make_config(channel_grid, T=0.0), observers=[recorder], log_every=0)
    assert result.steps == 0
    assert result.state.t == 0.0
    assert recorder.started == 1 and not recorder.records


def test_taylor_green_energy_decays(periodic_grid):
    """Kinetic energy decreases monotonically on the periodic box"""
    recorder = Recorder()
    config = make_config(periodic_grid, T=0.02)
    run(config, observers=[recorder], log_every=0)
    energies = [0.5 * lp_norm(r.u, 2) ** 2 for r in recorder.records]
    assert all(b < a for a, b in zip(energies, energies[1:]))


def test_constraint_and_boundary_after_steps(box_grid):
    """Every step satisfies -eps lap p + div u = 0 and u.n = 0"""
    config = make_config(box_grid, T=0.005, initial=InitialCondition(selector="solenoidal_random", seed=3))
    recorder = Recorder()
    run(config, observers=[recorder], log_every=0)
    for record in recorder.records:
        assert wall_normal_max(record.u) == 0.0
        scale = max(lp_norm(divergence(record.u), 2), 1e-12)
        assert residual_of_pressure(record.p, record.u, config.epsilon) <= 1e-8 * scale + 1e-10


def test_runs_are_deterministic(channel_grid):
    config = make_config(channel_grid, initial=InitialCondition(selector="solenoidal_random", seed=7))
    a = run(config, log_every=0).state
    b = run(config, log_every=0).state
    for ca, cb in zip(a.u.components, b.u.components):
        assert np.array_equal(ca, cb)
    assert np.array_equal(a.p.values, b.p.values)


def test_implicit_mode_allows_large_steps(channel_grid):
    """Implicit diffusion stays finite well beyond the explicit limit"""
    config = make_config(channel_grid, T=0.02, dt=0.005, diffusion_mode="implicit")
    state0 = initial_state(config)
    result = run(config, log_every=0)
    assert result.state.u.is_finite()
    assert result.state.kinetic_energy() < state0.kinetic_energy()
    assert wall_normal_max(result.state.u) == 0.0


def test_cg_and_spectral_steps_agree(channel_grid):
    config = make_config(channel_grid, T=0.002)
    a = run(config, log_every=0).state
    b = run(make_config(channel_grid, T=0.002, elliptic_method="cg"), log_every=0).state
    assert np.allclose(a.u.components[0], b.u.components[0], atol=1e-8)


def test_non_finite_state_raises(channel_grid):
    config = make_config(channel_grid)
    u = VelocityField.zeros(channel_grid)
    u.components[0][3, 3] = np.nan
    state = SimState(t=0.0, step=0, u=u, p=ScalarField.zeros(channel_grid))
    with pytest.raises(SimulationError) as info:
        step(state, config, dt=1e-4)
    assert info.value.step == 1


def test_stage_velocity_recorded(channel_grid):
    recorder = Recorder()
    run(make_config(channel_grid, T=0.001), observers=[recorder], log_every=0)
    record = recorder.records[0]
    assert record.stage is not None
    assert record.stage_velocity is record.stage


def test_initial_conditions():
    """Every selector yields a tangential, discretely solenoidal field"""
    grid = make_grid(2, (8, 8), (1.0, 1.0), ("wall", "wall"))
    for selector in ("taylor_green", "solenoidal_random"):
        u = initial_condition(selector, grid)
        assert wall_normal_max(u) == 0.0
        assert lp_norm(divergence(u), 2) <= 1e-9 * u.max_abs() * 8
    assert initial_condition("zero", grid).max_abs() == 0.0
    with pytest.raises(InitialConditionError):
        InitialCondition(selector="vortex")
    with pytest.raises(InitialConditionError):
        InitialCondition(selector="from_file")


def test_taylor_green_decay_rate():
    """On the walled unit square the vortex energy decays like exp(-4 pi^2 t)"""
    grid = make_grid(2, (32, 32), (1.0, 1.0), ("wall", "wall"))
    config = make_config(grid, epsilon=1e-4, T=0.02)
    e0 = initial_state(config).kinetic_energy()
    result = run(config, log_every=0)
    rate = -math.log(result.state.kinetic_energy() / e0) / config.T
    assert rate / (4.0 * math.pi**2) == pytest.approx(1.0, rel=1e-2)


@pytest.mark.parametrize("epsilon", [1e-2, 1e-10])
def test_step_matches_projection(box_grid, random_velocity, epsilon):
    """Against a projection of u*: p = (dt / (eps + dt)) p_proj, and u -> P u* as eps -> 0"""
    dt = 1e-4
    u = random_velocity(box_grid)
    state = SimState(t=0.0, step=0, u=u, p=ScalarField.zeros(box_grid))
    new = step(state, make_config(box_grid, epsilon=epsilon), dt=dt)

    u_star = u + momentum_rhs(new.stage) * dt
    projection = helmholtz(u_star)
    p_proj = projection.q.values / dt
    scale = float(np.max(np.abs(p_proj)))
    assert np.allclose(new.p.values, p_proj * dt / (epsilon + dt), rtol=1e-9, atol=1e-12 * scale)
    if epsilon < 1e-8:
        pu = enforce_boundary(projection.pu)
        peak = pu.max_abs()
        for got, want in zip(new.u.components, pu.components):
            assert np.allclose(got, want, rtol=0.0, atol=1e-5 * peak)
