import math

import pytest

from src.diagnostics.weak_form import (
    WEAK_COLUMNS,
    ScalarTestField,
    VectorTestField,
    WeakFormError,
    WeakResidualObserver,
    _normalised,
    weak_residual,
)
from src.initial_conditions import InitialCondition
from src.stepper import RunObserver, SolverConfig, run


class Trajectory(RunObserver):
    def __init__(self):
        self.records = []

    def on_step(self, record, config):
        self.records.append(record)


def simulate(grid, selector="taylor_green", T=0.01):
    config = SolverConfig(grid=grid, epsilon=1e-2, T=T, initial=InitialCondition(selector=selector))
    trajectory = Trajectory()
    weak = WeakResidualObserver()
    run(config, observers=[trajectory, weak], log_every=0)
    return trajectory.records, weak.report()


def test_zero_trajectory(channel_grid):
    _, report = simulate(channel_grid, selector="zero")
    assert report.as_pair() == (0.0, 0.0)


def test_constant_scalar_test_function_rejected(channel_grid):
    """psi with every mode 0 is a constant and has no zero mean"""
    records, _ = simulate(channel_grid, T=0.001)
    with pytest.raises(WeakFormError, match="zero mean"):
        weak_residual(records, VectorTestField(channel_grid, 0.001), ScalarTestField(channel_grid, 0.001, (0, 0)), 1e-2)


def test_positive_horizon_required(channel_grid):
    with pytest.raises(WeakFormError):
        VectorTestField(channel_grid, 0.0)
    with pytest.raises(WeakFormError, match="modes"):
        ScalarTestField(channel_grid, 1.0, (1, 0, 0))


def test_taylor_green_residuals_small(periodic_grid):
    """A smooth run satisfies both weak equations up to discretisation error"""
    _, report = simulate(periodic_grid, T=0.02)
    momentum, pressure = report.as_pair()
    assert momentum < 0.05
    assert pressure < 0.05
    assert len(report.as_list()) == len(WEAK_COLUMNS)


def test_observer_matches_post_hoc(channel_grid):
    records, streamed = simulate(channel_grid)
    post = weak_residual(records, VectorTestField(channel_grid, 0.01), ScalarTestField(channel_grid, 0.01), 1e-2)
    assert post.as_list() == pytest.approx(streamed.as_list(), rel=1e-12, abs=1e-15)


def test_taylor_green_pairing_not_degenerate(taylor_green_refinement):
    """The default phi overlaps the Taylor-Green vortex on a walled box"""
    report = taylor_green_refinement[16].weak
    assert abs(report.terms["initial"]) > 0.1
    assert abs(report.terms["viscous"]) > 1e-3


def test_momentum_residual_converges(taylor_green_refinement):
    residuals = [taylor_green_refinement[n].weak.momentum_residual for n in (16, 32, 64)]
    assert residuals[0] > residuals[1] > residuals[2]
    order = math.log2(residuals[0] / residuals[2]) / 2.0
    assert order >= 1.5


def test_vanishing_pairing_reports_zero(taylor_green_refinement):
    """Taylor-Green pressure is even about the centre and psi is odd, so only round-off remains"""
    for level in taylor_green_refinement.values():
        assert level.weak.pressure_residual < 1e-3


def test_floor_bounds_noise():
    assert _normalised([1e-20, -3e-20], floor=1e-12) < 1e-7
    assert _normalised([1e-20, -3e-20]) == pytest.approx(0.5)
    assert _normalised([0.0, 0.0], floor=0.0) == 0.0
