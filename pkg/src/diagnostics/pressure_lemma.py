"""
Pressure-duality balance.

At every step g solves lap g = (|p|+delta)^(alpha-2) p - mean with p the new
pressure. Pairing the scheme's own momentum update with grad g gives, per
step and exactly in explicit mode,

    (p, lap g) = ((u^{n+1} - u^n)/dt, grad g) + (nl(u*), grad g) + 2 (Du*, D grad g)

with u* the stage velocity. Accumulating these terms and comparing them with
(3 eps / 5) ||p(t)||^{5/3} + int ||p||^{5/3} measures the balance gap.
"""

from dataclasses import dataclass, field
from typing import Iterable, List, Optional

from src.elliptic import DEFAULT_TOL, DUAL_EXPONENT, regularity_ratio, solve_dual
from src.fields import inner_product, lp_norm
from src.operators import (
    deformation_inner,
    gradient,
    gradient_entries_norm,
    laplacian,
    nonlinear_term,
    velocity_gradient,
)
from src.stepper import RunObserver, SimState, SolverConfig, StepRecord

LEMMA_COLUMNS = [
    "step",
    "t",
    "lhs_instant",
    "lhs_cum",
    "I1",
    "I2",
    "time_term",
    "telescoped_time_term",
    "pairing_cum",
    "gap",
    "step_balance",
    "nl_15_14",
    "hessian_g_5_2",
    "grad_g_15",
    "regularity_ratio",
]


@dataclass
class LemmaRow:
    step: int
    t: float
    lhs_instant: float
    lhs_cum: float
    I1: float
    I2: float
    time_term: float
    telescoped_time_term: float
    pairing_cum: float
    gap: float
    step_balance: float
    nl_15_14: float
    hessian_g_5_2: float
    grad_g_15: float
    regularity_ratio: float

    def as_list(self) -> list:
        return [getattr(self, c) for c in LEMMA_COLUMNS]


@dataclass
class PressureLemmaReport:
    epsilon: float
    rows: List[LemmaRow] = field(default_factory=list)

    @property
    def final(self) -> Optional[LemmaRow]:
        return self.rows[-1] if self.rows else None

    def max_gap(self) -> float:
        return max((r.gap for r in self.rows), default=0.0)

    def bound_quantity(self) -> float:
        """sup_t eps ||p||^{5/3} + int ||p||^{5/3}."""
        sup = max((r.lhs_instant for r in self.rows), default=0.0) * 5.0 / 3.0
        return sup + (self.final.lhs_cum if self.final else 0.0)

    def summary(self) -> dict:
        last = self.final
        return {
            "final_gap": last.gap if last else 0.0,
            "max_gap": self.max_gap(),
            "bound_quantity": self.bound_quantity(),
            "max_step_balance": max((abs(r.step_balance) for r in self.rows), default=0.0),
            "max_regularity_ratio": max((r.regularity_ratio for r in self.rows), default=0.0),
        }


def _p_power(p) -> float:
    return lp_norm(p, DUAL_EXPONENT) ** DUAL_EXPONENT


class PressureLemmaAccumulator:
    def __init__(
        self,
        epsilon: float,
        delta: Optional[float] = None,
        tol: float = DEFAULT_TOL,
        method: str = "spectral",
        sample_every: int = 1,
    ):
        self.epsilon = epsilon
        self.delta = delta
        self.tol = tol
        self.method = method
        self.sample_every = sample_every
        self.report = PressureLemmaReport(epsilon=epsilon)
        self.initial_power: Optional[float] = None
        self.lhs_cum = self.i1 = self.i2 = self.time_term = self.pairing = 0.0
        self._pending = None

    def start(self, state: SimState) -> None:
        self.initial_power = _p_power(state.p)
        self._emit(state.step, state.t, self.initial_power, 0.0, 0.0, 0.0, 0.0, 0.0)

    def add(self, record: StepRecord) -> None:
        if self.initial_power is None:
            self.initial_power = _p_power(record.p_prev)
        dual = solve_dual(record.p, self.delta, tol=self.tol, method=self.method)
        grad_g = gradient(dual.g)
        stage = record.stage_velocity
        nl = nonlinear_term(stage)

        rate = _p_power(record.p)
        pairing = inner_product(record.p, laplacian(dual.g))
        i1 = inner_product(nl, grad_g)
        i2 = 2.0 * deformation_inner(stage, grad_g)
        dtu = inner_product((record.u - record.u_prev) / record.dt, grad_g)

        self.lhs_cum += record.dt * rate
        self.pairing += record.dt * pairing
        self.i1 += record.dt * i1
        self.i2 += record.dt * i2
        self.time_term -= record.dt * dtu
        hessian = gradient_entries_norm(velocity_gradient(grad_g), 2.5)
        self._emit(
            record.step,
            record.t,
            rate,
            pairing - dtu - i1 - i2,
            lp_norm(nl, 15.0 / 14.0),
            hessian,
            lp_norm(grad_g, 15.0),
            regularity_ratio(record.p, dual.g),
        )

    def _emit(self, step, t, power, step_balance, nl_norm, hessian, grad_g_norm, ratio) -> None:
        if step % self.sample_every != 0:
            self._pending = (step, t, power, step_balance, nl_norm, hessian, grad_g_norm, ratio)
            return
        self._pending = None
        self._append(step, t, power, step_balance, nl_norm, hessian, grad_g_norm, ratio)

    def _append(self, step, t, power, step_balance, nl_norm, hessian, grad_g_norm, ratio) -> None:
        lhs_instant = 0.6 * self.epsilon * power
        self.report.rows.append(
            LemmaRow(
                step=step,
                t=t,
                lhs_instant=lhs_instant,
                lhs_cum=self.lhs_cum,
                I1=self.i1,
                I2=self.i2,
                time_term=self.time_term,
                telescoped_time_term=0.6 * self.epsilon * (power - (self.initial_power or 0.0)),
                pairing_cum=self.pairing,
                gap=abs(lhs_instant + self.lhs_cum - self.i1 - self.i2),
                step_balance=step_balance,
                nl_15_14=nl_norm,
                hessian_g_5_2=hessian,
                grad_g_15=grad_g_norm,
                regularity_ratio=ratio,
            )
        )

    def finish(self) -> PressureLemmaReport:
        if self._pending is not None:
            self._append(*self._pending)
            self._pending = None
        return self.report


class PressureLemmaObserver(RunObserver):
    def __init__(self, delta: Optional[float] = None, sample_every: int = 1):
        self.delta = delta
        self.sample_every = sample_every
        self.accumulator: Optional[PressureLemmaAccumulator] = None

    def on_start(self, state: SimState, config: SolverConfig) -> None:
        self.accumulator = PressureLemmaAccumulator(
            config.epsilon, self.delta, config.elliptic_tol, config.elliptic_method, self.sample_every
        )
        self.accumulator.start(state)

    def on_step(self, record: StepRecord, config: SolverConfig) -> None:
        self.accumulator.add(record)

    def on_finish(self, state: SimState, config: SolverConfig) -> None:
        self.accumulator.finish()

    @property
    def report(self) -> PressureLemmaReport:
        return self.accumulator.report


def pressure_lemma_check(
    trajectory: Iterable[StepRecord],
    epsilon: float,
    delta: Optional[float] = None,
    tol: float = DEFAULT_TOL,
    method: str = "spectral",
    sample_every: int = 1,
) -> PressureLemmaReport:
    acc = PressureLemmaAccumulator(epsilon, delta, tol, method, sample_every)
    for record in trajectory:
        if acc.initial_power is None:
            acc.start(SimState(t=record.t_prev, step=record.step - 1, u=record.u_prev, p=record.p_prev))
        acc.add(record)
    return acc.finish()
