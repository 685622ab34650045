"""
Epsilon sweeps.

One run per epsilon, all sharing the initial velocity, grid and time step.
Each member streams its pressure, divergence and gradient-part norms into
space-time accumulators (rectangle rule); consecutive members are compared
through the L2(L2) distance of their sampled velocities.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.diagnostics.ledger import LEDGER_COLUMNS, EnergyLedger
from src.elliptic import DUAL_EXPONENT, helmholtz
from src.fields import SpaceTimeNorm, VelocityField, accumulate_space_time_norm, lp_norm
from src.initial_conditions import initial_condition
from src.observability.metrics import SWEEP_MEMBERS
from src.observability.structured_logger import StructuredLogger
from src.operators import divergence, gradient, gradient_norm_sq
from src.persistence import write_csv, write_json
from src.stepper import RunObserver, SimState, SolverConfig, StepRecord, initial_state, run, stable_dt

logger = StructuredLogger(__name__)

STRONG_EXPONENT = 2.5
GRADIENT_PROXY_EXPONENT = 0.6

METRIC_NAMES = (
    "sup_p_53",
    "int_p_53",
    "div_l2l2",
    "qu_l52",
    "qu_l52_power",
    "qu_l2l2",
    "qu_interp_bound",
    "eps_grad_p_l2l2",
    "eps_grad_p_l52",
    "sup_eps35_p",
    "lemma_quantity",
    "sqrt_eps_grad_p_l2l2",
    "eps06_grad_p_l2l2",
    "stability_ratio",
)
SWEEP_COLUMNS = ["epsilon", "status", *METRIC_NAMES, "cauchy_to_next"]


class MemberNorms(RunObserver):
    """Space-time norm accumulators of one sweep member."""

    def __init__(self, sample_every: int = 1):
        self.sample_every = sample_every
        self.p_sup = SpaceTimeNorm(math.inf, DUAL_EXPONENT)
        self.p_int = SpaceTimeNorm(DUAL_EXPONENT, DUAL_EXPONENT)
        self.div = SpaceTimeNorm(2.0, 2.0)
        self.qu = SpaceTimeNorm(STRONG_EXPONENT, STRONG_EXPONENT)
        self.qu_l2 = SpaceTimeNorm(2.0, 2.0)
        self.qu_sup = SpaceTimeNorm(math.inf, 2.0)
        self.grad_u = SpaceTimeNorm(2.0, 2.0)
        self.grad_p = SpaceTimeNorm(2.0, 2.0)
        self.grad_p_52 = SpaceTimeNorm(STRONG_EXPONENT, STRONG_EXPONENT)
        self.u_sup = SpaceTimeNorm(math.inf, math.inf)
        self.u0_max = 0.0
        self.samples: List[Tuple[float, Tuple[np.ndarray, ...]]] = []
        self._last_sample: Optional[int] = None
        self._tol = 1e-10
        self._method = "spectral"

    def _accumulate(self, state: SimState, dt: float) -> None:
        u, p = state.u, state.p
        qu = helmholtz(u, tol=self._tol, method=self._method).qu
        grad_p = gradient(p)
        for acc, value in (
            (self.p_sup, p),
            (self.p_int, p),
            (self.div, divergence(u)),
            (self.qu, qu),
            (self.qu_l2, qu),
            (self.qu_sup, qu),
            (self.grad_u, math.sqrt(gradient_norm_sq(u))),
            (self.grad_p, grad_p),
            (self.grad_p_52, grad_p),
            (self.u_sup, u),
        ):
            accumulate_space_time_norm(acc, value, dt, t=state.t)

    def _sample(self, state: SimState) -> None:
        self.samples.append((state.t, tuple(c.copy() for c in state.u.components)))
        self._last_sample = state.step

    def on_start(self, state: SimState, config: SolverConfig) -> None:
        self._tol, self._method = config.elliptic_tol, config.elliptic_method
        self.u0_max = state.u.max_abs()
        self._accumulate(state, 0.0)
        self._sample(state)

    def on_step(self, record: StepRecord, config: SolverConfig) -> None:
        state = SimState(t=record.t, step=record.step, u=record.u, p=record.p)
        self._accumulate(state, record.dt)
        if record.step % self.sample_every == 0:
            self._sample(state)

    def on_finish(self, state: SimState, config: SolverConfig) -> None:
        if self._last_sample != state.step:
            self._sample(state)

    def metrics(self, epsilon: float) -> Dict[str, float]:
        sup_p = self.p_sup.value
        grad_p = self.grad_p.norm
        return {
            "sup_p_53": sup_p,
            "int_p_53": self.p_int.value,
            "div_l2l2": self.div.norm,
            "qu_l52": self.qu.norm,
            "qu_l52_power": self.qu.value,
            "qu_l2l2": self.qu_l2.norm,
            "qu_interp_bound": math.sqrt(self.qu_sup.value) * self.qu_l2.value ** 0.625 * self.grad_u.value ** 0.375,
            "eps_grad_p_l2l2": epsilon * grad_p,
            "eps_grad_p_l52": epsilon * self.grad_p_52.norm,
            "sup_eps35_p": epsilon**0.6 * sup_p,
            "lemma_quantity": epsilon * sup_p**DUAL_EXPONENT + self.p_int.value,
            "sqrt_eps_grad_p_l2l2": math.sqrt(epsilon) * grad_p,
            "eps06_grad_p_l2l2": epsilon**GRADIENT_PROXY_EXPONENT * grad_p,
            "stability_ratio": self.u_sup.value / self.u0_max if self.u0_max > 0 else 0.0,
        }


@dataclass
class MemberResult:
    epsilon: float
    status: str
    metrics: Dict[str, float]
    samples: List[Tuple[float, Tuple[np.ndarray, ...]]] = field(default_factory=list, repr=False)
    ledger_rows: List[list] = field(default_factory=list, repr=False)
    ledger_summary: dict = field(default_factory=dict)
    steps: int = 0


def run_member(config: SolverConfig, u0: VelocityField, sample_every: int = 1) -> MemberResult:
    """Run one member to T; failures are reported in ``status`` rather than raised."""
    norms = MemberNorms(sample_every)
    ledger = EnergyLedger(sample_every=sample_every)
    try:
        result = run(config, observers=[norms, ledger], start=initial_state(config, u0), log_every=0)
    except Exception as e:  # annotate and keep the sweep going
        logger.error("sweep member failed", epsilon=config.epsilon, error=str(e))
        return MemberResult(
            epsilon=config.epsilon,
            status=f"failed: {type(e).__name__}: {e}",
            metrics={n: math.nan for n in METRIC_NAMES},
        )
    return MemberResult(
        epsilon=config.epsilon,
        status="ok",
        metrics=norms.metrics(config.epsilon),
        samples=norms.samples,
        ledger_rows=[r.as_list() for r in ledger.rows],
        ledger_summary=ledger.summary(),
        steps=result.steps,
    )


def _run_member_args(args) -> MemberResult:
    return run_member(*args)


def cauchy_difference(a: MemberResult, b: MemberResult, grid) -> float:
    """
    ||u_a - u_b||_{L2(0,T;L2)} over matching samples (rectangle rule);
    NaN when either member failed or the sample times disagree.
    """
    if a.status != "ok" or b.status != "ok" or len(a.samples) != len(b.samples):
        return math.nan
    total, t_prev = 0.0, None
    for (ta, ua), (tb, ub) in zip(a.samples, b.samples):
        if not math.isclose(ta, tb, rel_tol=1e-12, abs_tol=1e-15):
            return math.nan
        if t_prev is not None:
            diff = VelocityField(grid, tuple(x - y for x, y in zip(ua, ub)))
            total += (ta - t_prev) * lp_norm(diff, 2) ** 2
        t_prev = ta
    return math.sqrt(total)


@dataclass
class SweepRow:
    epsilon: float
    status: str
    metrics: Dict[str, float]
    cauchy_to_next: float = math.nan

    def as_list(self) -> list:
        return [self.epsilon, self.status] + [self.metrics[n] for n in METRIC_NAMES] + [self.cauchy_to_next]


@dataclass
class SweepReport:
    dt: float
    rows: List[SweepRow] = field(default_factory=list)
    members: List[MemberResult] = field(default_factory=list, repr=False)

    def column(self, name: str) -> List[float]:
        return [r.metrics[name] for r in self.rows if r.status == "ok"]

    @staticmethod
    def _nonincreasing(values: Sequence[float]) -> bool:
        return all(b <= a * (1.0 + 1e-12) for a, b in zip(values, values[1:]))

    @staticmethod
    def _ratio(values: Sequence[float]) -> float:
        if not values:
            return math.nan
        low = min(values)
        return max(values) / low if low > 0 else (1.0 if max(values) == 0 else math.inf)

    def summary(self) -> dict:
        qu = self.column("qu_l52")
        cauchy = [r.cauchy_to_next for r in self.rows if not math.isnan(r.cauchy_to_next)]
        return {
            "dt": self.dt,
            "members": len(self.rows),
            "failed": sum(1 for r in self.rows if r.status != "ok"),
            "lemma_quantity_ratio": self._ratio(self.column("lemma_quantity")),
            "int_p_53_ratio": self._ratio(self.column("int_p_53")),
            "qu_l52_decay": qu[-1] / qu[0] if len(qu) > 1 and qu[0] > 0 else math.nan,
            "div_monotone": self._nonincreasing(self.column("div_l2l2")),
            "qu_monotone": self._nonincreasing(qu),
            "eps_grad_p_monotone": self._nonincreasing(self.column("eps_grad_p_l2l2")),
            "cauchy_decreasing": self._nonincreasing(cauchy),
            "max_stability_ratio": max(self.column("stability_ratio"), default=math.nan),
        }


def validate_eps_list(eps_list: Sequence[float]) -> List[float]:
    """Collect every problem with the list before failing."""
    eps = [float(e) for e in eps_list]
    problems = []
    if not eps:
        problems.append("eps list must not be empty")
    if any(not e > 0 for e in eps):
        problems.append("every epsilon must be > 0")
    if len(set(eps)) != len(eps):
        problems.append(f"duplicate epsilon values in {eps}")
    if any(b >= a for a, b in zip(eps, eps[1:])) and len(set(eps)) == len(eps):
        problems.append(f"eps list must be strictly decreasing, got {eps}")
    if problems:
        raise ValueError("; ".join(problems))
    return eps


def member_directory(output_dir, epsilon: float) -> Path:
    return Path(output_dir) / f"eps_{epsilon:.6g}"


def sweep(
    config_template: SolverConfig,
    eps_list: Sequence[float],
    jobs: int = 1,
    sample_every: int = 1,
    output_dir=None,
) -> SweepReport:
    """
    Run every epsilon with the template's grid, initial velocity and a
    common step (the template dt, or the stable step of the shared u0).
    Results come back in the order of ``eps_list`` whatever ``jobs`` is.
    """
    eps = validate_eps_list(eps_list)
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    cfg = config_template
    u0 = initial_condition(cfg.initial, cfg.grid, tol=cfg.elliptic_tol, method=cfg.elliptic_method)
    dt = cfg.dt if cfg.dt is not None else stable_dt(initial_state(replace(cfg, epsilon=eps[0]), u0), cfg)
    tasks = [(replace(cfg, epsilon=e, dt=dt), u0, sample_every) for e in eps]
    logger.info("sweep starting", eps=eps, dt=dt, jobs=jobs)

    if jobs == 1:
        members = [_run_member_args(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            members = list(pool.map(_run_member_args, tasks))

    report = SweepReport(dt=dt, members=members)
    for k, member in enumerate(members):
        SWEEP_MEMBERS.labels(status="ok" if member.status == "ok" else "failed").inc()
        row = SweepRow(member.epsilon, member.status, member.metrics)
        if k + 1 < len(members):
            row.cauchy_to_next = cauchy_difference(member, members[k + 1], cfg.grid)
        report.rows.append(row)
    if output_dir is not None:
        write_sweep(report, output_dir)
    logger.info("sweep finished", **{k: v for k, v in report.summary().items() if isinstance(v, (int, float, bool))})
    return report


def write_sweep(report: SweepReport, output_dir) -> None:
    """``sweep.csv`` and ``sweep_summary.json`` plus one ledger per member directory."""
    root = Path(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    for member in report.members:
        directory = member_directory(root, member.epsilon)
        directory.mkdir(parents=True, exist_ok=True)
        write_csv(directory / "ledger.csv", LEDGER_COLUMNS, member.ledger_rows)
        write_json(
            directory / "summary.json",
            {"epsilon": member.epsilon, "status": member.status, "steps": member.steps, "ledger": member.ledger_summary},
        )
    write_csv(root / "sweep.csv", SWEEP_COLUMNS, [r.as_list() for r in report.rows])
    write_json(root / "sweep_summary.json", report.summary())
