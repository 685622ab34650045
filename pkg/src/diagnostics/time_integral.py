from typing import Dict, Iterable, List, Optional

from src.stepper import SimState, StepRecord


class TrapezoidIntegral:
    """Trapezoid-rule time integrals of several named integrands sampled at increasing times."""

    def __init__(self, names: Iterable[str]):
        self.names = list(names)
        self.totals: Dict[str, float] = {n: 0.0 for n in self.names}
        self._last_t: Optional[float] = None
        self._last: Dict[str, float] = {}

    def add(self, t: float, values: Dict[str, float]) -> None:
        if self._last_t is not None:
            dt = t - self._last_t
            for n in self.names:
                self.totals[n] += 0.5 * dt * (self._last[n] + values[n])
        self._last_t = t
        self._last = dict(values)

    @property
    def samples_seen(self) -> bool:
        return self._last_t is not None


def states_of(trajectory: Iterable[StepRecord]) -> List[SimState]:
    """Flatten step records into the ordered list of states they connect."""
    states: List[SimState] = []
    for record in trajectory:
        if not states:
            states.append(SimState(t=record.t_prev, step=record.step - 1, u=record.u_prev, p=record.p_prev))
        states.append(SimState(t=record.t, step=record.step, u=record.u, p=record.p, stage=record.stage))
    return states
