"""
Prometheus metrics for solver runs, kept in a dedicated registry so tests and
sweep workers never collide with the process default.
"""

import time
from functools import wraps

from prometheus_client import CollectorRegistry, Counter, Histogram, generate_latest

REGISTRY = CollectorRegistry()

STEPS_TOTAL = Counter("acns_steps_total", "Accepted time steps", registry=REGISTRY)
STEP_FAILURES = Counter("acns_step_failures_total", "Aborted time steps", ["reason"], registry=REGISTRY)
ELLIPTIC_SOLVES = Counter(
    "acns_elliptic_solves_total", "Elliptic solves", ["method", "operator"], registry=REGISTRY
)
ELLIPTIC_SECONDS = Histogram(
    "acns_elliptic_solve_seconds",
    "Wall time per elliptic solve",
    buckets=(1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 0.1, 0.5, 1.0, 5.0),
    registry=REGISTRY,
)
RHS_MEAN_SUBTRACTIONS = Counter(
    "acns_rhs_mean_subtractions_total", "Incompatible Neumann right-hand sides", ["operator"], registry=REGISTRY
)
SWEEP_MEMBERS = Counter("acns_sweep_members_total", "Finished sweep members", ["status"], registry=REGISTRY)
RUN_SECONDS = Histogram(
    "acns_run_seconds",
    "Wall time per simulation run",
    buckets=(0.1, 1.0, 5.0, 15.0, 60.0, 300.0, 1200.0),
    registry=REGISTRY,
)


def track_duration(histogram: Histogram):
    """Decorator observing the wall time of each call, successful or not."""

    def decorator(f):
        @wraps(f)
        def wrapped(*args, **kwargs):
            start_time = time.perf_counter()
            try:
                return f(*args, **kwargs)
            finally:
                histogram.observe(time.perf_counter() - start_time)

        return wrapped

    return decorator


def metrics_text() -> str:
    """Current metrics in the text exposition format."""
    return generate_latest(REGISTRY).decode("utf-8")
