"""Run-time observability: JSON logs and Prometheus metrics."""
