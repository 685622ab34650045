"""
Structured logging for simulation runs.
Records are emitted as JSON through python-json-logger; every record carries
the run id of the current CLI invocation plus the keyword context passed by
the caller.
"""

import logging
import os
import uuid
from typing import Any, Optional

from pythonjsonlogger import jsonlogger

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"
LOG_LEVEL_ENV = "ACNS_LOG_LEVEL"

_run_id: str = str(uuid.uuid4())


def set_run_id(run_id: Optional[str] = None) -> str:
    """Start a new run id (random unless given) and return it."""
    global _run_id
    _run_id = run_id or str(uuid.uuid4())
    return _run_id


def get_run_id() -> str:
    return _run_id


def configure_logging(level=None) -> None:
    """Install one JSON stream handler on the root logger."""
    if level is None:
        level = os.environ.get(LOG_LEVEL_ENV, "INFO")
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    handler = logging.StreamHandler()
    handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    root = logging.getLogger()
    # Avoid adding duplicate handlers
    if not any(isinstance(h.formatter, jsonlogger.JsonFormatter) for h in root.handlers):
        root.addHandler(handler)
    root.setLevel(level)


class StructuredLogger:
    """
    Thin wrapper over a stdlib logger that attaches run id and context.
    Handlers are configured once, globally, by ``configure_logging``.
    """

    def __init__(self, name: str):
        self.logger = logging.getLogger(name)

    def _log(self, level: int, message: str, **context: Any) -> None:
        if not self.logger.isEnabledFor(level):
            return
        extra = {"run_id": get_run_id()}
        if context:
            extra["context"] = context
        self.logger.log(level, message, extra=extra)

    def info(self, message: str, **kwargs):
        self._log(logging.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs):
        self._log(logging.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs):
        self._log(logging.ERROR, message, **kwargs)

    def debug(self, message: str, **kwargs):
        self._log(logging.DEBUG, message, **kwargs)
