"""
Run configuration.

TOML files with ``[grid] [solver] [ic] [output] [diagnostics]`` sections,
validated by pydantic. Unknown keys are rejected and every violation is
reported at once.
"""

import json
import os
import sys
from pathlib import Path
from typing import List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.diagnostics.bump_functions import PROFILES
from src.elliptic import DEFAULT_TOL
from src.grid import GridError, make_grid
from src.initial_conditions import InitialCondition
from src.stepper import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ROOT_ENV = "ACNS_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class ConfigError(ValueError):
    """Carries every violation as ``"dotted.key: message"``."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSection(_Section):
    dim: int
    n_cells: List[int]
    lengths: List[float]
    axis_kinds: List[str]

    @model_validator(mode="after")
    def _buildable(self):
        try:
            make_grid(self.dim, self.n_cells, self.lengths, self.axis_kinds)
        except GridError as e:
            raise ValueError(str(e)) from e
        return self


class SolverSection(_Section):
    epsilon: float
    T: float
    dt: Optional[float] = None
    cfl_safety: float = 0.5
    diffusion_mode: Literal["explicit", "implicit"] = "explicit"
    elliptic_tol: float = DEFAULT_TOL
    elliptic_method: Literal["spectral", "cg"] = "spectral"

    @field_validator("epsilon")
    @classmethod
    def _epsilon(cls, v):
        if not v > 0:
            raise ValueError("epsilon must be > 0")
        return v

    @field_validator("T")
    @classmethod
    def _horizon(cls, v):
        if not v >= 0:
            raise ValueError("T must be >= 0")
        return v

    @field_validator("dt")
    @classmethod
    def _dt(cls, v):
        if v is not None and not v > 0:
            raise ValueError("dt must be > 0")
        return v

    @field_validator("cfl_safety")
    @classmethod
    def _cfl(cls, v):
        if not 0 < v <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        return v

    @field_validator("elliptic_tol")
    @classmethod
    def _tol(cls, v):
        if not v > 0:
            raise ValueError("elliptic_tol must be > 0")
        return v


class ICSection(_Section):
    selector: Literal["taylor_green", "solenoidal_random", "from_file", "zero"] = "taylor_green"
    seed: int = 0
    band: List[int] = Field(default_factory=lambda: [1, 4])
    amplitude: float = 1.0
    path: Optional[str] = None

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.band) != 2 or self.band[0] < 1 or self.band[1] < self.band[0]:
            raise ValueError(f"band must be [low, high] with 1 <= low <= high, got {self.band}")
        if self.selector == "from_file" and not self.path:
            raise ValueError("from_file needs a path")
        return self


class OutputSection(_Section):
    directory: Optional[str] = None
    sample_every: int = Field(default=1, ge=1)
    snapshot_every: int = Field(default=0, ge=0)


class DiagnosticsSection(_Section):
    ledger: bool = True
    local_energy: bool = False
    test_functions: List[Literal["poly2", "poly3", "sin4"]] = Field(default_factory=lambda: list(PROFILES))
    pressure_lemma: bool = False
    lemma_delta: Optional[float] = Field(default=None, gt=0)
    weak_residual: bool = False
    korn: bool = False
    korn_samples: int = Field(default=20, ge=1)


class RunConfig(_Section):
    grid: GridSection
    solver: SolverSection
    ic: ICSection = Field(default_factory=ICSection)
    output: OutputSection = Field(default_factory=OutputSection)
    diagnostics: DiagnosticsSection = Field(default_factory=DiagnosticsSection)


def _violations(error: ValidationError) -> List[str]:
    out = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item["loc"]) or "<root>"
        msg = item["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        out.append(f"{loc}: {msg}")
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` overrides to the raw mapping (values parsed as JSON, else strings)."""
    problems = []
    for item in overrides:
        key, sep, value = item.partition("=")
        parts = key.strip().split(".")
        if not sep or len(parts) < 2 or not all(parts):
            problems.append(f"{item}: overrides must look like section.key=value")
            continue
        node = raw
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                problems.append(f"{key}: {part} is not a section")
                break
            node = child
        else:
            node[parts[-1]] = _parse_value(value.strip())
    if problems:
        raise ConfigError(problems)
    return raw


def validate_config(raw: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(_violations(e)) from e


def parse_config(path, overrides: Sequence[str] = ()) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError([f"{path}: config file not found"]) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError([f"{path}: {e}"]) from e
    return validate_config(apply_overrides(raw, overrides))


def to_solver_config(cfg: RunConfig) -> SolverConfig:
    g, s, ic = cfg.grid, cfg.solver, cfg.ic
    return SolverConfig(
        grid=make_grid(g.dim, g.n_cells, g.lengths, g.axis_kinds),
        epsilon=s.epsilon,
        T=s.T,
        dt=s.dt,
        cfl_safety=s.cfl_safety,
        diffusion_mode=s.diffusion_mode,
        elliptic_tol=s.elliptic_tol,
        elliptic_method=s.elliptic_method,
        initial=InitialCondition(
            selector=ic.selector, seed=ic.seed, band=tuple(ic.band), amplitude=ic.amplitude, path=ic.path
        ),
    )


def output_directory(cfg: RunConfig) -> Path:
    if cfg.output.directory:
        return Path(cfg.output.directory)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))
