"""
Report and snapshot persistence.

Every file is written to a temporary sibling and moved into place with
``os.replace``; a failed write leaves nothing behind. Snapshots are a raw
``.bin`` payload (little-endian float64 arrays u_0 .. u_{d-1}, p in C order)
plus a ``.json`` header, the header written last.
"""

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.fields import ScalarField, VelocityField
from src.grid import Grid, make_grid
from src.observability.structured_logger import StructuredLogger
from src.stepper import RunObserver, SimState, SolverConfig, StepRecord

SNAPSHOT_FORMAT_VERSION = 1
FLOAT_FORMAT = ".17g"
DTYPE = "<f8"

logger = StructuredLogger(__name__)
PathLike = Union[str, os.PathLike]


class SnapshotError(ValueError):
    """Snapshot header and payload disagree with each other or with the requested grid."""


def atomic_write_bytes(path: PathLike, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
    except BaseException:
        logger.error("atomic write failed", path=str(path))
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    if value is None:
        return ""
    return str(value)


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    atomic_write_text(path, buffer.getvalue())


def read_csv(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, float) and value != value:
        return None
    return value


def write_json(path: PathLike, payload: dict) -> None:
    atomic_write_text(path, json.dumps(_jsonable(payload), indent=2) + "\n")


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def _paths(path: PathLike) -> Tuple[Path, Path]:
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".bin", ".json") else path
    return stem.with_suffix(".bin"), stem.with_suffix(".json")


def _shapes(grid: Grid) -> List[List[int]]:
    shapes = [list(grid.shape(grid.velocity_stagger(i))) for i in range(grid.dim)]
    shapes.append(list(grid.shape(grid.center)))
    return shapes


def write_snapshot(
    state: SimState,
    path: PathLike,
    epsilon: float,
    ledger_state: Optional[dict] = None,
) -> Path:
    """Write ``<stem>.bin`` then ``<stem>.json``; returns the header path."""
    bin_path, header_path = _paths(path)
    grid = state.grid
    arrays = list(state.u.components) + [state.p.values]
    payload = b"".join(np.ascontiguousarray(a, dtype=DTYPE).tobytes() for a in arrays)
    header = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "grid": grid.describe(),
        "staggering": {
            **{f"u{i}": list(grid.velocity_stagger(i)) for i in range(grid.dim)},
            "p": list(grid.center),
        },
        "shapes": _shapes(grid),
        "dtype": DTYPE,
        "t": state.t,
        "step": state.step,
        "epsilon": epsilon,
        "ledger_state": ledger_state,
    }
    atomic_write_bytes(bin_path, payload)
    write_json(header_path, header)
    return header_path


def read_snapshot_header(path: PathLike) -> dict:
    _, header_path = _paths(path)
    try:
        with open(header_path, encoding="utf-8") as handle:
            header = json.load(handle)
    except FileNotFoundError as e:
        raise SnapshotError(f"snapshot header {header_path} not found") from e
    except json.JSONDecodeError as e:
        raise SnapshotError(f"snapshot header {header_path} is not valid JSON: {e}") from e
    if header.get("format_version") != SNAPSHOT_FORMAT_VERSION:
        raise SnapshotError(
            f"snapshot format version {header.get('format_version')} is not supported "
            f"(expected {SNAPSHOT_FORMAT_VERSION})"
        )
    return header


def grid_from_header(header: dict) -> Grid:
    g = header["grid"]
    return make_grid(g["dim"], g["n_cells"], g["lengths"], g["axis_kinds"])


def read_snapshot(path: PathLike, grid: Optional[Grid] = None) -> SimState:
    """Read a snapshot onto ``grid`` (or the grid its header describes)."""
    header = read_snapshot_header(path)
    bin_path, _ = _paths(path)
    stored = grid_from_header(header)
    grid = stored if grid is None else grid
    expected = _shapes(grid)
    if header["shapes"] != expected or stored != grid:
        raise SnapshotError(
            f"snapshot grid {header['grid']} with shapes {header['shapes']} does not match "
            f"requested grid {grid.describe()} with shapes {expected}"
        )
    raw = np.fromfile(bin_path, dtype=DTYPE)
    sizes = [int(np.prod(s)) for s in expected]
    if raw.size != sum(sizes):
        raise SnapshotError(f"snapshot payload has {raw.size} values, expected {sum(sizes)}")
    arrays, offset = [], 0
    for shape, size in zip(expected, sizes):
        arrays.append(raw[offset : offset + size].reshape(shape).astype(float))
        offset += size
    u = VelocityField(grid, tuple(arrays[:-1]))
    p = ScalarField(grid, arrays[-1], mean_zero=True)
    return SimState(t=float(header["t"]), step=int(header["step"]), u=u, p=p)


def list_snapshots(directory: PathLike) -> List[Path]:
    return sorted(Path(directory).glob("snapshot_*.json"))


def load_trajectory(directory: PathLike) -> Tuple[List[StepRecord], dict]:
    """Rebuild step records (without stage data) from every snapshot in a directory."""
    headers = list_snapshots(directory)
    if not headers:
        raise SnapshotError(f"no snapshots found in {directory}")
    states = [read_snapshot(h) for h in headers]
    states.sort(key=lambda s: s.step)
    records = [
        StepRecord(
            step=b.step, t_prev=a.t, t=b.t, dt=b.t - a.t, u_prev=a.u, p_prev=a.p, u=b.u, p=b.p
        )
        for a, b in zip(states, states[1:])
    ]
    return records, read_snapshot_header(headers[0])


class SnapshotObserver(RunObserver):
    """Writes step 0, every ``every``-th step, and the final step."""

    def __init__(self, directory: PathLike, every: int, ledger=None):
        self.directory = Path(directory)
        self.every = every
        self.ledger = ledger
        self.written: List[Path] = []
        self._last_step: Optional[int] = None

    def _write(self, state: SimState, config: SolverConfig) -> None:
        ledger_state = self.ledger.state.to_dict() if self.ledger is not None and self.ledger.state else None
        path = self.directory / f"snapshot_{state.step:08d}"
        self.written.append(write_snapshot(state, path, config.epsilon, ledger_state))
        self._last_step = state.step

    def on_start(self, state: SimState, config: SolverConfig) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        self._write(state, config)

    def on_step(self, record: StepRecord, config: SolverConfig) -> None:
        if record.step % self.every == 0:
            self._write(SimState(t=record.t, step=record.step, u=record.u, p=record.p), config)

    def on_finish(self, state: SimState, config: SolverConfig) -> None:
        if self._last_step != state.step:
            self._write(state, config)
