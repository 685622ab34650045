import math
import os

import numpy as np
import pytest

from src.diagnostics.ledger import EnergyLedger, LedgerState
from src.fields import ScalarField, VelocityField
from src.grid import make_grid
from src.initial_conditions import InitialCondition
from src.persistence import (
    SnapshotError,
    SnapshotObserver,
    atomic_write_text,
    format_value,
    list_snapshots,
    load_trajectory,
    read_csv,
    read_snapshot,
    read_snapshot_header,
    write_csv,
    write_snapshot,
)
from src.stepper import SimState, SolverConfig, run


def test_snapshot_round_trip_is_bitwise(channel_grid, random_velocity, random_scalar, tmp_path):
    state = SimState(t=0.125, step=7, u=random_velocity(channel_grid), p=random_scalar(channel_grid))
    write_snapshot(state, tmp_path / "snap", epsilon=1e-3)
    loaded = read_snapshot(tmp_path / "snap.json")
    assert loaded.t == 0.125 and loaded.step == 7
    for a, b in zip(state.u.components, loaded.u.components):
        assert np.array_equal(a, b)
    assert np.array_equal(state.p.values, loaded.p.values)
    assert read_snapshot_header(tmp_path / "snap")["epsilon"] == 1e-3


def test_snapshot_on_wrong_grid(channel_grid, tmp_path):
    state = SimState(t=0.0, step=0, u=VelocityField.zeros(channel_grid), p=ScalarField.zeros(channel_grid))
    write_snapshot(state, tmp_path / "snap", epsilon=1.0)
    other = make_grid(2, (8, 8), (1.0, 1.0), ("periodic", "wall"))
    with pytest.raises(SnapshotError) as info:
        read_snapshot(tmp_path / "snap", other)
    message = str(info.value)
    assert "[16, 16]" in message and "[8, 8]" in message


def test_truncated_payload(channel_grid, tmp_path):
    state = SimState(t=0.0, step=0, u=VelocityField.zeros(channel_grid), p=ScalarField.zeros(channel_grid))
    write_snapshot(state, tmp_path / "snap", epsilon=1.0)
    raw = (tmp_path / "snap.bin").read_bytes()
    (tmp_path / "snap.bin").write_bytes(raw[:-8])
    with pytest.raises(SnapshotError, match="payload"):
        read_snapshot(tmp_path / "snap")


def test_unsupported_format_version(tmp_path):
    (tmp_path / "snap.json").write_text('{"format_version": 99}')
    with pytest.raises(SnapshotError, match="format version"):
        read_snapshot_header(tmp_path / "snap")


def test_atomic_write_leaves_no_temp_file(tmp_path, monkeypatch):
    target = tmp_path / "out.txt"
    atomic_write_text(target, "first")

    def broken_replace(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", broken_replace)
    with pytest.raises(OSError):
        atomic_write_text(target, "second")
    assert target.read_text() == "first"
    assert sorted(p.name for p in tmp_path.iterdir()) == ["out.txt"]


def test_csv_formatting(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b", "c", "d"], [[1, 0.1, True, None], [2, math.nan, False, "x"]])
    header, rows = read_csv(tmp_path / "t.csv")
    assert header == ["a", "b", "c", "d"]
    assert rows[0] == ["1", "0.10000000000000001", "true", ""]
    assert rows[1][1] == "nan"
    assert format_value(np.float64(2.5)) == "2.5"


def snapshot_run(grid, directory, every, T=0.003, start=None, ledger=None):
    config = SolverConfig(grid=grid, epsilon=1e-2, T=T, dt=1e-4, initial=InitialCondition(selector="taylor_green"))
    ledger = ledger or EnergyLedger()
    snapshots = SnapshotObserver(directory, every, ledger=ledger)
    result = run(config, observers=[ledger, snapshots], start=start, log_every=0)
    return result, ledger, snapshots


def test_snapshot_cadence(channel_grid, tmp_path):
    """Step 0, every k-th step, and the final step"""
    result, _, snapshots = snapshot_run(channel_grid, tmp_path / "snaps", every=7)
    assert result.steps == 30
    assert len(snapshots.written) == math.ceil(30 / 7) + 1
    assert len(list_snapshots(tmp_path / "snaps")) == len(snapshots.written)
    assert read_snapshot_header(snapshots.written[-1])["step"] == 30


def test_resume_reproduces_final_ledger_row(channel_grid, tmp_path):
    """Continuing from a mid-run snapshot ends on the same ledger row"""
    _, full_ledger, snapshots = snapshot_run(channel_grid, tmp_path / "full", every=10)
    mid = snapshots.written[1]
    header = read_snapshot_header(mid)
    assert header["step"] == 10 and header["ledger_state"]["step"] == 10

    resumed = EnergyLedger()
    resumed.state = LedgerState.from_dict(header["ledger_state"])
    _, resumed_ledger, _ = snapshot_run(
        channel_grid, tmp_path / "resumed", every=10, start=read_snapshot(mid, channel_grid), ledger=resumed
    )
    a, b = full_ledger.final_row(), resumed_ledger.final_row()
    assert a.step == b.step == 30
    assert a.as_list() == pytest.approx(b.as_list(), rel=1e-12, nan_ok=True)


def test_load_trajectory(channel_grid, tmp_path):
    snapshot_run(channel_grid, tmp_path / "snaps", every=10)
    records, header = load_trajectory(tmp_path / "snaps")
    assert [r.step for r in records] == [10, 20, 30]
    assert records[0].dt == pytest.approx(0.001)
    assert header["step"] == 0
    with pytest.raises(SnapshotError, match="no snapshots"):
        load_trajectory(tmp_path / "empty")
