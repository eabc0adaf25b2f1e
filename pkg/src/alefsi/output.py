"""Trajectory CSV tables and legacy ASCII VTK snapshots.

All writers format floats with 17 significant digits so that the files
round-trip exactly and are byte-identical for identical inputs.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .iteration import IterationHistory, PerStepHistory, SnapshotRecord
from .rigid_body import RigidTrajectory

TRAJECTORY_HEADER = ["t", "qx", "qy", "vx", "vy", "omega"]
SUMMARY_HEADER = ["k", "qx_T", "qy_T", "vx_T", "vy_T", "omega_T", "delta_k"]


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[_fmt(x) if not isinstance(x, (int, np.integer)) else str(x) for x in row] for row in rows])


def write_trajectory(traj: RigidTrajectory, path) -> None:
    rows = np.column_stack([traj.times, traj.as_array()])
    _write_rows(Path(path), TRAJECTORY_HEADER, rows)


def read_trajectory(path) -> RigidTrajectory:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRAJECTORY_HEADER:
            raise ValueError(f"unexpected trajectory header {header}")
        data = np.array([[float(x) for x in row] for row in reader])
    tau = float(data[1, 0] - data[0, 0]) if len(data) > 1 else 0.0
    return RigidTrajectory.from_array(data[:, 1:], tau)


def write_trajectory_csv(history, path) -> list:
    """Write ``trajectory_k{k}.csv`` per iteration and ``summary.csv`` into directory ``path``.

    A per-timestep history is written as a single iteration.  Returns the
    list of files written.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(history, PerStepHistory):
        trajs, dists = [history.trajectory], [float("nan")]
    elif isinstance(history, IterationHistory):
        if not len(history):
            raise ValueError("empty history")
        trajs, dists = history.trajectories, history.distances
    else:
        raise TypeError(f"cannot write {type(history).__name__}")
    written = []
    summary = []
    for k, (traj, d) in enumerate(zip(trajs, dists)):
        p = out / f"trajectory_k{k}.csv"
        write_trajectory(traj, p)
        written.append(p)
        summary.append([k, *traj.as_array()[-1], d])
    _write_rows(out / "summary.csv", SUMMARY_HEADER, summary)
    written.append(out / "summary.csv")
    return written


def read_summary(path) -> np.ndarray:
    """Rows of ``summary.csv`` as a float array (columns as in the header)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SUMMARY_HEADER:
            raise ValueError(f"unexpected summary header {header}")
        return np.array([[float(x) for x in row] for row in reader])


def write_snapshot_vtk(record: SnapshotRecord, path) -> None:
    """Legacy ASCII unstructured grid with vertex ``speed`` and ``pressure``."""
    mesh = record.mesh
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = [
        "# vtk DataFile Version 3.0",
        f"alefsi snapshot k={record.iteration} n={record.timestep} t={_fmt(record.time)}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {nv} double",
    ]
    lines += [f"{_fmt(x)} {_fmt(y)} 0" for x, y in mesh.vertices]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {nv}")
    for name, vals in (("speed", record.speed), ("pressure", record.pressure)):
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(v) for v in vals]
    Path(path).write_text("\n".join(lines) + "\n")


def write_snapshots(records, directory) -> list:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for rec in records:
        p = out / f"snapshot_k{rec.iteration}_n{rec.timestep:06d}.vtk"
        write_snapshot_vtk(rec, p)
        paths.append(p)
    return paths
