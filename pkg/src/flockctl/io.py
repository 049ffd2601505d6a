"""CSV export and import. Floats are written with 17 significant digits so
values round-trip exactly; output is byte-stable for identical inputs."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import SwarmState, TimeGrid, bilinear_B
from .integrator import Trajectory
from .meanfield import Histogram1D, StudyRecord


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write(path: Path, header: Sequence[str] | None, rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([fmt(c) for c in row])


def _axis_names(prefix: str, d: int) -> list[str]:
    return [f"{prefix}{k + 1}" for k in range(d)]


def write_trajectory(path, traj: Trajectory):
    N_T, N, d = traj.x.shape
    t = traj.grid.times
    _write(path, ["t", "agent"] + _axis_names("x", d) + _axis_names("v", d),
           ([t[k], i, *traj.x[k, i], *traj.v[k, i]] for k in range(N_T) for i in range(N)))


def write_functionals(path, traj: Trajectory):
    t = traj.grid.times
    _write(path, ["t", "V", "X"],
           ([t[k], bilinear_B(traj.v[k], traj.v[k]), bilinear_B(traj.x[k], traj.x[k])] for k in range(len(traj))))


def write_control(path, u, grid: TimeGrid):
    u = np.asarray(u)
    N_T, N, d = u.shape
    t = grid.times
    _write(path, ["t", "agent"] + _axis_names("u", d), ([t[k], i, *u[k, i]] for k in range(N_T) for i in range(N)))


def write_heatmap(path, values):
    _write(path, None, np.asarray(values))


def write_history(path, costs: Sequence[float], grad_norms: Sequence[float]):
    _write(path, ["iter", "cost", "grad_norm"], ([k, c, g] for k, (c, g) in enumerate(zip(costs, grad_norms))))


STUDY_HEADER = ["N", "J_star", "iterations", "wall_time", "mean_control_norm", "V_final"]


def write_study(path, records: Sequence[StudyRecord]):
    _write(path, STUDY_HEADER,
           ([r.N, r.J_star, r.iterations, r.wall_time, r.mean_control_norm, r.V_final] for r in records))


def write_marginals(path, free: Sequence[Histogram1D], controlled: Sequence[Histogram1D]):
    """One block per velocity axis, free and controlled on shared bins."""
    rows = []
    for axis, (hf, hc) in enumerate(zip(free, controlled)):
        if not np.array_equal(hf.edges, hc.edges):
            raise ValueError("free and controlled histograms must share bin edges")
        for b in range(len(hf.counts)):
            rows.append([axis, hf.edges[b], hf.edges[b + 1], hf.counts[b], hc.counts[b]])
    _write(path, ["axis", "bin_left", "bin_right", "free", "controlled"], rows)


def read_state(path) -> SwarmState:
    """Read ``agent,x1..xd,v1..vd`` rows into a state (rows sorted by agent)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if not header or header[0] != "agent" or (len(header) - 1) % 2:
        raise ValueError(f"{path}: expected header agent,x1..xd,v1..vd")
    d = (len(header) - 1) // 2
    if header[1:] != _axis_names("x", d) + _axis_names("v", d):
        raise ValueError(f"{path}: expected header agent,x1..xd,v1..vd, got {header}")
    data = sorted(((int(r[0]), [float(c) for c in r[1:]]) for r in rows), key=lambda p: p[0])
    if [a for a, _ in data] != list(range(len(data))):
        raise ValueError(f"{path}: agents must be numbered 0..N-1")
    arr = np.array([vals for _, vals in data], dtype=np.float64).reshape(len(data), 2 * d)
    return SwarmState(arr[:, :d], arr[:, d:])


def write_state(path, state: SwarmState):
    d = state.d
    _write(path, ["agent"] + _axis_names("x", d) + _axis_names("v", d),
           ([i, *state.x[i], *state.v[i]] for i in range(state.N)))
