"""Particle study of the large-N limit of the consensus control problem.

Initial data are drawn from a two-component Gaussian mixture in position
with velocity equal to position, the discrete problem is solved for a list
of agent counts, and per-N summaries are collected.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .core import FloatArray, ModelParams, SwarmState, TimeGrid, bilinear_B
from .integrator import Trajectory
from .ocp import CostParams, OCPResult, bb_descent
from .parallel import max_workers

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixtureConfig:
    mu1: tuple[float, ...] = (-1.0, -1.0)
    mu2: tuple[float, ...] = (1.0, 1.0)
    sigma1: float = 0.3
    sigma2: float = 0.3
    weight: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if len(self.mu1) != len(self.mu2):
            raise ValueError("mu1 and mu2 must have the same dimension")
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("sigmas must be positive")
        if not 0 < self.weight < 1:
            raise ValueError("weight must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def d(self) -> int:
        return len(self.mu1)


@dataclass(frozen=True)
class StudyRecord:
    N: int
    J_star: float
    iterations: int
    wall_time: float
    mean_control_norm: float
    V_final: float


@dataclass(frozen=True)
class Histogram1D:
    edges: FloatArray
    counts: FloatArray

    def peak_mass(self, width: int = 3) -> float:
        """Largest total count over ``width`` adjacent bins."""
        if len(self.counts) <= width:
            return float(self.counts.sum())
        window = np.convolve(self.counts, np.ones(width), mode="valid")
        return float(window.max())


def sample_initial(N: int, cfg: MixtureConfig) -> SwarmState:
    """Draw ``N`` positions from the mixture and set ``v = x``.

    The stream is keyed on ``(cfg.seed, N)``: reproducible per N and
    independent across N.
    """
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(N,)))
    first = rng.random(N) < cfg.weight
    z = rng.standard_normal((N, cfg.d))
    x = np.where(first[:, None],
                 np.asarray(cfg.mu1) + cfg.sigma1 * z,
                 np.asarray(cfg.mu2) + cfg.sigma2 * z)
    return SwarmState(x, x.copy())


def control_norm_stats(u, grid: TimeGrid) -> tuple[float, float]:
    """Mean per-agent control norm, and the earliest node time after which
    every agent's control stays below 1% of the peak norm."""
    norms = np.linalg.norm(np.asarray(u, dtype=np.float64), axis=-1)
    mean_norm = float(norms.mean())
    peak = float(norms.max())
    if peak == 0.0:
        return mean_norm, 0.0
    loud = np.flatnonzero((norms >= 1e-2 * peak).any(axis=1))
    k = int(loud[-1]) + 1
    return mean_norm, float(k * grid.dt) if k < grid.N_T else float(grid.T)


def velocity_marginal(traj: Trajectory, node: int, axis: int, bins: int,
                      value_range: tuple[float, float] | None = None,
                      normalise: bool = True) -> Histogram1D:
    """Histogram of one velocity component at one grid node.

    ``value_range`` fixes the bin range so free and controlled runs share a
    scale. Without it, identical values produce a single bin centred on
    the common value.
    """
    if not -len(traj) <= node < len(traj):
        raise IndexError(f"node {node} outside grid of {len(traj)} nodes")
    if not 0 <= axis < traj.v.shape[-1]:
        raise IndexError(f"axis {axis} outside dimension {traj.v.shape[-1]}")
    vals = traj.v[node, :, axis]
    if value_range is None:
        lo, hi = float(vals.min()), float(vals.max())
        if lo == hi:
            edges = np.array([lo - 0.5, lo + 0.5])
            counts = np.array([float(len(vals))])
            return Histogram1D(edges, counts / counts.sum() if normalise else counts)
        value_range = (lo, hi)
    counts, edges = np.histogram(vals, bins=bins, range=value_range)
    counts = counts.astype(np.float64)
    if normalise:
        counts /= counts.sum()
    return Histogram1D(edges, counts)


def _solve_one(N, mixture, params, cost, tol, k_max, norm):
    state0 = sample_initial(N, mixture)
    p = replace(params, N=N, d=mixture.d)
    start = time.perf_counter()
    res = bb_descent(state0, np.zeros((cost.grid.N_T, N, mixture.d)), p, cost, tol=tol, k_max=k_max,
                     norm=norm)
    wall = time.perf_counter() - start
    mean_norm, _ = control_norm_stats(res.u_opt, cost.grid)
    vT = res.traj.v[-1]
    rec = StudyRecord(N, res.cost_history[-1], res.iterations, wall, mean_norm, bilinear_B(vT, vT))
    return rec, state0, res


def run_study(N_list: Sequence[int], mixture: MixtureConfig, params: ModelParams, cost: CostParams,
              tol: float = 1e-2, k_max: int = 200, *, norm: str = "meanfield",
              callback: Callable[[int, SwarmState, OCPResult], None] | None = None,
              failures: dict | None = None) -> list[StudyRecord]:
    """Solve the discrete problem for each N and collect summaries.

    ``params.N`` and ``params.d`` are overridden per run. The stopping norm
    defaults to the N-invariant ``"meanfield"`` norm so iteration counts are
    comparable across N. A failing N is logged, stored in ``failures`` and
    skipped. ``callback`` receives ``(N, state0, result)`` for every
    successful run, in ``N_list`` order.
    """
    N_list = [int(n) for n in N_list]
    if not N_list:
        raise ValueError("N_list must be non-empty")
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly increasing")

    def task(N):
        try:
            return _solve_one(N, mixture, params, cost, tol, k_max, norm)
        except (ArithmeticError, ValueError) as exc:
            logger.warning("study run N=%d failed: %s", N, exc)
            if failures is not None:
                failures[N] = str(exc)
            return None

    workers = min(max_workers(), len(N_list))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(task, N_list))
    else:
        outcomes = [task(N) for N in N_list]

    records = []
    for N, out in zip(N_list, outcomes):
        if out is None:
            continue
        rec, state0, res = out
        if not all(math.isfinite(f) for f in (rec.J_star, rec.wall_time, rec.mean_control_norm, rec.V_final)):
            logger.warning("study run N=%d produced non-finite summary, skipped", N)
            if failures is not None:
                failures[N] = "non-finite summary"
            continue
        records.append(rec)
        if callback is not None:
            callback(N, state0, res)
    return records
