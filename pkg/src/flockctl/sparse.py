"""Sparse consensus control: receding-horizon windows solved by particle swarm
optimisation, and heat-map diagnostics of the resulting control."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import FloatArray, ModelParams, SwarmState, TimeGrid, velocity_deviation
from .integrator import Trajectory, integrate_forward, rk4_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PSOConfig:
    swarm_size: int = 40
    c1: float = 1.49
    c2: float = 1.49
    inertia: float = 0.72
    max_iters: int = 100
    init_spread: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be at least 2")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ValueError("c1 and c2 must be positive")
        if self.inertia < 0:
            raise ValueError("inertia must be non-negative")
        if not self.init_spread > 0:
            raise ValueError("init_spread must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class NMPCConfig:
    H: int = 3
    r: int = 1
    gamma: float = 1.0

    def __post_init__(self):
        if self.H < 1:
            raise ValueError("H must be at least 1")
        if self.r not in (1, 2):
            raise ValueError("r must be 1 or 2")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive")

    def check_grid(self, grid: TimeGrid):
        if self.H > grid.N_T - 1:
            raise ValueError(f"H={self.H} exceeds N_T-1={grid.N_T - 1}")


@dataclass(frozen=True)
class HeatMap:
    """``values[i, k]`` is the l2 norm of agent ``i``'s control at step ``k``."""

    values: FloatArray


def _control_penalty(u, r):
    # per-node sum over agents of |u_j|_r^r
    return np.sum(np.abs(u), axis=(-2, -1)) if r == 1 else np.sum(u * u, axis=(-2, -1))


def window_costs(x, v, U, params: ModelParams, cfg: NMPCConfig, dt: float) -> FloatArray:
    """Performance index for a batch of control windows.

    ``x, v`` are ``(N, d)``; ``U`` is ``(P, H+1, N, d)``. Returns ``(P,)``.
    """
    P, n_blocks, n, _ = U.shape
    xs = np.broadcast_to(x, (P,) + x.shape)
    vs = np.broadcast_to(v, (P,) + v.shape)
    total = np.zeros(P)
    with np.errstate(over="ignore", invalid="ignore"):
        for h in range(n_blocks):
            dev = velocity_deviation(vs)
            total += (np.sum(dev * dev, axis=(-2, -1)) + cfg.gamma * _control_penalty(U[:, h], cfg.r)) / n
            if h + 1 < n_blocks:
                xs, vs = rk4_step(xs, vs, U[:, h], params, dt)
    return total


def nmpc_cost(state_k: SwarmState, u_window, params: ModelParams, cfg: NMPCConfig, dt: float) -> float:
    """Receding-horizon index: ``sum_h (1/N) sum_j |vbar - v_j|^2 + gamma |u_j|_r^r``
    over the window, rolling the RK4 dynamics forward from ``state_k``."""
    u_window = np.asarray(u_window, dtype=np.float64)
    if u_window.ndim != 3 or u_window.shape[1:] != state_k.x.shape:
        raise ValueError(f"window shape {u_window.shape} incompatible with state {state_k.x.shape}")
    val = float(window_costs(state_k.x, state_k.v, u_window[None], params, cfg, dt)[0])
    if not math.isfinite(val):
        raise FloatingPointError("non-finite rollout in nmpc_cost")
    return val


def pso_minimize(objective: Callable, D: int, cfg: PSOConfig, *, center=None, batch: bool = False,
                 stream: Sequence[int] = ()) -> tuple[FloatArray, float]:
    """Minimise ``objective`` over R^D by particle swarm optimisation.

    Particles start at ``center`` (default zero) plus Gaussian noise of
    scale ``cfg.init_spread``; particle 0 sits exactly on ``center``. With
    ``batch=True`` the objective maps a ``(P, D)`` array to ``(P,)``.
    ``stream`` selects an independent random substream of ``cfg.seed``.
    Non-finite objective values count as ``+inf``.
    """
    if D < 1:
        raise ValueError("D must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=tuple(stream)))
    P = cfg.swarm_size
    c = np.zeros(D) if center is None else np.asarray(center, dtype=np.float64).reshape(D)

    def evaluate(Z):
        f = np.asarray(objective(Z), dtype=np.float64) if batch else np.array([objective(z) for z in Z], dtype=np.float64)
        return np.where(np.isfinite(f), f, np.inf)

    z = c + cfg.init_spread * rng.standard_normal((P, D))
    z[0] = c
    w = np.zeros((P, D))
    best = z.copy()
    f_best = evaluate(z)
    g = int(np.argmin(f_best))
    for _ in range(cfg.max_iters):
        xi = rng.random((P, D))
        eta = rng.random((P, D))
        w = cfg.inertia * w + cfg.c1 * xi * (best - z) + cfg.c2 * eta * (best[g] - z)
        z = z + w
        f = evaluate(z)
        improved = f < f_best
        best[improved] = z[improved]
        f_best[improved] = f[improved]
        g = int(np.argmin(f_best))
    return best[g].copy(), float(f_best[g])


def window_horizons(grid: TimeGrid, H: int) -> list[int]:
    """Effective horizon of each NMPC window; shrinks to 1 at the last step."""
    return [min(H, grid.N_T - 1 - k) for k in range(grid.N_T - 1)]


def nmpc_loop(state0: SwarmState, grid: TimeGrid, params: ModelParams, nmpc: NMPCConfig,
              pso: PSOConfig) -> tuple[FloatArray, Trajectory]:
    """Receding-horizon control: optimise each window, apply its first block.

    Each window's swarm is centred on the previous solution shifted by one
    step. The control at the final node is zero (it acts on no step).
    """
    nmpc.check_grid(grid)
    N, d = state0.N, state0.d
    u_applied = np.zeros((grid.N_T, N, d))
    x, v = state0.x.copy(), state0.v.copy()
    prev = None
    for k, H_eff in enumerate(window_horizons(grid, nmpc.H)):
        shape = (H_eff + 1, N, d)
        center = np.zeros(shape)
        if prev is not None:
            tail = prev[1:1 + H_eff + 1]
            center[:len(tail)] = tail

        def objective(Z, x=x, v=v, shape=shape):
            return window_costs(x, v, Z.reshape((-1,) + shape), params, nmpc, grid.dt)

        z_best, f_best = pso_minimize(objective, int(np.prod(shape)), pso, center=center, batch=True,
                                      stream=(k,))
        prev = z_best.reshape(shape)
        u_applied[k] = prev[0]
        x, v = rk4_step(x, v, prev[0], params, grid.dt)
        logger.debug("window %d (H_eff=%d): f_best=%.6e", k, H_eff, f_best)
    return u_applied, integrate_forward(state0, u_applied, grid, params)


def heat_map(u) -> HeatMap:
    u = np.asarray(u, dtype=np.float64)
    return HeatMap(np.linalg.norm(u, axis=-1).T.copy())


def sparsity_fraction(hmap: HeatMap, rel_threshold: float) -> float:
    """Fraction of heat-map entries below ``rel_threshold * max``; 1 for an all-zero map."""
    if not 0 < rel_threshold < 1:
        raise ValueError("rel_threshold must lie in (0, 1)")
    vals = hmap.values
    top = float(vals.max()) if vals.size else 0.0
    if top == 0.0:
        return 1.0
    return float(np.mean(vals < rel_threshold * top))
