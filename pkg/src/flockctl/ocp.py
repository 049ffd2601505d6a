"""Smooth optimal consensus control: cost, gradient and Barzilai-Borwein descent."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (FloatArray, ModelParams, SwarmState, TimeGrid, alignment_vjp, check_control,
                    velocity_deviation)
from .integrator import AdjointTrajectory, Trajectory, integrate_adjoint, integrate_forward, velocity_cost_grad
from .parallel import max_workers

logger = logging.getLogger(__name__)

ALPHA_INIT = 1e-2
DEGENERATE_DENOM = 1e-14


class OptimizationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class CostParams:
    gamma: float
    grid: TimeGrid

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive, got {self.gamma}")


@dataclass
class OCPResult:
    u_opt: FloatArray
    traj: Trajectory
    adjoint: AdjointTrajectory
    cost_history: list[float] = field(default_factory=list)
    grad_norm_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def running_cost(state: SwarmState, u_k, gamma: float) -> float:
    """``(1/N) sum_j (|vbar - v_j|^2 + gamma |u_j|^2)``."""
    u_k = np.asarray(u_k, dtype=np.float64)
    if u_k.shape != state.v.shape:
        raise ValueError(f"control shape {u_k.shape} != state shape {state.v.shape}")
    dev = velocity_deviation(state.v)
    return float((np.sum(dev * dev) + gamma * np.sum(u_k * u_k)) / state.N)


def node_costs(traj: Trajectory, gamma: float) -> FloatArray:
    """Running cost at every grid node, shape ``(N_T,)``."""
    dev = velocity_deviation(traj.v)
    n = traj.v.shape[1]
    return (np.einsum("kij,kij->k", dev, dev) + gamma * np.einsum("kij,kij->k", traj.control, traj.control)) / n


def trajectory_cost(traj: Trajectory, gamma: float) -> float:
    return float(np.dot(traj.grid.trapezoid_weights(), node_costs(traj, gamma)))


def total_cost(state0: SwarmState, u, params: ModelParams, cost: CostParams) -> float:
    """Trapezoidal approximation of the integral of the running cost."""
    return trajectory_cost(integrate_forward(state0, u, cost.grid, params), cost.gamma)


def adjoint_rhs(state: SwarmState, p_k, q_k, params: ModelParams):
    """Right-hand sides of the costate equations, ``(-dp/dt, -dq/dt)``.

    ``-dp_i/dt = (1/N) sum_j a'(r)/r <q_j-q_i, v_j-v_i>(x_j-x_i)`` and
    ``-dq_i/dt = p_i + (1/N) sum_j a(r)(q_j-q_i) - (2/N)(vbar-v_i)``.
    """
    p_k = np.asarray(p_k, dtype=np.float64)
    q_k = np.asarray(q_k, dtype=np.float64)
    if p_k.shape != state.x.shape or q_k.shape != state.v.shape:
        raise ValueError("costate shape does not match state")
    gx, gv = alignment_vjp(state.x, state.v, p_k, q_k, params)
    return gx, gv + velocity_cost_grad(state.v)


def compute_gradient(u, adj: AdjointTrajectory, cost: CostParams, params: ModelParams) -> FloatArray:
    """``grad[k, i] = q[k, i] + (2 gamma / N) u[k, i]``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != adj.q.shape:
        raise ValueError(f"control shape {u.shape} != costate shape {adj.q.shape}")
    return adj.q + (2.0 * cost.gamma / u.shape[1]) * u


def discrete_norm(g, grid: TimeGrid, kind: str = "l2") -> float:
    """``sqrt(dt * sum_k sum_i |g[k, i]|^2)``.

    ``kind="meanfield"`` multiplies by ``sqrt(N)``: the L2 norm of the
    per-agent gradient ``N * g_i`` under the empirical measure. It stays
    O(1) as N grows, whereas the plain norm decays like ``1/sqrt(N)``.
    """
    val = math.sqrt(grid.dt * float(np.sum(np.square(g))))
    if kind == "l2":
        return val
    if kind == "meanfield":
        return math.sqrt(np.shape(g)[1]) * val
    raise ValueError(f"unknown norm {kind!r}")


def stationarity_residual(u, adj: AdjointTrajectory, cost: CostParams) -> float:
    """Discrete norm of ``u + (N / 2 gamma) q``; zero at a stationary control."""
    n = np.shape(u)[1]
    return discrete_norm(np.asarray(u) + n / (2.0 * cost.gamma) * adj.q, cost.grid)


def fd_gradient(state0: SwarmState, u, params: ModelParams, cost: CostParams, h: float = 1e-5,
                l2: bool = False) -> FloatArray:
    """Central differences of ``total_cost`` in every control entry.

    With ``l2=True`` each node's partials are divided by its trapezoidal
    weight, giving the representative comparable with ``compute_gradient``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    u = check_control(u, cost.grid, state0.N, state0.d).copy()

    def partial(idx):
        up = u.copy()
        up[idx] += h
        um = u.copy()
        um[idx] -= h
        return (total_cost(state0, up, params, cost) - total_cost(state0, um, params, cost)) / (2.0 * h)

    indices = list(np.ndindex(u.shape))
    workers = max_workers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            values = list(pool.map(partial, indices))
    else:
        values = [partial(idx) for idx in indices]
    g = np.array(values).reshape(u.shape)
    if l2:
        g /= cost.grid.trapezoid_weights()[:, None, None]
    return g


def _evaluate(state0, u, params, cost):
    traj = integrate_forward(state0, u, cost.grid, params)
    adj = integrate_adjoint(traj, params, cost)
    g = compute_gradient(u, adj, cost, params)
    J = trajectory_cost(traj, cost.gamma)
    if not (math.isfinite(J) and np.all(np.isfinite(g))):
        raise OptimizationError("non-finite cost or gradient")
    return traj, adj, g, J


def bb_descent(state0: SwarmState, u0, params: ModelParams, cost: CostParams, tol: float = 1e-3,
               k_max: int = 500, u_max: float | None = None, norm: str = "l2") -> OCPResult:
    """Gradient descent with Barzilai-Borwein steps.

    The first step uses ``ALPHA_INIT``. Degenerate or non-positive BB steps
    fall back to ``ALPHA_INIT``. ``u_max`` clamps every control component
    to ``[-u_max, u_max]`` after each update. ``norm`` selects the
    stopping norm, see ``discrete_norm``.
    """
    if not tol >= 0:
        raise ValueError("tol must be non-negative")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    grid = cost.grid
    u = check_control(u0, grid, state0.N, state0.d).copy()
    if u_max is not None:
        np.clip(u, -u_max, u_max, out=u)
    # BB inner products in the trapezoidal metric the gradient is represented in
    wts = grid.trapezoid_weights()[:, None, None]

    traj, adj, g, J = _evaluate(state0, u, params, cost)
    gnorm = discrete_norm(g, grid, norm)
    result = OCPResult(u, traj, adj, [J], [gnorm])
    u_prev = g_prev = None
    k = 0
    while gnorm > tol and k < k_max:
        alpha = ALPHA_INIT
        if u_prev is not None:
            s, y = u - u_prev, g - g_prev
            denom = float(np.sum(wts * y * y))
            if denom >= DEGENERATE_DENOM:
                bb = float(np.sum(wts * s * y)) / denom
                if math.isfinite(bb) and bb > 0:
                    alpha = bb
        u_prev, g_prev = u, g
        u = u - alpha * g
        if u_max is not None:
            np.clip(u, -u_max, u_max, out=u)
        k += 1
        traj, adj, g, J = _evaluate(state0, u, params, cost)
        gnorm = discrete_norm(g, grid, norm)
        result.cost_history.append(J)
        result.grad_norm_history.append(gnorm)
        logger.debug("iter %d: J=%.6e |grad|=%.3e alpha=%.3e", k, J, gnorm, alpha)

    result.u_opt, result.traj, result.adjoint = u, traj, adj
    result.iterations = k
    result.converged = gnorm <= tol
    if not result.converged:
        logger.info("bb_descent stopped at k_max=%d with |grad|=%.3e > tol=%.1e", k_max, gnorm, tol)
    return result
