"""Fixed-step RK4 for the swarm state and its costate.

The control is piecewise constant: ``u[k]`` is held across all four stages
of step ``k``. The last node's control never enters the dynamics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .core import (FloatArray, ModelParams, SwarmState, TimeGrid, alignment, alignment_vjp, check_control,
                    velocity_deviation)

if TYPE_CHECKING:
    from .ocp import CostParams

logger = logging.getLogger(__name__)


class IntegrationError(FloatingPointError):
    """A non-finite value appeared during time stepping."""

    def __init__(self, what: str, step: int):
        super().__init__(f"non-finite {what} at step {step}")
        self.step = step


@dataclass(frozen=True)
class Trajectory:
    """Nodal states on a grid. ``x`` and ``v`` are ``(N_T, N, d)``.

    ``control`` is the field the trajectory was produced with; the discrete
    adjoint needs it to rebuild the RK4 stages.
    """

    grid: TimeGrid
    x: FloatArray
    v: FloatArray
    control: FloatArray

    def __len__(self):
        return self.x.shape[0]

    def state(self, k: int) -> SwarmState:
        return SwarmState(self.x[k], self.v[k])

    @property
    def states(self) -> list[SwarmState]:
        return [self.state(k) for k in range(len(self))]


@dataclass(frozen=True)
class AdjointTrajectory:
    """Costates ``p`` (position) and ``q`` (velocity), each ``(N_T, N, d)``.

    Both vanish at the final node.
    """

    grid: TimeGrid
    p: FloatArray
    q: FloatArray


def rk4_step(x, v, u, params: ModelParams, h: float):
    """One classical RK4 step of the controlled flow. Batched over leading axes."""
    k1x, k1v = v, alignment(x, v, params) + u
    x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
    k2x, k2v = v2, alignment(x2, v2, params) + u
    x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
    k3x, k3v = v3, alignment(x3, v3, params) + u
    x4, v4 = x + h * k3x, v + h * k3v
    k4x, k4v = v4, alignment(x4, v4, params) + u
    return (x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x),
            v + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


def integrate_forward(state0: SwarmState, u, grid: TimeGrid, params: ModelParams) -> Trajectory:
    N, d = state0.N, state0.d
    if u is None:
        u = np.zeros((grid.N_T, N, d))
    u = check_control(u, grid, N, d)
    xs = np.empty((grid.N_T, N, d))
    vs = np.empty((grid.N_T, N, d))
    xs[0], vs[0] = state0.x, state0.v
    # overflow surfaces through the finiteness check below
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(grid.N_T - 1):
            xs[k + 1], vs[k + 1] = rk4_step(xs[k], vs[k], u[k], params, grid.dt)
            if not (np.all(np.isfinite(xs[k + 1])) and np.all(np.isfinite(vs[k + 1]))):
                raise IntegrationError("state", k)
    for arr in (xs, vs):
        arr.flags.writeable = False
    return Trajectory(grid, xs, vs, u)


def velocity_cost_grad(v: FloatArray) -> FloatArray:
    """Gradient of ``(1/N) sum_j |vbar - v_j|^2`` with respect to ``v``."""
    n = v.shape[-2]
    return (2.0 / n) * velocity_deviation(v)


def _discrete_adjoint(traj: Trajectory, params: ModelParams):
    # Reverse sweep through the RK4 stages. lam[k] = dJ/dy_k exactly for the
    # trapezoidal cost; p, q are the sensitivities to a constant forcing on
    # step k divided by the node weight, so that grad = q + (2 gamma/N) u.
    grid = traj.grid
    h = grid.dt
    w = grid.trapezoid_weights()
    N_T = grid.N_T
    p = np.zeros_like(traj.x)
    q = np.zeros_like(traj.v)
    lam_x = np.zeros_like(traj.x[0])
    lam_v = w[-1] * velocity_cost_grad(traj.v[-1])
    for k in range(N_T - 2, -1, -1):
        x, v, u = traj.x[k], traj.v[k], traj.control[k]
        k1v = alignment(x, v, params) + u
        x2, v2 = x + 0.5 * h * v, v + 0.5 * h * k1v
        k2v = alignment(x2, v2, params) + u
        x3, v3 = x + 0.5 * h * v2, v + 0.5 * h * k2v
        k3v = alignment(x3, v3, params) + u
        x4, v4 = x + h * v3, v + h * k3v

        c4x, c4v = h / 6.0 * lam_x, h / 6.0 * lam_v
        g4x, g4v = alignment_vjp(x4, v4, c4x, c4v, params)
        c3x, c3v = h / 3.0 * lam_x + h * g4x, h / 3.0 * lam_v + h * g4v
        g3x, g3v = alignment_vjp(x3, v3, c3x, c3v, params)
        c2x, c2v = h / 3.0 * lam_x + 0.5 * h * g3x, h / 3.0 * lam_v + 0.5 * h * g3v
        g2x, g2v = alignment_vjp(x2, v2, c2x, c2v, params)
        c1x, c1v = h / 6.0 * lam_x + 0.5 * h * g2x, h / 6.0 * lam_v + 0.5 * h * g2v
        g1x, g1v = alignment_vjp(x, v, c1x, c1v, params)

        p[k] = (c1x + c2x + c3x + c4x) / w[k]
        q[k] = (c1v + c2v + c3v + c4v) / w[k]
        lam_x = lam_x + g1x + g2x + g3x + g4x
        lam_v = lam_v + g1v + g2v + g3v + g4v + w[k] * velocity_cost_grad(v)
        if not (np.all(np.isfinite(lam_x)) and np.all(np.isfinite(lam_v))):
            raise IntegrationError("adjoint", k)
    return p, q


def _interpolated_adjoint(traj: Trajectory, params: ModelParams):
    # RK4 on the continuous costate equations, backward from p = q = 0 at T;
    # half-step states are linear interpolants of the stored nodes.
    from .ocp import adjoint_rhs

    h = traj.grid.dt
    p = np.zeros_like(traj.x)
    q = np.zeros_like(traj.v)

    def rhs(x, v, pk, qk):
        return adjoint_rhs(SwarmState(x, v), pk, qk, params)

    for k in range(traj.grid.N_T - 1, 0, -1):
        xa, va = traj.x[k], traj.v[k]
        xb, vb = traj.x[k - 1], traj.v[k - 1]
        xm, vm = 0.5 * (xa + xb), 0.5 * (va + vb)
        k1p, k1q = rhs(xa, va, p[k], q[k])
        k2p, k2q = rhs(xm, vm, p[k] + 0.5 * h * k1p, q[k] + 0.5 * h * k1q)
        k3p, k3q = rhs(xm, vm, p[k] + 0.5 * h * k2p, q[k] + 0.5 * h * k2q)
        k4p, k4q = rhs(xb, vb, p[k] + h * k3p, q[k] + h * k3q)
        p[k - 1] = p[k] + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q[k - 1] = q[k] + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        if not (np.all(np.isfinite(p[k - 1])) and np.all(np.isfinite(q[k - 1]))):
            raise IntegrationError("adjoint", k - 1)
    return p, q


def integrate_adjoint(traj: Trajectory, params: ModelParams, cost: CostParams | None = None,
                      method: str = "discrete") -> AdjointTrajectory:
    """Backward costate solve along ``traj``.

    ``method="discrete"`` (default) differentiates the RK4 scheme and the
    trapezoidal cost exactly, so the resulting gradient agrees with finite
    differences of ``total_cost`` to roundoff. ``method="interpolated"``
    integrates the continuous costate ODEs with RK4 and linearly
    interpolated half-step states; it is first-order consistent with the
    discrete gradient. The state source term does not depend on ``gamma``,
    so ``cost`` is accepted for interface symmetry only.
    """
    solvers = {"discrete": _discrete_adjoint, "interpolated": _interpolated_adjoint}
    if method not in solvers:
        raise ValueError(f"unknown adjoint method {method!r}")
    with np.errstate(over="ignore", invalid="ignore"):
        p, q = solvers[method](traj, params)
    return AdjointTrajectory(traj.grid, p, q)
