"""Cucker-Smale model: states, interaction kernel, right-hand sides and
consensus functionals.

Array conventions: a swarm is stored as two ``(N, d)`` arrays. The
vectorised kernels (``alignment``, ``alignment_vjp``) also accept a leading
batch axis, ``(..., N, d)``, which the PSO rollouts use to evaluate a whole
particle swarm at once.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import integrate

FloatArray = NDArray[np.float64]


class DomainError(ValueError):
    """Argument outside the domain of a model function."""


@dataclass(frozen=True)
class ModelParams:
    K: float = 1.0
    beta: float = 1.0
    N: int = 1
    d: int = 2

    def __post_init__(self):
        if not (math.isfinite(self.K) and self.K > 0):
            raise ValueError(f"K must be positive, got {self.K}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d}")


@dataclass(frozen=True)
class SwarmState:
    """Positions ``x`` and velocities ``v`` of N agents, both ``(N, d)``."""

    x: FloatArray
    v: FloatArray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if x.ndim != 2 or x.shape != v.shape:
            raise ValueError(f"x and v must be matching (N, d) arrays, got {x.shape} and {v.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise ValueError("state contains non-finite entries")
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def N(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k*dt``, ``k = 0..N_T-1``, ending at ``T``."""

    T: float
    dt: float

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        steps = round(self.T / self.dt)
        if steps < 1 or abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")

    @property
    def N_T(self) -> int:
        return round(self.T / self.dt) + 1

    @property
    def times(self) -> FloatArray:
        return np.arange(self.N_T) * self.dt

    def trapezoid_weights(self) -> FloatArray:
        """Composite trapezoidal weights on the grid nodes."""
        w = np.full(self.N_T, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


def check_control(u: FloatArray, grid: TimeGrid, N: int, d: int) -> FloatArray:
    """Validate a control field of shape ``(N_T, N, d)`` and return it as float64."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (grid.N_T, N, d):
        raise ValueError(f"control shape {u.shape} != {(grid.N_T, N, d)}")
    if not np.all(np.isfinite(u)):
        raise ValueError("control contains non-finite entries")
    return u


def _check_radius(r):
    r = np.asarray(r, dtype=np.float64)
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise DomainError(f"kernel radius must be finite and non-negative, got {r}")
    return r


def _kernel_sq(r2, params: ModelParams):
    # kernel as a function of the squared distance
    if params.beta == 1.0:
        return params.K / (1.0 + r2)
    return params.K * (1.0 + r2) ** (-params.beta)


def kernel_eval(r, params: ModelParams):
    """Communication weight ``K / (1 + r^2)^beta``."""
    r = _check_radius(r)
    out = _kernel_sq(r * r, params)
    return float(out) if out.ndim == 0 else out


def kernel_slope_ratio(r, params: ModelParams):
    """``a'(r) / r`` in closed form, ``-2 beta K / (1 + r^2)^(beta + 1)``.

    Finite at ``r = 0``, so coincident agents need no special handling.
    """
    r = _check_radius(r)
    out = -2.0 * params.beta * _kernel_sq(r * r, params) / (1.0 + r * r)
    return float(out) if out.ndim == 0 else out


def pairwise_sq_dist(x: FloatArray) -> FloatArray:
    """``r2[..., i, j] = |x_i - x_j|^2``, exactly symmetric."""
    r2 = None
    for k in range(x.shape[-1]):
        c = x[..., :, k]
        diff = c[..., None, :] - c[..., :, None]
        r2 = diff * diff if r2 is None else r2 + diff * diff
    return r2


def _laplacian_apply(a, y, n):
    # (1/n) sum_j a_ij (y_j - y_i); shifting y by a common row leaves this
    # unchanged and makes equal rows give exactly zero
    y = y - y[..., :1, :]
    return (a @ y - a.sum(axis=-1)[..., None] * y) / n


def alignment(x: FloatArray, v: FloatArray, params: ModelParams) -> FloatArray:
    """Velocity derivative of the free flow, ``(1/N) sum_j a(|x_i-x_j|)(v_j-v_i)``."""
    a = _kernel_sq(pairwise_sq_dist(x), params)
    return _laplacian_apply(a, v, x.shape[-2])


def alignment_vjp(x: FloatArray, v: FloatArray, p: FloatArray, q: FloatArray,
                  params: ModelParams):
    """Transpose Jacobian of the free flow applied to a cotangent ``(p, q)``.

    Returns ``(gx, gv)`` with ``gx_i = (1/N) sum_j a'/r <q_j-q_i, v_j-v_i>(x_j-x_i)``
    and ``gv_i = p_i + (1/N) sum_j a_ij (q_j - q_i)``. These are the
    homogeneous parts of the costate equations.
    """
    n = x.shape[-2]
    r2 = pairwise_sq_dist(x)
    a = _kernel_sq(r2, params)
    slope = (-2.0 * params.beta) * a / (1.0 + r2)
    # <q_j - q_i, v_j - v_i> = s_i + s_j - q_i.v_j - q_j.v_i, without N x N x d temporaries
    s = np.sum(q * v, axis=-1)
    m = q @ np.swapaxes(v, -1, -2)
    w = slope * (s[..., :, None] + s[..., None, :] - m - np.swapaxes(m, -1, -2))
    return _laplacian_apply(w, x, n), p + _laplacian_apply(a, q, n)


def free_rhs(state: SwarmState, params: ModelParams) -> SwarmState:
    """Time derivative ``(dx, dv)`` of the uncontrolled dynamics."""
    return SwarmState(state.v, alignment(state.x, state.v, params))


def controlled_rhs(state: SwarmState, u_k, params: ModelParams) -> SwarmState:
    """Free right-hand side with the forcing ``u_k`` added to ``dv``."""
    u_k = np.asarray(u_k, dtype=np.float64)
    if u_k.shape != state.v.shape:
        raise ValueError(f"control shape {u_k.shape} != state shape {state.v.shape}")
    return SwarmState(state.v, alignment(state.x, state.v, params) + u_k)


def bilinear_B(w, v) -> float:
    """``B(w, v) = (1 / 2N^2) sum_{i,j} |w_i - v_j|^2``."""
    w = np.asarray(w, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if w.shape != v.shape:
        raise ValueError(f"shape mismatch {w.shape} vs {v.shape}")
    n = w.shape[0]
    # expand the square about a common row; consensus then gives exactly 0
    c = v[0]
    wc = w - c
    vc = v - c
    total = n * np.sum(wc * wc) + n * np.sum(vc * vc) - 2.0 * np.dot(wc.sum(axis=0), vc.sum(axis=0))
    return float(max(total, 0.0) / (2.0 * n * n))


def consensus_functionals(state: SwarmState) -> tuple[float, float]:
    """Return ``(V, X)``, the velocity and position spreads."""
    return bilinear_B(state.v, state.v), bilinear_B(state.x, state.x)


def velocity_deviation(v):
    """``v - vbar`` over the agent axis (second to last), batched.

    Centred on the first agent before averaging so a consensus state gives
    exact zeros.
    """
    w = v - v[..., :1, :]
    return w - w.mean(axis=-2, keepdims=True)


def mean_velocity(state: SwarmState) -> FloatArray:
    return state.v.mean(axis=0)


class Verdict(str, enum.Enum):
    UNCONDITIONAL = "Unconditional"
    CONDITIONAL = "Conditional"
    UNKNOWN = "Unknown"


def consensus_threshold(X0: float, params: ModelParams, N: int | None = None) -> float:
    """``int_{sqrt(X0)}^inf a(2 sqrt(N) s) ds`` for ``beta > 1/2``.

    Closed form for ``beta = 1``; otherwise adaptive quadrature truncated
    where the integrand falls below ``1e-12`` of its value at the lower end.
    """
    n = params.N if N is None else N
    if params.beta <= 0.5:
        raise DomainError("threshold integral diverges for beta <= 1/2")
    lo = math.sqrt(max(X0, 0.0))
    c = 2.0 * math.sqrt(n)
    if params.beta == 1.0:
        return params.K / c * (0.5 * math.pi - math.atan(c * lo))

    b = params.beta

    def f(s):
        return params.K / (1.0 + (c * s) ** 2) ** b

    ratio = 1e12 ** (1.0 / b)
    hi = math.sqrt(max(((1.0 + (c * lo) ** 2) * ratio - 1.0), 0.0)) / c
    mid = lo + 1.0 / c
    head, err_head = integrate.quad(f, lo, mid, epsabs=1e-10)
    if err_head > 1e-8:
        raise RuntimeError(f"threshold quadrature did not converge on [{lo}, {mid}]: err={err_head}")
    if hi <= mid:
        return head
    # log substitution s = e^y tames the slowly decaying tail
    body, err_body = integrate.quad(lambda y: f(math.exp(y)) * math.exp(y),
                                    math.log(mid), math.log(hi), epsabs=1e-10, limit=200)
    if err_body > 1e-8:
        raise RuntimeError(f"threshold quadrature did not converge on [{mid}, {hi}]: err={err_body}")
    # beyond hi the integrand is K (c s)^(-2 beta) to relative 1e-12
    tail = params.K * c ** (-2.0 * b) * hi ** (1.0 - 2.0 * b) / (2.0 * b - 1.0)
    return head + body + tail


def predict_consensus(state0: SwarmState, params: ModelParams) -> Verdict:
    """Classify the initial state by the classical self-organisation criteria.

    ``Unknown`` means the sufficient condition failed; it does not imply
    that the free flow diverges.
    """
    if params.beta <= 0.5:
        return Verdict.UNCONDITIONAL
    V0, X0 = consensus_functionals(state0)
    theta = consensus_threshold(X0, params, N=state0.N)
    return Verdict.CONDITIONAL if math.sqrt(V0) < theta else Verdict.UNKNOWN
