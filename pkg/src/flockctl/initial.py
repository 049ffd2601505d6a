"""Seeded initial-state generators for the CLI workflows."""

from __future__ import annotations

import numpy as np

from .core import SwarmState


def _rng(seed: int, tag: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tag,)))


def counter_moving_groups(N: int, d: int = 2, seed: int = 0, separation: float = 1.0, speed: float = 1.0,
                          spread: float = 0.5, noise: float = 0.3) -> SwarmState:
    """Two half-swarms centred at ``+-separation`` on the first axis, drifting
    apart at ``+-speed``. With a decaying kernel the free flow does not reach
    consensus."""
    rng = _rng(seed, 1)
    x = rng.normal(scale=spread, size=(N, d))
    v = rng.normal(scale=noise, size=(N, d))
    half = N // 2
    x[:half, 0] += separation
    x[half:, 0] -= separation
    v[:half, 0] += speed
    v[half:, 0] -= speed
    return SwarmState(x, v)


def dispersed(N: int, d: int = 2, seed: int = 0, box: float = 1.0, speed: float = 1.0) -> SwarmState:
    """Positions uniform in ``[-box, box]^d``, velocities uniform in ``[-speed, speed]^d``."""
    rng = _rng(seed, 2)
    return SwarmState(rng.uniform(-box, box, size=(N, d)), rng.uniform(-speed, speed, size=(N, d)))


def in_consensus(N: int, d: int = 2, seed: int = 0, box: float = 1.0, velocity=None) -> SwarmState:
    """Scattered positions, all agents sharing one velocity (default ``(1, 0, ...)``)."""
    rng = _rng(seed, 3)
    vel = np.zeros(d) if velocity is None else np.asarray(velocity, dtype=np.float64)
    if velocity is None:
        vel[0] = 1.0
    return SwarmState(rng.uniform(-box, box, size=(N, d)), np.tile(vel, (N, 1)))
