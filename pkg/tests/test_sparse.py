import numpy as np
import pytest

from flockctl.core import ModelParams, SwarmState, TimeGrid
from flockctl.integrator import integrate_forward
from flockctl.sparse import (
    HeatMap,
    NMPCConfig,
    PSOConfig,
    heat_map,
    nmpc_cost,
    nmpc_loop,
    pso_minimize,
    sparsity_fraction,
    window_costs,
    window_horizons,
)


def consensus(N=3, d=2):
    rng = np.random.default_rng(0)
    return SwarmState(rng.normal(size=(N, d)), np.tile([0.4, -0.1][:d], (N, 1)))


# nmpc_cost

def test_nmpc_cost_consensus_zero():
    s = consensus()
    assert nmpc_cost(s, np.zeros((4, 3, 2)), ModelParams(N=3), NMPCConfig(H=3), 0.1) == 0.0


@pytest.mark.parametrize("r, expected", [(1, 7.0), (2, 25.0)])
def test_nmpc_cost_single_agent(r, expected):
    s = SwarmState([[0.0, 0.0]], [[1.0, 1.0]])
    val = nmpc_cost(s, [[[3.0, -4.0]]], ModelParams(N=1), NMPCConfig(H=1, r=r, gamma=1.0), 0.1)
    assert val == expected


def test_nmpc_cost_matches_manual_rollout():
    rng = np.random.default_rng(1)
    s = SwarmState(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    p = ModelParams(N=3)
    g = TimeGrid(0.3, 0.1)
    u = rng.normal(size=(4, 3, 2))
    traj = integrate_forward(s, u, g, p)
    cfg = NMPCConfig(H=3, r=1, gamma=0.5)
    expected = sum(
        (np.sum((traj.v[h] - traj.v[h].mean(axis=0)) ** 2) + 0.5 * np.abs(u[h]).sum()) / 3 for h in range(4))
    assert nmpc_cost(s, u, p, cfg, 0.1) == pytest.approx(expected, rel=1e-13)


def test_nmpc_cost_shape_mismatch():
    with pytest.raises(ValueError):
        nmpc_cost(consensus(), np.zeros((2, 2, 2)), ModelParams(N=3), NMPCConfig(), 0.1)


def test_window_costs_batch_agrees_with_single():
    rng = np.random.default_rng(2)
    s = SwarmState(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    p = ModelParams(N=3)
    cfg = NMPCConfig(H=2, r=2, gamma=0.3)
    U = rng.normal(size=(5, 3, 3, 2))
    batch = window_costs(s.x, s.v, U, p, cfg, 0.1)
    for i in range(5):
        assert batch[i] == pytest.approx(nmpc_cost(s, U[i], p, cfg, 0.1), rel=1e-14)


# pso_minimize

def test_pso_quadratic():
    target = np.array([0.5, -1.0, 2.0, 0.25])
    cfg = PSOConfig(swarm_size=20, max_iters=200, seed=3)
    z, f = pso_minimize(lambda z: float(np.sum((z - target) ** 2)), 4, cfg)
    assert f <= 1e-4
    assert f == pytest.approx(np.sum((z - target) ** 2), rel=0, abs=0)


def test_pso_constant_objective():
    z, f = pso_minimize(lambda z: 3.5, 3, PSOConfig(max_iters=1))
    assert f == 3.5


def test_pso_deterministic():
    obj = lambda z: float(np.sum(np.sin(3 * z) + z * z))  # noqa: E731
    a = pso_minimize(obj, 5, PSOConfig(seed=9))
    b = pso_minimize(obj, 5, PSOConfig(seed=9))
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_pso_streams_differ():
    obj = lambda z: float(np.sum(np.sin(3 * z) + z * z))  # noqa: E731
    a = pso_minimize(obj, 5, PSOConfig(seed=9, max_iters=3), stream=(0,))
    b = pso_minimize(obj, 5, PSOConfig(seed=9, max_iters=3), stream=(1,))
    assert not np.array_equal(a[0], b[0])


def test_pso_best_never_above_evaluated():
    seen = []

    def obj(z):
        val = float(np.sum(np.abs(z - 1.0)) + np.cos(5 * z[0]))
        seen.append(val)
        return val

    _, f = pso_minimize(obj, 3, PSOConfig(swarm_size=10, max_iters=20, seed=4))
    assert f <= min(seen)
    assert f == min(seen)


def test_pso_non_finite_never_selected():
    def obj(z):
        return np.nan if z[0] > 0 else float(z[0] ** 2 + 1)

    z, f = pso_minimize(obj, 2, PSOConfig(seed=1))
    assert np.isfinite(f) and z[0] <= 0


def test_pso_batch_matches_scalar():
    obj = lambda z: float(np.sum((z - 0.3) ** 2))  # noqa: E731
    cfg = PSOConfig(seed=5, max_iters=10)
    a = pso_minimize(obj, 3, cfg)
    b = pso_minimize(lambda Z: np.sum((Z - 0.3) ** 2, axis=1), 3, cfg, batch=True)
    np.testing.assert_array_equal(a[0], b[0])


def test_pso_first_particle_on_center():
    center = np.array([1.0, 2.0])
    z, f = pso_minimize(lambda z: 0.0 if np.array_equal(z, center) else 1.0, 2, PSOConfig(max_iters=1),
                        center=center)
    assert f == 0.0
    np.testing.assert_array_equal(z, center)


@pytest.mark.parametrize("kwargs", [dict(swarm_size=1), dict(max_iters=0), dict(c1=0.0), dict(inertia=-1.0),
                                    dict(init_spread=0.0), dict(seed=-1)])
def test_pso_config_validation(kwargs):
    with pytest.raises(ValueError):
        PSOConfig(**kwargs)


@pytest.mark.parametrize("kwargs", [dict(H=0), dict(r=3), dict(gamma=0.0)])
def test_nmpc_config_validation(kwargs):
    with pytest.raises(ValueError):
        NMPCConfig(**kwargs)


# nmpc_loop

def test_window_horizons_shrink():
    g = TimeGrid(1.0, 0.1)
    hs = window_horizons(g, 3)
    assert len(hs) == g.N_T - 1
    assert hs[0] == 3 and hs[-1] == 1 and hs[-2] == 2


def test_horizon_too_long_rejected():
    g = TimeGrid(0.3, 0.1)
    with pytest.raises(ValueError):
        nmpc_loop(consensus(), g, ModelParams(N=3), NMPCConfig(H=4), PSOConfig())


def test_nmpc_consensus_gives_zero_control():
    g = TimeGrid(0.5, 0.1)
    s = consensus()
    u, traj = nmpc_loop(s, g, ModelParams(N=3), NMPCConfig(H=2), PSOConfig(max_iters=10))
    assert np.abs(u).max() <= 1e-6
    np.testing.assert_allclose(traj.v, np.broadcast_to(s.v, traj.v.shape), atol=1e-12)


def test_nmpc_full_frame_window():
    # H = N_T - 1: the first window spans the whole frame, and its first block is what is applied
    g = TimeGrid(0.3, 0.1)
    rng = np.random.default_rng(6)
    s = SwarmState(rng.normal(size=(2, 1)), rng.normal(size=(2, 1)))
    p = ModelParams(N=2, d=1)
    nmpc = NMPCConfig(H=3, r=2, gamma=0.5)
    pso = PSOConfig(seed=2, max_iters=30)
    assert window_horizons(g, 3)[0] == g.N_T - 1
    u, _ = nmpc_loop(s, g, p, nmpc, pso)

    def obj(Z):
        return window_costs(s.x, s.v, Z.reshape(-1, 4, 2, 1), p, nmpc, g.dt)

    z, _ = pso_minimize(obj, 8, pso, batch=True, stream=(0,))
    np.testing.assert_array_equal(u[0], z.reshape(4, 2, 1)[0])


def test_nmpc_deterministic_and_last_node_zero():
    g = TimeGrid(0.5, 0.1)
    rng = np.random.default_rng(7)
    s = SwarmState(rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    args = (s, g, ModelParams(N=3), NMPCConfig(H=2, gamma=0.2), PSOConfig(seed=11, max_iters=15))
    u1, t1 = nmpc_loop(*args)
    u2, t2 = nmpc_loop(*args)
    np.testing.assert_array_equal(u1, u2)
    np.testing.assert_array_equal(t1.v, t2.v)
    np.testing.assert_array_equal(u1[-1], 0.0)


# heat map and sparsity

def test_heat_map_zero_and_shape():
    h = heat_map(np.zeros((6, 4, 2)))
    assert h.values.shape == (4, 6)
    np.testing.assert_array_equal(h.values, 0.0)


def test_heat_map_single_entry():
    u = np.zeros((6, 4, 2))
    u[3, 1] = (3.0, 4.0)
    h = heat_map(u)
    assert h.values[1, 3] == 5.0
    assert np.count_nonzero(h.values) == 1


def test_sparsity_fraction_examples():
    assert sparsity_fraction(HeatMap(np.zeros((4, 5))), 0.5) == 1.0
    one = np.zeros((10, 10))
    one[2, 7] = 1.0
    assert sparsity_fraction(HeatMap(one), 0.5) == pytest.approx(0.99)
    assert sparsity_fraction(HeatMap(np.full((3, 3), 2.0)), 0.5) == 0.0
    with pytest.raises(ValueError):
        sparsity_fraction(HeatMap(one), 1.0)
