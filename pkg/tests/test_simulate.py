import math

import numpy as np
import pytest

from renewcap.model import (FeedbackPolicy, SystemState, ThresholdPolicy, TimeGrid,
                            discounted_mean_demand, mean_demand, no_jump_solution, step_euler)
from renewcap.rng import RngStream
from renewcap.simulate import mc_cost, simulate_exact_latent, simulate_paths

SCHEMES = [simulate_paths, simulate_exact_latent]


def riemann_discounted_demand(params, grid):
    """Independent left-point quadrature of e^{-rt} E[D(t)] from the OU moment formula."""
    t = np.arange(grid.M) * grid.dt
    h20 = params.x0[1] / params.p
    mean = params.p * (h20 * np.exp(-params.xi2 * t)
                       + params.sigma22 * params.lam2 / params.m2
                       * (1 - np.exp(-params.xi2 * t)) / params.xi2)
    return grid.dt * float(np.sum(np.exp(-params.r * t) * mean))


def test_exact_scheme_reproduces_no_jump_solution(no_jumps, grid):
    b = simulate_exact_latent(no_jumps, grid, ThresholdPolicy(1.0), 3, RngStream(0))
    v, d = no_jump_solution(no_jumps, grid.nodes)
    assert np.max(np.abs(b.v - v)) <= 1e-10
    assert np.max(np.abs(b.d - d)) <= 1e-10
    assert np.all(b.c == 0.0)


def test_euler_no_jump_error_is_first_order(no_jumps):
    errs = []
    for M in (50, 100, 200):
        g = TimeGrid(1.0, M)
        b = simulate_paths(no_jumps, g, ThresholdPolicy(0.0), 1, RngStream(0))
        v, d = no_jump_solution(no_jumps, g.nodes)
        errs.append(np.max(np.abs(b.v[0] - v)))
    for coarse, fine in zip(errs, errs[1:]):
        assert 1.6 <= coarse / fine <= 2.4


@pytest.mark.parametrize("simulate", SCHEMES)
def test_capacity_factor_range_and_monotone_capacity(params, grid, simulate):
    b = simulate(params, grid, ThresholdPolicy(2.0), 500, RngStream(1))
    assert np.all(b.v >= 0.0) and np.all(b.v < 1.0)
    assert np.all(np.diff(b.c, axis=1) >= 0.0)
    assert np.all(b.d >= 0.0)


@pytest.mark.parametrize("simulate", SCHEMES)
def test_policy_monotonicity_with_shared_draws(params, grid, simulate):
    rng = RngStream(12)
    caps = [simulate(params, grid, ThresholdPolicy(A), 300, rng).c for A in (0.0, 0.5, 1.58, 3.0)]
    for low, high in zip(caps, caps[1:]):
        assert np.all(low <= high)


@pytest.mark.parametrize("simulate", SCHEMES)
def test_seed_determinism(params, grid, simulate):
    a = simulate(params, grid, ThresholdPolicy(1.58), 64, RngStream(9))
    b = simulate(params, grid, ThresholdPolicy(1.58), 64, RngStream(9))
    for name in ("v", "d", "c", "dv1", "dv2", "counts", "running_cost"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = simulate(params, grid, ThresholdPolicy(1.58), 64, RngStream(10))
    assert not np.array_equal(a.v, c.v)


def test_paths_do_not_depend_on_batch_size(params, grid):
    small = simulate_paths(params, grid, ThresholdPolicy(1.0), 5, RngStream(3))
    large = simulate_paths(params, grid, ThresholdPolicy(1.0), 50, RngStream(3))
    assert np.array_equal(small.v, large.v[:5])
    assert np.array_equal(small.c, large.c[:5])


def test_bundle_replays_through_scalar_step(params, grid):
    """Kernel output equals the scalar reference step fed with re-derived jumps."""
    b = simulate_paths(params, grid, ThresholdPolicy(1.58), 20, RngStream(21))
    for j in range(20):
        state = SystemState(*params.x0)
        for n in range(grid.M):
            jumps = b.jump_sample(j, n)
            assert (jumps[0].count, jumps[1].count) == tuple(b.counts[j, n])
            state, dv1, dv2 = step_euler(state, grid.t(n), jumps, 1.58, grid.dt, params)
            assert dv1 == pytest.approx(b.dv1[j, n], abs=1e-13)
            assert dv2 == pytest.approx(b.dv2[j, n], abs=1e-13)
            assert state.v == pytest.approx(b.v[j, n + 1], abs=1e-12)
            assert state.d == pytest.approx(b.d[j, n + 1], abs=1e-12)
            assert state.c == pytest.approx(b.c[j, n + 1], abs=1e-12)


def test_exact_scheme_installs_telescope(params, grid):
    """Per-source increments add up to the exact change of v at jump times."""
    b = simulate_exact_latent(params, grid, ThresholdPolicy(3.0), 200, RngStream(4))
    h1 = -np.log1p(-b.v)
    decay = math.exp(-params.xi1 * grid.dt)
    # with no jumps in a step, h1 decays by exactly exp(-xi1 dt)
    quiet = b.counts.sum(axis=2) == 0
    ok = ~quiet | (b.v[:, 1:] > 1 - 1e-9)
    ratio = h1[:, 1:] / h1[:, :-1]
    assert np.allclose(ratio[quiet & (b.v[:, 1:] < 0.99)], decay, rtol=1e-9)
    assert np.all(b.dv1[quiet] == 0.0) and ok.any()


def test_running_cost_without_installs_is_discounted_demand(params, grid):
    b = simulate_paths(params, grid, ThresholdPolicy(0.0), 50, RngStream(2))
    expected = grid.dt * np.sum(np.exp(-params.r * grid.nodes[:-1]) * b.d[:, :-1], axis=1)
    assert np.allclose(b.running_cost, expected, rtol=1e-12, atol=0)


def test_mc_cost_deterministic_case_has_zero_stderr(no_jumps, grid):
    est, se = mc_cost(no_jumps, grid, ThresholdPolicy(1.58), 100, RngStream(0))
    assert se == 0.0
    # c0 = 0 and no jumps: nothing is installed; Euler demand decays geometrically
    n = np.arange(grid.M)
    d = no_jumps.x0[1] * (1 - no_jumps.xi2 * grid.dt) ** n
    assert est == pytest.approx(grid.dt * np.sum(np.exp(-no_jumps.r * n * grid.dt) * d), rel=1e-12)


@pytest.mark.parametrize("scheme", ["euler", "exact-latent"])
def test_mc_cost_zero_policy_matches_demand_quadrature(params, grid, scheme):
    p = params.replace(kappa=0.0)
    est, se = mc_cost(p, grid, ThresholdPolicy(0.0), 200_000, RngStream(31), scheme=scheme)
    assert abs(est - riemann_discounted_demand(p, grid)) < 3 * se


def test_mc_cost_zero_policy_matches_continuous_integral_on_fine_grid(params):
    p = params.replace(kappa=0.0)
    g = TimeGrid(1.0, 1000)
    est, se = mc_cost(p, g, ThresholdPolicy(0.0), 100_000, RngStream(32), scheme="exact-latent")
    assert abs(est - discounted_mean_demand(p)) < 3 * se


def test_exact_scheme_demand_mean_at_every_node(params, grid):
    b = simulate_exact_latent(params, grid, ThresholdPolicy(0.0), 100_000, RngStream(8))
    se = b.d.std(axis=0, ddof=1) / math.sqrt(b.batch_size)
    z = np.abs(b.d.mean(axis=0) - mean_demand(params, grid.nodes))[1:] / se[1:]
    assert z.max() < 4.0  # 50 correlated nodes: allow for the max over nodes


def test_feedback_zero_policy_equals_threshold_zero(params, grid):
    zero = FeedbackPolicy(lambda t, v, d, c: np.zeros((len(t), 2)))
    a = mc_cost(params, grid, zero, 5000, RngStream(6))
    b = mc_cost(params, grid, ThresholdPolicy(0.0), 5000, RngStream(6))
    assert a.estimate == pytest.approx(b.estimate, rel=1e-12)


def test_feedback_policy_rollout(params, grid):
    const = FeedbackPolicy(lambda t, v, d, c: np.tile([0.5, 2.0], (len(t), 1)))
    b = simulate_paths(params, grid, const, 100, RngStream(7))
    expected = np.cumsum(0.5 * b.dv1 + 2.0 * b.dv2, axis=1)
    assert np.allclose(b.c[:, 1:], expected, rtol=1e-12, atol=1e-15)
    assert b.controls.shape == (100, grid.M, 2)


def test_mc_cost_requires_two_paths(params, grid):
    with pytest.raises(ValueError):
        mc_cost(params, grid, ThresholdPolicy(0.0), 1, RngStream(0))
