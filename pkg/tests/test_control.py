import numpy as np
import pytest

from renewcap.control import (ControlTrainConfig, as_policy, init_policy, policy_surface,
                              rollout_loss, sample_paths, train_policy)
from renewcap.model import ThresholdPolicy, TimeGrid
from renewcap.nn import init_params, mlp_forward
from renewcap.rng import RngStream
from renewcap.simulate import mc_cost


def _small_policy(seed=0, width=4):
    net = init_params([4, width, width, 2], "relu", "he-normal", np.random.default_rng(seed),
                      output_transform="softplus")
    for b in net.biases:
        b[:] = np.random.default_rng(seed + 1).normal(size=b.shape) * 0.3
    return net


def _fd_rel_error(net, params, grid, B, rng):
    out = rollout_loss(net, params, grid, B, rng)
    analytic = np.concatenate([g.ravel() for g in out.grads])
    theta = net.flat()
    h = 1e-6
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        vals = []
        for sign in (1, -1):
            t = theta.copy()
            t[i] += sign * h
            net.set_flat(t)
            vals.append(rollout_loss(net, params, grid, B, rng, with_grad=False).loss)
        numeric[i] = (vals[0] - vals[1]) / (2 * h)
    net.set_flat(theta)
    scale = np.maximum(np.abs(numeric), 1e-6)
    return np.max(np.abs(analytic - numeric) / scale)


def test_rollout_gradient_matches_finite_differences(params):
    # amplified jumps so that installs, shortfall switches and capacity feedback all occur
    p = params.replace(lam1=40.0, lam2=40.0)
    grid = TimeGrid(1.0, 3)
    worst = max(_fd_rel_error(_small_policy(s), p, grid, 2, RngStream(s)) for s in range(5))
    assert worst < 1e-3


def test_rollout_matches_simulator(params, grid):
    net = _small_policy(3, width=8)
    rng = RngStream(4)
    out = rollout_loss(net, params, grid, 50, rng, with_grad=False)
    est = mc_cost(params, grid, as_policy(net), 50, rng)
    assert out.loss == pytest.approx(est.estimate, rel=1e-12)


def test_zero_policy_equals_threshold_zero(params, grid):
    net = _small_policy(5)
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = -800.0  # softplus underflows to zero
    assert np.all(mlp_forward(net, np.zeros((3, 4))) == 0.0)
    rng = RngStream(6)
    out = rollout_loss(net, params, grid, 2000, rng, with_grad=False)
    ref = mc_cost(params, grid, ThresholdPolicy(0.0), 2000, rng)
    assert out.loss == pytest.approx(ref.estimate, rel=1e-12)


def test_policy_outputs_are_positive(params):
    net = init_policy(ControlTrainConfig(), RngStream(0))
    assert net.dims == [4, 256, 256, 2]
    x = np.random.default_rng(0).normal(size=(1000, 4)) * 10
    a = mlp_forward(net, x)
    assert np.all(np.isfinite(a)) and np.all(a >= 0)


def test_training_is_deterministic_and_records_history(params):
    cfg = ControlTrainConfig(batch_size=64, epochs=3, width=8, M=10, eval_paths=200)
    a = train_policy(params, cfg)
    b = train_policy(params, cfg)
    assert len(a.loss_history) == 3
    assert np.array_equal(a.net.flat(), b.net.flat())
    assert a.oos == b.oos
    assert np.isfinite(a.oos.estimate) and a.oos.stderr > 0


def test_surface_and_sample_paths(params):
    cfg = ControlTrainConfig(width=8)
    net = init_policy(cfg, RngStream(1))
    surf = policy_surface(net, params, ("t", "v"), (5, 4))
    assert surf.shape == (20, 4)
    assert surf[0, 0] == 0.0 and surf[-1, 0] == params.T
    assert np.all(surf[:, 2:] >= 0)
    grid = TimeGrid(1.0, 10)
    bundle = sample_paths(net, params, grid, 3, RngStream(2))
    assert bundle.controls.shape == (3, 10, 2)
    assert np.all(np.diff(bundle.c, axis=1) >= 0)


def test_config_validation():
    with pytest.raises(ValueError, match="batch_size"):
        ControlTrainConfig(batch_size=0)
    assert ControlTrainConfig().scaled(0.1).epochs == 5
