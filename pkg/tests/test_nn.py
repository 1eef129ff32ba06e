import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from renewcap.nn import (Adam, AdamState, NonFiniteLossError, adam_step, init_params,
                         load_params, mlp_backward, mlp_forward, mlp_gradient, param_count,
                         save_params)


def _fd_check(net, x, loss_fn, h=1e-6, floor=1e-8):
    """Max relative error between analytic and central-difference gradients."""
    bundle = mlp_gradient(net, x, loss_fn)
    analytic = np.concatenate([g.ravel() for g in bundle.grads])
    theta = net.flat()
    numeric = np.empty_like(theta)
    for i in range(theta.size):
        for sign in (1, -1):
            t = theta.copy()
            t[i] += sign * h
            net.set_flat(t)
            numeric[i] += 0 if sign == 1 else 0
            val = np.mean(loss_fn(mlp_forward(net, x))[0])
            numeric[i] = val if sign == 1 else (numeric[i] - val) / (2 * h)
    net.set_flat(theta)
    return np.max(np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)
                  * (np.abs(analytic - numeric) > 1e-9))


def square_loss(target):
    return lambda y: (np.sum((y - target) ** 2, axis=1), 2 * (y - target))


@pytest.mark.parametrize("activation,transform", [("tanh", "identity"), ("relu", "softplus")])
def test_gradient_matches_finite_differences(activation, transform):
    rng = np.random.default_rng(0)
    scheme = "glorot-uniform" if activation == "tanh" else "he-normal"
    net = init_params([4, 7, 5, 2], activation, scheme, rng, output_transform=transform)
    for b in net.biases:
        b[:] = rng.normal(size=b.shape) * 0.1
    x = rng.normal(size=(6, 4))
    assert _fd_check(net, x, square_loss(rng.normal(size=(6, 2)))) < 1e-5


def test_gradient_check_over_many_random_networks():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        dims = [int(rng.integers(1, 5)), *rng.integers(1, 6, size=rng.integers(1, 3)),
                int(rng.integers(1, 3))]
        net = init_params(dims, "tanh", "glorot-uniform", rng)
        x = rng.normal(size=(3, dims[0]))
        worst = max(worst, _fd_check(net, x, square_loss(rng.normal(size=(3, dims[-1])))))
    assert worst < 1e-5


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    net = init_params([4, 8, 8, 2], "tanh", "glorot-uniform", rng, output_transform="softplus")
    x = rng.normal(size=(5, 4))
    w = rng.normal(size=(5, 2))
    y, cache = mlp_forward(net, x, return_cache=True)
    _, g_in = mlp_backward(net, cache, w)
    h = 1e-6
    for i in range(5):
        for k in range(4):
            xp, xm = x.copy(), x.copy()
            xp[i, k] += h
            xm[i, k] -= h
            fd = (np.sum(w * mlp_forward(net, xp)) - np.sum(w * mlp_forward(net, xm))) / (2 * h)
            assert g_in[i, k] == pytest.approx(fd, rel=1e-6, abs=1e-9)


@given(d0=st.integers(1, 10), d1=st.integers(1, 5), L=st.integers(1, 4), m=st.integers(1, 64))
@settings(max_examples=50, deadline=None)
def test_param_count_formula(d0, d1, L, m):
    # L counts the width-m to width-m maps, so the net has L + 1 hidden layers
    net = init_params([d0, *[m] * (L + 1), d1], "tanh")
    assert net.n_params == param_count(d0, d1, L, m)


def test_param_counts_of_the_shipped_architectures():
    # two hidden layers means one width-m to width-m map
    assert param_count(4, 1, 1, 100) == 10_701
    assert param_count(5, 1, 1, 100) == 10_801
    assert param_count(4, 2, 1, 256) == 67_586
    net = init_params([4, 100, 100, 1], "tanh")
    assert net.n_params == param_count(4, 1, net.n_hidden - 1, 100)


def test_adam_first_step_moves_each_weight_by_lr():
    net = init_params([2, 3, 1], "tanh", rng=np.random.default_rng(3))
    before = net.flat()
    grads = [np.full_like(a, g) for a, g in zip(net.arrays, (0.5, -2.0, 1e-3, -7.0))]
    adam_step(AdamState.for_params(net, lr=1e-3), net, grads)
    step = net.flat() - before
    expect = -1e-3 * np.sign(np.concatenate([g.ravel() for g in grads]))
    np.testing.assert_allclose(step, expect, rtol=1e-4)


def test_adam_matches_hand_iteration():
    net = init_params([1, 1], "tanh", rng=np.random.default_rng(4))
    w0 = float(net.weights[0][0, 0])
    opt = Adam(net, lr=0.1)
    g_seq = [1.0, -0.5, 0.25]
    m = v = 0.0
    w = w0
    for t, g in enumerate(g_seq, 1):
        opt.step([np.array([[g]]), np.array([0.0])])
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert float(net.weights[0][0, 0]) == pytest.approx(w, rel=1e-14)


def test_adam_zero_gradient_is_a_no_op():
    net = init_params([3, 4, 1], "tanh", rng=np.random.default_rng(5))
    before = net.flat()
    adam_step(AdamState.for_params(net), net, [np.zeros_like(a) for a in net.arrays])
    assert np.array_equal(before, net.flat())


def test_adam_rejects_mismatched_gradients():
    net = init_params([3, 4, 1], "tanh")
    with pytest.raises(ValueError):
        adam_step(AdamState.for_params(net), net, [np.zeros(2)] * 4)


@pytest.mark.parametrize("scheme,expected_std", [
    ("he-normal", lambda fi, fo: np.sqrt(2 / fi)),
    ("glorot-uniform", lambda fi, fo: np.sqrt(2 / (fi + fo))),
])
def test_initialisation_scale(scheme, expected_std):
    net = init_params([400, 300, 200], "relu", scheme, np.random.default_rng(6))
    for w, (fi, fo) in zip(net.weights, [(400, 300), (300, 200)]):
        assert w.std() == pytest.approx(expected_std(fi, fo), rel=0.02)
        assert abs(w.mean()) < 0.01 * expected_std(fi, fo)
    assert all(np.all(b == 0) for b in net.biases)


def test_softplus_output_is_positive_and_stable():
    net = init_params([2, 4, 2], "relu", "he-normal", np.random.default_rng(7),
                      output_transform="softplus")
    net.biases[-1][:] = [-800.0, 800.0]
    y = mlp_forward(net, np.zeros((3, 2)))
    assert np.all(np.isfinite(y)) and np.all(y >= 0)
    assert y[0, 1] == pytest.approx(800.0)


def test_rows_are_independent():
    rng = np.random.default_rng(8)
    net = init_params([4, 16, 16, 3], "tanh", rng=rng)
    x = rng.normal(size=(10, 4))
    full = mlp_forward(net, x)
    # BLAS may pick a different kernel for one row than for many: allow an ulp or two
    for i in range(10):
        np.testing.assert_allclose(full[i], mlp_forward(net, x[i]), rtol=1e-14, atol=1e-15)
    perm = np.random.default_rng(9).permutation(10)
    np.testing.assert_allclose(mlp_forward(net, x[perm]), full[perm], rtol=1e-14, atol=1e-15)


def test_non_finite_loss_names_the_sample():
    net = init_params([2, 3, 1], "tanh")

    def bad(y):
        losses = np.zeros(len(y))
        losses[2] = np.nan
        return losses, np.zeros_like(y)

    with pytest.raises(NonFiniteLossError) as err:
        mlp_gradient(net, np.zeros((4, 2)), bad)
    assert err.value.index == 2


def test_wrong_input_width():
    with pytest.raises(ValueError):
        mlp_forward(init_params([4, 3, 1], "tanh"), np.zeros((2, 5)))


def test_serialisation_round_trip(tmp_path):
    net = init_params([4, 9, 9, 2], "relu", "he-normal", np.random.default_rng(9),
                      output_transform="softplus")
    path = tmp_path / "net.bin"
    save_params(net, path)
    back = load_params(path)
    assert back.dims == net.dims and back.activation == "relu"
    assert back.output_transform == "softplus"
    assert np.array_equal(back.flat(), net.flat())


def test_load_rejects_foreign_and_truncated_files(tmp_path):
    (tmp_path / "junk").write_bytes(b"hello")
    with pytest.raises(ValueError):
        load_params(tmp_path / "junk")
    net = init_params([2, 3, 1], "tanh")
    save_params(net, tmp_path / "ok")
    (tmp_path / "cut").write_bytes((tmp_path / "ok").read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_params(tmp_path / "cut")
