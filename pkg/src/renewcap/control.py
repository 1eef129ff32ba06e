"""Global deep feedback control of capacity installation.

A policy network maps ``(t, v, d, c)`` to two nonnegative amplitudes
``(a1, a2)``; capacity grows by ``a1 dV1 + a2 dV2`` over each step.  The
network is trained by pathwise differentiation of the empirical discounted
cost along simulated jump scenarios.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .model import FeedbackPolicy, ModelParams, TimeGrid
from .nn import (AdamState, MLPParams, adam_step, check_finite, init_params, mlp_backward,
                 mlp_forward)
from .rng import RngStream
from .simulate import McEstimate, mc_cost, simulate_paths

TRAIN, EVAL, INIT = 0, 1, 2
SURFACE_AXES = ("t", "v", "d", "c")


@dataclass(frozen=True)
class ControlTrainConfig:
    batch_size: int = 2000
    epochs: int = 50
    lr: float = 1e-4
    width: int = 256
    hidden_layers: int = 2
    M: int = 50
    seed: int = 0
    eval_paths: int = 100_000

    def __post_init__(self) -> None:
        for name in ("batch_size", "width", "hidden_layers", "M", "eval_paths"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")

    def scaled(self, factor: float) -> "ControlTrainConfig":
        if not 0 < factor <= 1:
            raise ValueError(f"scale must lie in (0, 1], got {factor}")
        data = asdict(self)
        data["epochs"] = max(1, round(self.epochs * factor))
        return ControlTrainConfig(**data)


def init_policy(config: ControlTrainConfig, rng: RngStream) -> MLPParams:
    dims = [4, *[config.width] * config.hidden_layers, 2]
    return init_params(dims, "relu", "he-normal", rng, output_transform="softplus")


def as_policy(net: MLPParams) -> FeedbackPolicy:
    def fn(t, v, d, c):
        return mlp_forward(net, np.column_stack([t, v, d, c]))
    return FeedbackPolicy(fn, name="mlp")


def evaluation_stream(seed: int) -> RngStream:
    """Stream for out-of-sample evaluation, disjoint from training draws."""
    return RngStream(seed).substream(EVAL)


@dataclass
class Rollout:
    loss: float
    costs: np.ndarray
    c: np.ndarray
    controls: np.ndarray
    grads: list[np.ndarray] | None


def rollout_loss(net: MLPParams, params: ModelParams, grid: TimeGrid, B: int,
                 rng: RngStream | None = None, with_grad: bool = True,
                 exogenous: dict | None = None) -> Rollout:
    """Empirical cost of ``B`` Euler rollouts and its gradient in the weights.

    Jump scenarios are held fixed; ``v`` and ``d`` do not depend on the
    policy so only the installed capacity is differentiated.  Pass
    ``exogenous`` (output of :func:`kernels.run_paths`) to reuse scenarios.
    """
    if exogenous is None:
        keys = rng.substream_keys(np.arange(B))
        exogenous = kernels.run_paths(keys, grid.M, params, grid.dt, scheme="euler")
    v, d = exogenous["v"], exogenous["d"]
    dv = np.stack([exogenous["dv1"], exogenous["dv2"]], axis=-1)  # (B, M, 2)
    b = v.shape[0]
    dt = grid.dt
    disc = kernels.discount_factors(params.r, dt, grid.M)
    times = grid.nodes

    def inputs(n, c_n):
        return np.column_stack([np.full(b, times[n]), v[:, n], d[:, n], c_n])

    c = np.empty((b, grid.M + 1))
    c[:, 0] = params.x0[2]
    controls = np.empty((b, grid.M, 2))
    running = np.zeros(b)
    for n in range(grid.M):
        a = mlp_forward(net, inputs(n, c[:, n]))
        controls[:, n] = a
        running += dt * disc[n] * np.maximum(d[:, n] - v[:, n] * c[:, n], 0.0)
        c[:, n + 1] = c[:, n] + np.sum(a * dv[:, n], axis=1)
    costs = running + params.kappa * c[:, -1]
    check_finite(costs, "non-finite rollout cost")
    loss = float(np.mean(costs))
    if not with_grad:
        return Rollout(loss, costs, c, controls, None)

    grads = [np.zeros_like(p) for p in net.arrays]
    adj = np.full(b, params.kappa / b)  # d loss / d c_{n+1}
    for n in range(grid.M - 1, -1, -1):
        _, cache = mlp_forward(net, inputs(n, c[:, n]), return_cache=True)
        g_params, g_in = mlp_backward(net, cache, adj[:, None] * dv[:, n])
        for acc, g in zip(grads, g_params):
            acc += g
        short = d[:, n] - v[:, n] * c[:, n] > 0.0
        adj = adj + g_in[:, 3] - np.where(short, dt * disc[n] * v[:, n] / b, 0.0)
    return Rollout(loss, costs, c, controls, grads)


@dataclass
class ControlResult:
    net: MLPParams
    config: ControlTrainConfig
    loss_history: np.ndarray
    oos: McEstimate | None

    @property
    def policy(self) -> FeedbackPolicy:
        return as_policy(self.net)


def train_policy(params: ModelParams, config: ControlTrainConfig,
                 evaluate: bool = True) -> ControlResult:
    """Adam on the rollout loss, then an out-of-sample cost estimate."""
    grid = TimeGrid(params.T, config.M)
    root = RngStream(config.seed)
    net = init_policy(config, root.substream(INIT))
    opt = AdamState.for_params(net, lr=config.lr)
    history = np.empty(config.epochs)
    for e in range(config.epochs):
        out = rollout_loss(net, params, grid, config.batch_size, root.substream(TRAIN).substream(e))
        history[e] = out.loss
        adam_step(opt, net, out.grads)
    oos = None
    if evaluate:
        oos = mc_cost(params, grid, as_policy(net), config.eval_paths,
                      evaluation_stream(config.seed))
    return ControlResult(net, config, history, oos)


def policy_surface(net: MLPParams, params: ModelParams, axes=("t", "v"),
                   resolution=(21, 21), ranges=None, at=None) -> np.ndarray:
    """Controls on a 2-D slice; other coordinates fixed at ``at`` (default ``(0, x0)``).

    Returns rows ``(axis1, axis2, a1, a2)``.
    """
    ax = [SURFACE_AXES.index(a) for a in axes]
    defaults = {"t": (0.0, params.T), "v": (0.0, 0.99), "d": (0.0, 1.5), "c": (0.0, 2.0)}
    ranges = ranges or [defaults[a] for a in axes]
    g1 = np.linspace(*ranges[0], resolution[0])
    g2 = np.linspace(*ranges[1], resolution[1])
    m1, m2 = np.meshgrid(g1, g2, indexing="ij")
    base = np.array(at if at is not None else (0.0, *params.x0), dtype=float)
    x = np.tile(base, (m1.size, 1))
    x[:, ax[0]] = m1.ravel()
    x[:, ax[1]] = m2.ravel()
    a = mlp_forward(net, x)
    return np.column_stack([m1.ravel(), m2.ravel(), a[:, 0], a[:, 1]])


def sample_paths(net: MLPParams, params: ModelParams, grid: TimeGrid, n_paths: int,
                 rng: RngStream):
    """State and control realisations under the trained policy."""
    return simulate_paths(params, grid, as_policy(net), n_paths, rng)
