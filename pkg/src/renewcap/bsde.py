"""Backward-in-time deep solver for the pure-jump BSDE of a threshold policy.

For each time step ``n = M-1, ..., 0`` a value network ``Y_n(t, v, d, c)``
and a jump network ``U_n(t, v, d, c, jump)`` are trained on the temporal
residual

    Y_{n+1} - (Y_n - f dt + U_n - mean_k U_n(aux_k))

where the auxiliary average over freshly resampled jumps estimates the
compensator of the jump integral.  Networks at step ``n`` are warm-started
from the trained networks at step ``n + 1``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .model import ModelParams, TimeGrid
from .nn import (AdamState, MLPParams, NonFiniteLossError, adam_step, init_params,
                 mlp_backward, mlp_forward)
from .rng import RngStream

log = logging.getLogger(__name__)

PATHS, AUX, INIT = 0, 1, 2


@dataclass(frozen=True)
class BsdeProblem:
    params: ModelParams
    grid: TimeGrid
    threshold: float

    def driver(self, t, v, d, c):
        """Discounted demand shortfall ``e^{-rt} (d - v c)^+``."""
        return np.exp(-self.params.r * t) * np.maximum(d - v * c, 0.0)

    def terminal(self, c):
        return self.params.kappa * c


@dataclass(frozen=True)
class BsdeTrainConfig:
    batch_size: int = 10
    aux_size: int = 5000
    epochs_terminal: int = 4000
    epochs_other: int = 200
    lr: float = 1e-4
    width: int = 100
    hidden_layers: int = 2
    seed: int = 0
    cache_paths: bool = False
    carry_optimizer: bool = True

    def __post_init__(self) -> None:
        for name in ("batch_size", "aux_size", "width", "hidden_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("epochs_terminal", "epochs_other"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")

    def scaled(self, factor: float) -> "BsdeTrainConfig":
        """Multiply epoch counts by ``factor`` and shrink the aux batch alike."""
        if not 0 < factor <= 1:
            raise ValueError(f"scale must lie in (0, 1], got {factor}")
        data = asdict(self)
        data["epochs_terminal"] = max(1, round(self.epochs_terminal * factor))
        data["epochs_other"] = max(1, round(self.epochs_other * factor))
        data["aux_size"] = max(1, round(self.aux_size * factor))
        return BsdeTrainConfig(**data)


@dataclass
class BsdeSolution:
    problem: BsdeProblem
    config: BsdeTrainConfig
    y_nets: list[MLPParams]
    u_nets: list[MLPParams]
    loss_history: list[np.ndarray]
    Y0: float = field(default=math.nan)

    def value(self, n: int, v, d, c) -> np.ndarray:
        """Value network of step ``n`` on states (``n = M`` gives the terminal cost)."""
        v, d, c = np.broadcast_arrays(np.asarray(v, float), np.asarray(d, float),
                                      np.asarray(c, float))
        grid = self.problem.grid
        if n == grid.M:
            return self.problem.terminal(c)
        x = np.stack([np.full(v.shape, grid.t(n)), v, d, c], axis=-1).reshape(-1, 4)
        return mlp_forward(self.y_nets[n], x)[:, 0].reshape(v.shape)

    def final_losses(self, window: int = 10) -> list[float]:
        return [float(np.mean(h[-window:])) if len(h) else math.nan for h in self.loss_history]


@dataclass
class _Batch:
    t: float
    x_now: np.ndarray   # (B, 4): t, v, d, c at step n
    x_next: np.ndarray  # (B, 4) at step n + 1
    jump: np.ndarray    # (B,) summed capacity-factor jump over the step
    c_next: np.ndarray


def _simulate_batch(problem: BsdeProblem, n: int, keys: np.ndarray) -> _Batch:
    grid = problem.grid
    out = kernels.run_paths(keys, n + 1, problem.params, grid.dt, scheme="euler",
                            threshold=problem.threshold)
    b = len(keys)
    t, t1 = grid.t(n), grid.t(n + 1)
    x_now = np.column_stack([np.full(b, t), out["v"][:, n], out["d"][:, n], out["c"][:, n]])
    x_next = np.column_stack([np.full(b, t1), out["v"][:, n + 1], out["d"][:, n + 1],
                              out["c"][:, n + 1]])
    return _Batch(t, x_now, x_next, out["dv1"][:, n] + out["dv2"][:, n], out["c"][:, n + 1])


def bsde_step_loss(problem: BsdeProblem, n: int, batch: _Batch, y_net: MLPParams,
                   u_net: MLPParams, next_y: MLPParams | None, aux: np.ndarray,
                   with_grad: bool = True):
    """Squared temporal residual (mean over the batch) and optional gradients.

    ``aux`` holds the per-sample summed jump amplitudes of the auxiliary
    batch; the auxiliary jump feature for path ``j`` is ``(1 - v_j) aux_k``.
    Returns ``(loss, y_grads, u_grads)``.
    """
    grid = problem.grid
    b = len(batch.x_now)
    dt = grid.dt
    v, d, c = batch.x_now[:, 1], batch.x_now[:, 2], batch.x_now[:, 3]
    if n == grid.M - 1:
        y_next = problem.terminal(batch.c_next)
    else:
        y_next = mlp_forward(next_y, batch.x_next)[:, 0]
    f = problem.driver(batch.t, v, d, c)

    n_aux = len(aux)
    nz = aux[aux != 0.0]
    n_zero = n_aux - len(nz)
    k = len(nz)
    # rows: own jump (B) | zero-jump aux (B) | nonzero aux (B * k)
    feats = np.concatenate([batch.jump, np.zeros(b), ((1.0 - v)[:, None] * nz[None, :]).ravel()])
    base = np.concatenate([batch.x_now, batch.x_now, np.repeat(batch.x_now, k, axis=0)])
    u_in = np.column_stack([base, feats])

    y_now, y_cache = mlp_forward(y_net, batch.x_now, return_cache=True)
    u_all, u_cache = mlp_forward(u_net, u_in, return_cache=True)
    u_all = u_all[:, 0]
    u_own = u_all[:b]
    u_zero = u_all[b:2 * b]
    u_nz = u_all[2 * b:].reshape(b, k)
    w_bar = (n_zero * u_zero + u_nz.sum(axis=1)) / n_aux

    resid = y_next - (y_now[:, 0] - f * dt + u_own - w_bar)
    if not np.all(np.isfinite(resid)):
        j = int(np.flatnonzero(~np.isfinite(resid))[0])
        raise NonFiniteLossError(j, f"non-finite residual at step {n}, state {batch.x_now[j]}")
    loss = float(np.mean(resid ** 2))
    if not with_grad:
        return loss, None, None

    g = -2.0 * resid / b
    y_grads, _ = mlp_backward(y_net, y_cache, g[:, None])
    g_u = np.concatenate([g, -g * n_zero / n_aux, np.repeat(-g / n_aux, k)])
    u_grads, _ = mlp_backward(u_net, u_cache, g_u[:, None])
    return loss, y_grads, u_grads


def _init_nets(config: BsdeTrainConfig, rng: RngStream) -> tuple[MLPParams, MLPParams]:
    hidden = [config.width] * config.hidden_layers
    y = init_params([4, *hidden, 1], "tanh", "glorot-uniform", rng.substream(INIT).substream(0))
    u = init_params([5, *hidden, 1], "tanh", "glorot-uniform", rng.substream(INIT).substream(1))
    return y, u


def train_timestep(problem: BsdeProblem, n: int, config: BsdeTrainConfig,
                   y_net: MLPParams, u_net: MLPParams, next_y: MLPParams | None,
                   rng: RngStream, optimizers: tuple[AdamState, AdamState] | None = None,
                   ) -> tuple[MLPParams, MLPParams, np.ndarray]:
    """Train the step-``n`` pair starting from (copies of) ``y_net``/``u_net``.

    ``optimizers`` continues existing Adam states (updated in place);
    otherwise fresh ones are created.
    """
    y_net, u_net = y_net.copy(), u_net.copy()
    epochs = config.epochs_terminal if n == problem.grid.M - 1 else config.epochs_other
    if optimizers is None:
        optimizers = (AdamState.for_params(y_net, lr=config.lr),
                      AdamState.for_params(u_net, lr=config.lr))
    y_opt, u_opt = optimizers
    step_rng = rng.substream(n)
    history = np.empty(epochs)
    batch = None
    for e in range(epochs):
        epoch_rng = step_rng.substream(e)
        if batch is None or not config.cache_paths:
            keys = epoch_rng.substream(PATHS).substream_keys(np.arange(config.batch_size))
            batch = _simulate_batch(problem, n, keys)
        aux = kernels.aux_features(epoch_rng.substream(AUX).key, config.aux_size,
                                   problem.params, problem.grid.dt)
        loss, gy, gu = bsde_step_loss(problem, n, batch, y_net, u_net, next_y, aux)
        history[e] = loss
        adam_step(y_opt, y_net, gy)
        adam_step(u_opt, u_net, gu)
    return y_net, u_net, history


def solve_bsde(problem: BsdeProblem, config: BsdeTrainConfig,
               rng: RngStream | None = None) -> BsdeSolution:
    """Backward sweep over all time steps; ``Y0`` is the value net at ``(0, x0)``."""
    rng = rng if rng is not None else RngStream(config.seed)
    M = problem.grid.M
    y_net, u_net = _init_nets(config, rng)
    y_nets: list[MLPParams] = [None] * M
    u_nets: list[MLPParams] = [None] * M
    histories: list[np.ndarray] = [None] * M
    next_y = None
    optimizers = None
    if config.carry_optimizer:
        optimizers = (AdamState.for_params(y_net, lr=config.lr),
                      AdamState.for_params(u_net, lr=config.lr))
    for n in range(M - 1, -1, -1):
        y_net, u_net, hist = train_timestep(problem, n, config, y_net, u_net, next_y, rng,
                                            optimizers)
        y_nets[n], u_nets[n], histories[n] = y_net, u_net, hist
        next_y = y_net
        if len(hist):
            log.debug("step %d: final loss %.3e", n, hist[-1])
    sol = BsdeSolution(problem, config, y_nets, u_nets, histories)
    v0, d0, c0 = problem.params.x0
    sol.Y0 = float(sol.value(0, v0, d0, c0))
    return sol
