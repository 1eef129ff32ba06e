"""Batched forward simulation and the plain Monte Carlo cost oracle."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .model import FeedbackPolicy, ModelParams, Policy, ThresholdPolicy, TimeGrid
from .rng import JumpSample, RngStream, kernel_jump_sample

DEFAULT_CHUNK = 1 << 16


@dataclass
class PathBundle:
    """A batch of simulated trajectories.

    ``v``, ``d``, ``c`` have shape ``(B, M + 1)``; ``dv1``/``dv2`` hold the
    per-step capacity-factor increments split by jump source, ``counts`` the
    per-step jump counts ``(B, M, 2)``.  Jump sizes are not stored, they can
    be re-derived from ``keys`` with :meth:`jump_sample`.
    """

    params: ModelParams
    grid: TimeGrid
    scheme: str
    keys: np.ndarray
    v: np.ndarray
    d: np.ndarray
    c: np.ndarray
    dv1: np.ndarray
    dv2: np.ndarray
    counts: np.ndarray
    running_cost: np.ndarray
    controls: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return self.v.shape[0]

    @property
    def total_cost(self) -> np.ndarray:
        return self.running_cost + self.params.kappa * self.c[:, -1]

    def state(self, j: int, n: int) -> tuple[float, float, float]:
        return float(self.v[j, n]), float(self.d[j, n]), float(self.c[j, n])

    def jump_sample(self, j: int, n: int) -> tuple[JumpSample, JumpSample]:
        p, dt = self.params, self.grid.dt
        key = int(self.keys[j])
        return (kernel_jump_sample(key, n, 0, p.lam1, p.m1, dt),
                kernel_jump_sample(key, n, 1, p.lam2, p.m2, dt))


class McEstimate(NamedTuple):
    estimate: float
    stderr: float


def rollout_feedback(policy: FeedbackPolicy, params: ModelParams, grid: TimeGrid,
                     v: np.ndarray, d: np.ndarray, dv1: np.ndarray, dv2: np.ndarray):
    """Installed capacity, controls and running cost under a feedback policy.

    ``v`` and ``d`` do not depend on the installed capacity, so the
    exogenous paths can be simulated first and ``c`` rolled out afterwards.
    """
    b = v.shape[0]
    dt = grid.dt
    disc = kernels.discount_factors(params.r, dt, grid.M)
    c = np.empty((b, grid.M + 1))
    c[:, 0] = params.x0[2]
    controls = np.empty((b, grid.M, 2))
    running = np.zeros(b)
    for n in range(grid.M):
        t = np.full(b, grid.t(n))
        a = np.asarray(policy(t, v[:, n], d[:, n], c[:, n]), dtype=float)
        controls[:, n] = a
        running += dt * disc[n] * np.maximum(d[:, n] - v[:, n] * c[:, n], 0.0)
        c[:, n + 1] = c[:, n] + a[:, 0] * dv1[:, n] + a[:, 1] * dv2[:, n]
    return c, controls, running


def _simulate(params, grid, policy, keys, scheme, num_threads=1) -> PathBundle:
    threshold = policy.A if isinstance(policy, ThresholdPolicy) else None
    out = kernels.run_paths(keys, grid.M, params, grid.dt, scheme=scheme,
                            threshold=threshold, num_threads=num_threads)
    bundle = PathBundle(params, grid, scheme, np.asarray(keys, dtype=np.uint64),
                        out["v"], out["d"], out["c"], out["dv1"], out["dv2"], out["n"],
                        out["running"])
    if isinstance(policy, FeedbackPolicy):
        bundle.c, bundle.controls, bundle.running_cost = rollout_feedback(
            policy, params, grid, out["v"], out["d"], out["dv1"], out["dv2"])
    return bundle


def simulate_paths(params: ModelParams, grid: TimeGrid, policy: Policy, B: int,
                   rng: RngStream, num_threads: int = 1) -> PathBundle:
    """Euler scheme; path ``j`` uses ``rng.substream(j)``."""
    if B < 1:
        raise ValueError("batch size must be at least 1")
    return _simulate(params, grid, policy, rng.substream_keys(np.arange(B)), "euler", num_threads)


def simulate_exact_latent(params: ModelParams, grid: TimeGrid, policy: Policy, B: int,
                          rng: RngStream, num_threads: int = 1) -> PathBundle:
    """Exact OU decay of the latent factors with exact jump arrival times."""
    if B < 1:
        raise ValueError("batch size must be at least 1")
    return _simulate(params, grid, policy, rng.substream_keys(np.arange(B)), "exact-latent",
                     num_threads)


def path_costs(params: ModelParams, grid: TimeGrid, policy: Policy, N: int, rng: RngStream,
               scheme: str = "euler", chunk: int = DEFAULT_CHUNK,
               num_threads: int = 1) -> np.ndarray:
    """Per-path realised cost ``running + kappa c(T)`` for ``N`` paths."""
    totals = np.empty(N)
    for start in range(0, N, chunk):
        stop = min(start + chunk, N)
        keys = rng.substream_keys(np.arange(start, stop))
        if isinstance(policy, ThresholdPolicy):
            out = kernels.run_paths(keys, grid.M, params, grid.dt, scheme=scheme,
                                    threshold=policy.A, store=False, num_threads=num_threads)
            totals[start:stop] = out["running"] + params.kappa * out["c_final"]
        else:
            bundle = _simulate(params, grid, policy, keys, scheme, num_threads)
            totals[start:stop] = bundle.total_cost
    return totals


def mc_cost(params: ModelParams, grid: TimeGrid, policy: Policy, N: int, rng: RngStream,
            scheme: str = "euler", chunk: int = DEFAULT_CHUNK, num_threads: int = 1) -> McEstimate:
    """Monte Carlo estimate of the expected discounted cost and its standard error."""
    if N < 2:
        raise ValueError("need at least two paths")
    totals = path_costs(params, grid, policy, N, rng, scheme, chunk, num_threads)
    if totals.min() == totals.max():  # np.std leaves rounding residue on constant samples
        return McEstimate(float(totals[0]), 0.0)
    return McEstimate(float(np.mean(totals)), float(np.std(totals, ddof=1) / np.sqrt(N)))
