"""Capacity factor / demand / installed capacity model for one technology.

The latent factors ``H = (h1, h2)`` follow an OU process driven by two
independent compound Poisson subordinators with exponential jump sizes.
The observed state is ``v = 1 - exp(-s h1)``, ``d = p h2`` and the installed
capacity ``c``, which only moves at jumps of ``v``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple, Union

import numpy as np

from .rng import JumpSample

V_CEIL = 1.0 - 1e-12


class DomainError(ValueError):
    """A state or argument lies outside the model's domain."""


@dataclass(frozen=True)
class ModelParams:
    """Market, jump and cost constants (defaults: the reference calibration)."""

    T: float = 1.0
    x0: tuple[float, float, float] = (0.4, 0.7, 0.0)
    lam1: float = 5.0
    lam2: float = 5.0
    m1: float = 0.5
    m2: float = 1.0
    sigma11: float = 0.2
    sigma12: float = 0.2
    sigma22: float = 0.05
    xi1: float = 0.2
    xi2: float = 0.2
    p: float = 0.7
    s: float = 1.0
    r: float = 0.4
    kappa: float = 0.1
    a_min: float = 0.0
    a_max: float = 3.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", tuple(float(x) for x in self.x0))
        for name in ("T", "m1", "m2", "sigma11", "sigma22", "xi1", "xi2", "p", "s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("lam1", "lam2", "sigma12", "r", "kappa", "a_min"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if not self.a_min < self.a_max:
            raise ValueError(f"a_min must be below a_max, got {self.a_min} >= {self.a_max}")
        if len(self.x0) != 3:
            raise ValueError("x0 must be (v0, d0, c0)")
        v0, d0, c0 = self.x0
        if not 0.0 <= v0 < 1.0:
            raise ValueError(f"x0: v0 must lie in [0, 1), got {v0}")
        if d0 < 0 or c0 < 0:
            raise ValueError("x0: d0 and c0 must be nonnegative")

    # seasonal hooks, constant here
    def s_at(self, t: float) -> float:
        return self.s

    def ds_at(self, t: float) -> float:
        return 0.0

    def p_at(self, t: float) -> float:
        return self.p

    def dp_at(self, t: float) -> float:
        return 0.0

    @property
    def latent0(self) -> "LatentState":
        v0, d0, _ = self.x0
        return LatentState(-math.log1p(-v0) / self.s, d0 / self.p)

    def replace(self, **changes) -> "ModelParams":
        data = asdict(self)
        data.update(changes)
        return ModelParams(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["x0"] = list(self.x0)
        return data


class SystemState(NamedTuple):
    v: float
    d: float
    c: float

    def check(self) -> "SystemState":
        if not 0.0 <= self.v < 1.0:
            raise DomainError(f"capacity factor outside [0, 1): {self.v}")
        if self.d < 0 or self.c < 0:
            raise DomainError(f"negative demand or capacity: {self}")
        return self


class LatentState(NamedTuple):
    h1: float
    h2: float


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError(f"need at least one time step, got M={self.M}")
        if not self.T > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dt

    def t(self, n: int) -> float:
        return n * self.dt


@dataclass(frozen=True)
class ThresholdPolicy:
    """Install ``(A - v)^+ dV`` at every upward jump of ``v``."""

    A: float

    def __post_init__(self) -> None:
        if self.A < 0:
            raise ValueError(f"threshold must be nonnegative, got {self.A}")


@dataclass(frozen=True)
class FeedbackPolicy:
    """Install ``a1 dV1 + a2 dV2`` with amplitudes from ``fn(t, v, d, c)``.

    ``fn`` takes arrays and returns an array of shape ``(n, 2)``.
    """

    fn: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    name: str = field(default="feedback")

    def __call__(self, t, v, d, c) -> np.ndarray:
        return self.fn(t, v, d, c)


Policy = Union[ThresholdPolicy, FeedbackPolicy]


def drift_v(t: float, v: float, params: ModelParams) -> float:
    """Uncompensated drift of the capacity factor."""
    if not v < 1.0:
        raise DomainError(f"capacity factor must be below 1, got {v}")
    return (1.0 - v) * (params.xi1 - params.ds_at(t) / params.s_at(t)) * math.log1p(-v)


def drift_d(t: float, d: float, params: ModelParams) -> float:
    """Uncompensated drift of demand, ``(p'/p - xi2) d``."""
    return (params.dp_at(t) / params.p_at(t) - params.xi2) * d


def jump_impact_v(v: float, z: float, source: int, params: ModelParams, t: float = 0.0) -> float:
    """Increment of ``v`` caused by a subordinator jump of size ``z``."""
    sigma = params.sigma11 if source == 1 else params.sigma12
    return (1.0 - v) * -math.expm1(-params.s_at(t) * sigma * z)


def jump_impact_d(z: float, t: float, params: ModelParams) -> float:
    """Increment of demand for a source-2 jump of size ``z``."""
    return params.p_at(t) * params.sigma22 * z


def threshold_install(A: float, v_pre: float, dv: float) -> float:
    return max(A - v_pre, 0.0) * dv


def step_euler(state: SystemState, t: float, jumps: tuple[JumpSample, JumpSample],
               control, dt: float, params: ModelParams) -> tuple[SystemState, float, float]:
    """One Euler step with all jump impacts taken at the step-start state.

    ``control`` is either a threshold (float) or an amplitude pair.
    Returns the next state and the per-source jump increments of ``v``.
    """
    v, d, c = SystemState(*state).check()
    j1, j2 = jumps
    dv1 = sum(jump_impact_v(v, z, 1, params, t) for z in j1.sizes)
    dv2 = sum(jump_impact_v(v, z, 2, params, t) for z in j2.sizes)
    dd = sum(jump_impact_d(z, t, params) for z in j2.sizes)
    if isinstance(control, (tuple, list, np.ndarray)):
        a1, a2 = control
        inst = a1 * dv1 + a2 * dv2
    else:
        inst = threshold_install(float(control), v, dv1 + dv2)
    v_new = min(max(v + drift_v(t, v, params) * dt + dv1 + dv2, 0.0), V_CEIL)
    d_new = max(0.0, d + drift_d(t, d, params) * dt + dd)
    return SystemState(v_new, d_new, c + inst), dv1, dv2


def no_jump_solution(params: ModelParams, t) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ``(v(t), d(t))`` when both intensities are zero."""
    t = np.asarray(t, dtype=float)
    v0, d0, _ = params.x0
    v = -np.expm1(np.exp(-params.xi1 * t) * np.log1p(-v0))
    return v, d0 * np.exp(-params.xi2 * t)


def mean_demand(params: ModelParams, t) -> np.ndarray:
    """First moment of demand, ``E[D(t)]``."""
    t = np.asarray(t, dtype=float)
    h20 = params.x0[1] / params.p
    xi = params.xi2
    jump_rate = params.sigma22 * params.lam2 / params.m2
    return params.p * (h20 * np.exp(-xi * t) + jump_rate * -np.expm1(-xi * t) / xi)


def discounted_mean_demand(params: ModelParams, grid: TimeGrid | None = None) -> float:
    """``E[int_0^T e^{-rt} D(t) dt]``; with ``grid`` the left-point Riemann sum."""
    if grid is not None:
        t = grid.nodes[:-1]
        return float(grid.dt * np.sum(np.exp(-params.r * t) * mean_demand(params, t)))
    # exact integral of p (a e^{-xi t} + b (1 - e^{-xi t})) e^{-r t}
    a = params.x0[1] / params.p
    b = params.sigma22 * params.lam2 / params.m2 / params.xi2
    T, r, xi = params.T, params.r, params.xi2

    def e(k):
        return T if k == 0 else -math.expm1(-k * T) / k

    return params.p * ((a - b) * e(r + xi) + b * e(r))
