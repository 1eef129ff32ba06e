"""Grid search for the installation threshold.

Each candidate ``A`` is scored either by the deep BSDE estimate of the
value at ``(0, x0)`` or, in oracle mode, by plain Monte Carlo.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bsde import BsdeProblem, BsdeTrainConfig, solve_bsde
from .model import ModelParams, ThresholdPolicy, TimeGrid
from .rng import RngStream
from .simulate import mc_cost

log = logging.getLogger(__name__)

MODES = ("bsde", "mc")
ORACLE_STREAM = 7


class ThresholdEvaluationError(RuntimeError):
    def __init__(self, A: float, cause: BaseException):
        super().__init__(f"evaluation failed at A={A!r}: {cause}")
        self.A = A
        self.__cause__ = cause


def build_grid(a_min: float, a_max: float, n_points: int) -> np.ndarray:
    if not (math.isfinite(a_min) and math.isfinite(a_max)) or not a_min < a_max:
        raise ValueError(f"need finite a_min < a_max, got {a_min}, {a_max}")
    if n_points < 2:
        raise ValueError(f"need at least two grid points, got {n_points}")
    grid = np.linspace(a_min, a_max, n_points)
    grid[-1] = a_max
    return grid


@dataclass(frozen=True)
class GridPoint:
    A: float
    Y0: float
    stderr: float | None = None
    details: dict = field(default_factory=dict)


@dataclass
class SelectorResult:
    points: list[GridPoint]
    mode: str

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("empty threshold grid")

    @property
    def best_index(self) -> int:
        # first minimum in grid order, i.e. ties go to the smaller A
        ys = [p.Y0 for p in self.points]
        best = min(ys)
        return min((p.A, i) for i, p in enumerate(self.points) if p.Y0 == best)[1]

    @property
    def A_star(self) -> float:
        return self.points[self.best_index].A

    @property
    def Y0_star(self) -> float:
        return self.points[self.best_index].Y0

    @property
    def grid(self) -> np.ndarray:
        return np.array([p.A for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.Y0 for p in self.points])


def select_threshold(params: ModelParams, config: BsdeTrainConfig, thresholds,
                     M: int = 50, mode: str = "bsde", oracle_paths: int = 100_000,
                     scheme: str = "euler",
                     on_point: Callable[[int, GridPoint], None] | None = None) -> SelectorResult:
    """Score every threshold and keep the cheapest.

    BSDE runs for grid index ``i`` draw from substream ``i`` of the master
    seed ``config.seed``.  Oracle runs share one stream across all ``A`` so
    differences between candidates are not swamped by sampling noise.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    thresholds = [float(a) for a in np.atleast_1d(thresholds)]
    if not thresholds:
        raise ValueError("empty threshold grid")
    grid = TimeGrid(params.T, M)
    master = RngStream(config.seed)
    points = []
    for i, A in enumerate(thresholds):
        try:
            if mode == "bsde":
                sol = solve_bsde(BsdeProblem(params, grid, A), config, master.substream(i))
                point = GridPoint(A, sol.Y0, None, {"final_loss": sol.final_losses()[0]})
            else:
                est = mc_cost(params, grid, ThresholdPolicy(A), oracle_paths,
                              master.substream(ORACLE_STREAM), scheme=scheme)
                point = GridPoint(A, est.estimate, est.stderr)
        except Exception as exc:
            raise ThresholdEvaluationError(A, exc) from exc
        if not math.isfinite(point.Y0):
            raise ThresholdEvaluationError(A, FloatingPointError("non-finite value"))
        log.info("A=%.6g value=%.6g", A, point.Y0)
        points.append(point)
        if on_point is not None:
            on_point(i, point)
    return SelectorResult(points, mode)
