"""
Newell car-following calibration and kinematic-wave demarcation.

Under the lower-order Newell model a follower replays its leader's
trajectory shifted by a reaction time tau and a minimum spacing d:
``x_j(t) = x_{j-1}(t - tau) - d``. The wave travel time between consecutive
vehicles is then tau itself, so the lane change reaches follower i at
``T_i^s = T_sv_s + sum(tau_1..tau_i)``.
"""

from __future__ import annotations

import logging
import statistics
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .exceptions import CalibrationError
from .trajectory import VehicleTrack

logger = logging.getLogger(__name__)

TAU_BOUNDS = (0.1, 5.0)
D_BOUNDS = (0.1, 10.0)
GRID_STEP = 0.1
DEFAULT_TAU = 1.0
DEFAULT_D = 5.0

_TAU_GRID = np.round(np.arange(1, 51) * GRID_STEP, 10)
_D_GRID = np.round(np.arange(1, 101) * GRID_STEP, 10)


@dataclass(frozen=True)
class NewellParams:
    """Calibrated (tau, d) of one follower.

    ``flag`` is ``ok``, ``low_confidence`` (degenerate leader) or
    ``fallback`` (tau substituted); ``sse`` is None when no fit exists.
    """

    tau: float
    d: float
    sse: float | None
    flag: str = "ok"
    n_samples: int = 0

    def __post_init__(self):
        if not TAU_BOUNDS[0] - 1e-9 <= self.tau <= TAU_BOUNDS[1] + 1e-9:
            raise ValueError(f"tau {self.tau} outside {TAU_BOUNDS}")
        if not D_BOUNDS[0] - 1e-9 <= self.d <= D_BOUNDS[1] + 1e-9:
            raise ValueError(f"d {self.d} outside {D_BOUNDS}")
        if self.sse is not None and self.sse < 0:
            raise ValueError("sse must be non-negative")

    @property
    def usable(self) -> bool:
        return self.flag == "ok"


@dataclass(frozen=True)
class NewellPrediction:
    t: np.ndarray
    x: np.ndarray
    shrunk: bool


@dataclass(frozen=True)
class DemarcationSchedule:
    """Demarcation times T_1^s..T_N^s of one lane (index 0 is follower 1)."""

    lane: str
    T_sv_s: float
    times: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> float:
        return self.times[i]


def simulate_newell(
    leader: VehicleTrack, tau: float, d: float, t: np.ndarray | None = None
) -> NewellPrediction:
    """Predicted follower positions on ``t`` (defaults to the leader's grid).

    Samples whose delayed time falls outside the leader's record are dropped
    and the prediction is marked ``shrunk``.
    """
    t = leader.t if t is None else np.asarray(t, dtype=float)
    delayed = t - tau
    valid = (delayed >= leader.t[0] - 1e-9) & (delayed <= leader.t[-1] + 1e-9)
    shrunk = not bool(valid.all())
    if shrunk:
        logger.debug(f"Newell prediction for leader {leader.vehicle_id} shrunk to {int(valid.sum())} samples")
    x = np.interp(delayed[valid], leader.t, leader.x) - d
    return NewellPrediction(t=t[valid], x=x, shrunk=shrunk)


def _objective(params: np.ndarray, t: np.ndarray, x: np.ndarray, leader: VehicleTrack) -> float:
    tau, d = params
    residual = x - (np.interp(t - tau, leader.t, leader.x) - d)
    return float(residual @ residual)


def calibrate_newell(
    follower: VehicleTrack,
    leader: VehicleTrack,
    t_range: tuple[float, float],
    min_span: float = 5.0,
) -> NewellParams:
    """Least-squares (tau, d) over ``t_range``: coarse grid, then bounded Nelder-Mead.

    Grid ties (equilibrium data admits every pair on a line) resolve to the
    pair nearest the box center. Refinement only replaces the grid optimum
    when it lowers the objective.

    Raises:
        CalibrationError: range or usable leader history shorter than ``min_span``
    """
    t0, t1 = t_range
    if t1 - t0 < min_span - 1e-9:
        raise CalibrationError(f"calibration range {t1 - t0:.1f} s shorter than {min_span} s")

    window = follower.crop(t0, t1)
    usable = (window.t - TAU_BOUNDS[1] >= leader.t[0] - 1e-9) & (
        window.t - TAU_BOUNDS[0] <= leader.t[-1] + 1e-9
    )
    t, x = window.t[usable], window.x[usable]
    if len(t) < 2 or t[-1] - t[0] < min_span - 1e-9:
        raise CalibrationError(
            f"leader {leader.vehicle_id} history does not cover {follower.vehicle_id} over {min_span} s"
        )
    if not usable.all():
        logger.debug(f"{follower.vehicle_id}: calibration range shrunk to [{t[0]:.1f}, {t[-1]:.1f}]")

    # SSE(tau, d) = S2 + 2 d S1 + n d^2 with r = x_f - x_leader(t - tau)
    residual = x[None, :] - np.interp(t[None, :] - _TAU_GRID[:, None], leader.t, leader.x)
    s1 = residual.sum(axis=1)
    s2 = np.einsum("ij,ij->i", residual, residual)
    n = len(t)
    sse = s2[:, None] + 2.0 * _D_GRID[None, :] * s1[:, None] + n * _D_GRID[None, :] ** 2

    best = sse.min()
    ties = np.argwhere(sse <= best + 1e-9 * (1.0 + abs(best)))
    center = np.array([0.5, 0.5])
    scaled = np.column_stack(
        [
            (_TAU_GRID[ties[:, 0]] - TAU_BOUNDS[0]) / (TAU_BOUNDS[1] - TAU_BOUNDS[0]),
            (_D_GRID[ties[:, 1]] - D_BOUNDS[0]) / (D_BOUNDS[1] - D_BOUNDS[0]),
        ]
    )
    pick = ties[int(np.argmin(((scaled - center) ** 2).sum(axis=1)))]
    start = np.array([_TAU_GRID[pick[0]], _D_GRID[pick[1]]])
    start_sse = _objective(start, t, x, leader)

    result = minimize(
        _objective,
        x0=start,
        args=(t, x, leader),
        method="Nelder-Mead",
        bounds=[TAU_BOUNDS, D_BOUNDS],
        options={"xatol": 1e-4, "fatol": 1e-10, "maxiter": 400},
    )
    tau, d, fit_sse = float(start[0]), float(start[1]), start_sse
    if result.fun < start_sse:
        tau = float(np.clip(result.x[0], *TAU_BOUNDS))
        d = float(np.clip(result.x[1], *D_BOUNDS))
        fit_sse = float(result.fun)

    flag = "ok"
    leader_span = leader.crop(t[0] - tau, t[-1] - tau)
    leader_travel = float(np.ptp(leader_span.x)) if len(leader_span) else 0.0
    if leader_travel < 1.0 and float(np.ptp(x)) > 1.0:
        flag = "low_confidence"
        logger.warning(f"{follower.vehicle_id}: leader {leader.vehicle_id} is stationary, low-confidence fit")

    return NewellParams(tau=tau, d=d, sse=max(fit_sse, 0.0), flag=flag, n_samples=n)


def fallback_params(tau_pool: Sequence[float], flagged: NewellParams | None = None) -> NewellParams:
    """Substitute tau for a failed fit: median of good fits, else 1 s."""
    tau = statistics.median(tau_pool) if tau_pool else DEFAULT_TAU
    d = flagged.d if flagged is not None else DEFAULT_D
    sse = flagged.sse if flagged is not None else None
    return NewellParams(tau=float(tau), d=d, sse=sse, flag="fallback",
                        n_samples=flagged.n_samples if flagged else 0)


def demarcation_times(
    T_sv_s: float,
    params: Sequence[NewellParams],
    t_end: float | None = None,
    lane: str = "target",
) -> DemarcationSchedule:
    """Cumulative wave arrival times; stops before the first time at or past ``t_end``."""
    times: list[float] = []
    t = T_sv_s
    for i, p in enumerate(params, start=1):
        t = t + p.tau
        if t_end is not None and t >= t_end:
            logger.debug(f"{lane} lane: T_{i}^s={t:.2f} beyond window end {t_end:.2f}, N={i - 1}")
            break
        times.append(t)
    return DemarcationSchedule(lane=lane, T_sv_s=T_sv_s, times=tuple(times))


def instance_schedule(instance, params: Sequence[NewellParams], lane: str) -> DemarcationSchedule:
    """Schedule of one lane of a LaneChangeInstance, bounded by its window end."""
    return demarcation_times(instance.T_sv_s, params, instance.window_t[1], lane)
