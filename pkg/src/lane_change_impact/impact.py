"""
Travel distance bias (TDB) metrics and the affected-status judgment.

For one follower the speed difference to its lane's reference leader is
integrated over fixed-length intervals on both sides of the follower's
demarcation time T_s. The intervals before T_s (the *pre* segment) define a
threshold band of ordinary fluctuation; intervals after T_s (the *post*
segment) that leave the band for longer than the longest excursion seen
before T_s are counted as affected.

Both segments use their own 1-based index space: pre entry ``j`` is the
j-th interval in chronological order ending at T_s, post entry ``k`` covers
``[T_s + (k - 1) dt, T_s + k dt]``.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any, NamedTuple

import numpy as np

from .config import SAMPLE_DT
from .exceptions import CoverageGapError
from .trajectory import SpeedSeries, snap_to_grid, to_frames

logger = logging.getLogger(__name__)

CTDB_CASES = (1, 2, 3, 4, 5)
# Band edges are mu +/- sigma in floating point; a two-member sign class
# puts both members on the edges exactly, so edges get a relative slack.
BAND_RTOL = 1e-12


@dataclass(frozen=True)
class TdbSeries:
    dt: float
    pre: np.ndarray
    post: np.ndarray
    T_lb: float
    T_s: float
    T_ub: float

    @property
    def n_f(self) -> int:
        return len(self.pre)

    @property
    def n_r(self) -> int:
        return len(self.post)


@dataclass(frozen=True)
class ThresholdBand:
    """Mean and population deviation of the nonnegative and negative pre entries."""

    mu_pos: float
    sigma_pos: float
    mu_neg: float
    sigma_neg: float
    m: int
    n_neg: int

    @property
    def positive(self) -> tuple[float, float]:
        return (self.mu_pos - self.sigma_pos, self.mu_pos + self.sigma_pos)

    @property
    def negative(self) -> tuple[float, float]:
        return (self.mu_neg - self.sigma_neg, self.mu_neg + self.sigma_neg)

    @property
    def empty_classes(self) -> list[str]:
        empty = []
        if self.m == 0:
            empty.append("positive")
        if self.n_neg == 0:
            empty.append("negative")
        return empty

    def to_dict(self) -> dict[str, Any]:
        return {
            "mu_pos": self.mu_pos,
            "sigma_pos": self.sigma_pos,
            "mu_neg": self.mu_neg,
            "sigma_neg": self.sigma_neg,
            "m": self.m,
        }


class Run(NamedTuple):
    """Maximal run of Θ = 1; ``start`` is 1-based."""

    start: int
    length: int


@dataclass(frozen=True)
class StatusSeries:
    pre: tuple[int, ...]
    post: tuple[int, ...]
    omega_star: int = 0
    pre_runs: tuple[Run, ...] = ()
    post_runs: tuple[Run, ...] = ()
    pre_raw: tuple[int, ...] = ()


class Verdict(NamedTuple):
    upsilon: int
    t_s: float | None
    t_e: float | None
    T_A: float


@dataclass(frozen=True)
class FollowerAnalysis:
    lane: str
    follower_index: int
    vehicle_id: str
    tdb: TdbSeries
    band: ThresholdBand
    status: StatusSeries
    K_A: tuple[int, ...]
    verdict: Verdict
    ctdb: np.ndarray
    w_A: float
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def upsilon(self) -> int:
        return self.verdict.upsilon

    @property
    def T_A(self) -> float:
        return self.verdict.T_A

    @property
    def T_s(self) -> float:
        return self.tdb.T_s

    def to_dict(self, full: bool = False) -> dict[str, Any]:
        record = {
            "follower_index": self.follower_index,
            "vehicle_id": self.vehicle_id,
            "T_s": self.tdb.T_s,
            "n_f": self.tdb.n_f,
            "n_r": self.tdb.n_r,
            "band": self.band.to_dict(),
            "omega_star": self.status.omega_star,
            "K_A": list(self.K_A),
            "upsilon": self.upsilon,
            "t_s": self.verdict.t_s,
            "t_e": self.verdict.t_e,
            "T_A": self.T_A,
            "w_A": self.w_A,
            "diagnostics": self.diagnostics,
        }
        if full:
            record["tdb_pre"] = self.tdb.pre.tolist()
            record["tdb_post"] = self.tdb.post.tolist()
            record["ctdb"] = self.ctdb.tolist()
            record["theta_pre_raw"] = list(self.status.pre_raw)
            record["theta_pre"] = list(self.status.pre)
            record["theta_post"] = list(self.status.post)
        return record


@dataclass(frozen=True)
class LaneImpactSummary:
    lane: str
    N: int
    N_A: int
    W_A: float
    T_A_total: float
    t_S: float | None = None
    t_E: float | None = None
    t_last: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


class GlobalMagnitude(NamedTuple):
    W_A: float
    original_missing: bool


# ---- TDB ----


def _values_on_frames(series: SpeedSeries, f0: int, f1: int, label: str) -> np.ndarray:
    frames = to_frames(series.t)
    i0 = int(np.searchsorted(frames, f0))
    i1 = i0 + (f1 - f0)
    if i0 >= len(frames) or i1 >= len(frames) or frames[i0] != f0 or frames[i1] != f1:
        raise CoverageGapError(
            f"{label} speed series does not cover [{f0 / 10:.1f}, {f1 / 10:.1f}] s"
        )
    return np.asarray(series.v[i0 : i1 + 1], dtype=float)


def _integrate_bins(dv: np.ndarray, starts: np.ndarray, steps: int) -> np.ndarray:
    """Trapezoid integral of ``dv`` over ``steps`` samples from each start."""
    if len(starts) == 0:
        return np.zeros(0)
    weights = np.ones(steps + 1)
    weights[0] = weights[-1] = 0.5
    index = starts[:, None] + np.arange(steps + 1)[None, :]
    return (dv[index] @ weights) * SAMPLE_DT


def compute_tdb(
    follower: SpeedSeries,
    reference: SpeedSeries,
    T_lb: float,
    T_s: float,
    T_ub: float,
    dt: float = 0.5,
) -> TdbSeries:
    """Bin the follower-minus-reference speed difference around ``T_s``.

    ``T_s`` is snapped to the 0.1 s grid. Partial intervals at either end
    are dropped.

    Raises:
        CoverageGapError: either series misses a frame inside a used bin
    """
    steps = round(dt / SAMPLE_DT)
    f_lb, f_s, f_ub = int(to_frames(T_lb)), int(to_frames(T_s)), int(to_frames(T_ub))
    n_f = max((f_s - f_lb) // steps, 0)
    n_r = max((f_ub - f_s) // steps, 0)

    f0, f1 = f_s - n_f * steps, f_s + n_r * steps
    dv = _values_on_frames(follower, f0, f1, "follower") - _values_on_frames(
        reference, f0, f1, "reference"
    )
    pre = _integrate_bins(dv, np.arange(n_f) * steps, steps)
    post = _integrate_bins(dv, n_f * steps + np.arange(n_r) * steps, steps)
    return TdbSeries(dt=dt, pre=pre, post=post, T_lb=T_lb, T_s=snap_to_grid(T_s), T_ub=T_ub)


# ---- Threshold band ----


def band_stats(pre: Sequence[float]) -> ThresholdBand:
    """Split pre-segment TDB by sign; an empty class gets (0, 0)."""
    values = np.asarray(pre, dtype=float)
    positive = values[values >= 0]
    negative = values[values < 0]
    if len(values) and (len(positive) == 0 or len(negative) == 0):
        side = "positive" if len(positive) == 0 else "negative"
        logger.warning(f"Empty {side} TDB class in {len(values)} pre intervals, band degenerates to {{0}}")

    def moments(part: np.ndarray) -> tuple[float, float]:
        if len(part) == 0:
            return 0.0, 0.0
        return float(part.mean()), float(part.std())

    mu_pos, sigma_pos = moments(positive)
    mu_neg, sigma_neg = moments(negative)
    return ThresholdBand(
        mu_pos=mu_pos,
        sigma_pos=sigma_pos,
        mu_neg=mu_neg,
        sigma_neg=sigma_neg,
        m=len(positive),
        n_neg=len(negative),
    )


def _slack(edge: float) -> float:
    return BAND_RTOL * max(1.0, abs(edge))


def _inside_band(values: np.ndarray, band: ThresholdBand) -> np.ndarray:
    lo_pos, hi_pos = band.positive
    lo_neg, hi_neg = band.negative
    lo_pos, lo_neg = lo_pos - _slack(lo_pos), lo_neg - _slack(lo_neg)
    hi_pos, hi_neg = hi_pos + _slack(hi_pos), hi_neg + _slack(hi_neg)
    return np.where(
        values >= 0,
        (values >= lo_pos) & (values <= hi_pos),
        (values >= lo_neg) & (values <= hi_neg),
    )


def classify_status(value: float, band: ThresholdBand) -> int:
    """Θ for one TDB entry: 0 inside the band of its sign (closed), else 1."""
    return int(not _inside_band(np.asarray([value], dtype=float), band)[0])


def classify_statuses(tdb: TdbSeries, band: ThresholdBand) -> StatusSeries:
    """Θ of both segments, before run analysis."""
    pre = tuple(int(v) for v in ~_inside_band(tdb.pre, band))
    post = tuple(int(v) for v in ~_inside_band(tdb.post, band))
    return StatusSeries(pre=pre, post=post, pre_raw=pre)


# ---- Run analysis ----


def find_runs(theta: Sequence[int]) -> tuple[Run, ...]:
    """Maximal runs of ones with 1-based starts."""
    values = np.asarray(theta, dtype=np.int8)
    if len(values) == 0:
        return ()
    edges = np.diff(np.concatenate(([0], values, [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return tuple(Run(int(s) + 1, int(e - s)) for s, e in zip(starts, ends, strict=True))


def analyze_runs(status: StatusSeries) -> StatusSeries:
    """Longest pre run becomes Ω*; pre runs no longer than Ω* are cleared."""
    raw = status.pre_raw or status.pre
    pre_runs = find_runs(raw)
    omega_star = max((run.length for run in pre_runs), default=0)
    adjusted = list(raw)
    for run in pre_runs:
        if run.length <= omega_star:
            adjusted[run.start - 1 : run.start - 1 + run.length] = [0] * run.length
    return dataclasses.replace(
        status,
        pre=tuple(adjusted),
        pre_raw=tuple(raw),
        omega_star=omega_star,
        pre_runs=pre_runs,
        post_runs=find_runs(status.post),
    )


def affected_intervals(post_runs: Sequence[Run], omega_star: int) -> tuple[int, ...]:
    """Post indices belonging to runs strictly longer than Ω*."""
    return tuple(
        k
        for run in post_runs
        if run.length > omega_star
        for k in range(run.start, run.start + run.length)
    )


def follower_verdict(K_A: Sequence[int], T_s: float, dt: float) -> Verdict:
    if not K_A:
        return Verdict(upsilon=0, t_s=None, t_e=None, T_A=0.0)
    first, last = min(K_A), max(K_A)
    return Verdict(
        upsilon=1,
        t_s=T_s + (first - 1) * dt,
        t_e=T_s + last * dt,
        T_A=(last - first + 1) * dt,
    )


# ---- Corrected TDB ----


def _ctdb_cases(values: np.ndarray, band: ThresholdBand) -> tuple[np.ndarray, np.ndarray]:
    lo_pos, hi_pos = band.positive
    lo_neg, hi_neg = band.negative
    conditions = [
        values < lo_neg - _slack(lo_neg),
        (values > hi_neg + _slack(hi_neg)) & (values < 0),
        (values > 0) & (values < lo_pos - _slack(lo_pos)),
        values > hi_pos + _slack(hi_pos),
    ]
    case = np.select(conditions, [1, 2, 3, 4], default=5)
    delta = np.select(conditions, [lo_neg, hi_neg, lo_pos, hi_pos], default=values)
    return case, delta


def compute_ctdb(value: float, band: ThresholdBand) -> float:
    """TDB minus the band correction; zero inside either closed band."""
    values = np.asarray([value], dtype=float)
    _, delta = _ctdb_cases(values, band)
    return float(values[0] - delta[0])


def compute_ctdb_series(values: np.ndarray, band: ThresholdBand) -> tuple[np.ndarray, dict[str, Any]]:
    """Vectorized CTDB plus diagnostics on unusual correction cases."""
    values = np.asarray(values, dtype=float)
    case, delta = _ctdb_cases(values, band)
    vacuous = []
    if band.mu_neg + band.sigma_neg >= 0:
        vacuous.append(2)
    if band.mu_pos - band.sigma_pos <= 0:
        vacuous.append(3)
    diagnostics = {
        "sign_flips": int(np.count_nonzero(case == 3)),
        "vacuous_cases": vacuous,
        "empty_classes": band.empty_classes,
    }
    return values - delta, diagnostics


def follower_magnitude(ctdb: Sequence[float], K_A: Sequence[int]) -> float:
    """Sum of CTDB over the affected post intervals."""
    return float(sum(ctdb[k - 1] for k in K_A))


def analyze_follower(
    follower: SpeedSeries,
    reference: SpeedSeries,
    T_lb: float,
    T_s: float,
    T_ub: float,
    dt: float = 0.5,
    *,
    lane: str = "target",
    follower_index: int = 1,
    vehicle_id: str = "",
) -> FollowerAnalysis:
    """Full judgment chain for one follower."""
    tdb = compute_tdb(follower, reference, T_lb, T_s, T_ub, dt)
    band = band_stats(tdb.pre)
    status = analyze_runs(classify_statuses(tdb, band))
    K_A = affected_intervals(status.post_runs, status.omega_star)
    verdict = follower_verdict(K_A, tdb.T_s, dt)
    ctdb, diagnostics = compute_ctdb_series(tdb.post, band)
    if diagnostics["sign_flips"]:
        logger.warning(
            f"{lane} follower {follower_index} ({vehicle_id}): "
            f"{diagnostics['sign_flips']} positive TDB entries corrected below zero"
        )
    w_A = follower_magnitude(ctdb, K_A)
    logger.debug(
        f"{lane} follower {follower_index} ({vehicle_id}): n_f={tdb.n_f} n_r={tdb.n_r} "
        f"omega*={status.omega_star} upsilon={verdict.upsilon} T_A={verdict.T_A} w_A={w_A:.3f}"
    )
    return FollowerAnalysis(
        lane=lane,
        follower_index=follower_index,
        vehicle_id=vehicle_id,
        tdb=tdb,
        band=band,
        status=status,
        K_A=K_A,
        verdict=verdict,
        ctdb=ctdb,
        w_A=w_A,
        diagnostics=diagnostics,
    )


# ---- Lane aggregation ----


def affected_count(upsilons: Sequence[int]) -> int:
    """Followers up to the first consecutive unaffected pair, exclusive."""
    n = len(upsilons)
    for i in range(1, n):
        if upsilons[i - 1] == 0 and upsilons[i] == 0:
            return i - 1
    return n


def lane_summary(
    followers: Sequence[FollowerAnalysis],
    schedule: Sequence[float],
    dt: float,
    lane: str | None = None,
) -> LaneImpactSummary:
    """Aggregate per-follower analyses (upstream order) into a lane summary.

    ``schedule`` holds the demarcation times of the analyzed followers.
    """
    lane = lane or (followers[0].lane if followers else "target")
    upsilons = [f.upsilon for f in followers]
    n_a = affected_count(upsilons)
    if not any(upsilons[:n_a]):
        n_a = 0
    if n_a == 0:
        return LaneImpactSummary(lane=lane, N=len(followers), N_A=0, W_A=0.0, T_A_total=0.0)

    counted = followers[:n_a]
    affected = [f for f in counted if f.upsilon]
    w_a = float(sum(f.w_A * f.upsilon for f in counted))

    def demarcation(f: FollowerAnalysis) -> float:
        return snap_to_grid(schedule[f.follower_index - 1])

    first = affected[0]
    last = counted[-1] if counted[-1].upsilon else affected[-1]
    t_S = demarcation(first) + min(first.K_A) * dt
    t_E = demarcation(last) + max(last.K_A) * dt
    t_last = t_E - t_S
    total = max(t_last, max(f.T_A for f in affected))
    return LaneImpactSummary(
        lane=lane,
        N=len(followers),
        N_A=n_a,
        W_A=w_a,
        T_A_total=total,
        t_S=t_S,
        t_E=t_E,
        t_last=t_last,
    )


def global_magnitude(
    target: LaneImpactSummary, original: LaneImpactSummary | None
) -> GlobalMagnitude:
    if original is None:
        logger.warning("Original lane summary missing, global magnitude uses target lane only")
        return GlobalMagnitude(W_A=target.W_A, original_missing=True)
    return GlobalMagnitude(W_A=target.W_A + original.W_A, original_missing=False)
