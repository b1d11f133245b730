"""
Lane-change extraction.

Turns lane-id transitions into analyzable instances: single discretionary
changes between main lanes, with a located start time, leader/follower
assignments in both lanes and no upstream insertions during the window.
Candidates that fail a criterion are kept in a rejection log.
"""

from __future__ import annotations

import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Any, NamedTuple

import numpy as np

from .config import RunConfig
from .exceptions import CenterlineError, InstanceRejected
from .trajectory import (
    Dataset,
    LaneCenterline,
    VehicleTrack,
    build_centerline,
    lateral_offsets,
    to_frames,
)

logger = logging.getLogger(__name__)

MIN_START_HISTORY = 2.0  # seconds of lateral history before T_lane

REJECTION_CRITERIA = (
    "ramp",
    "consecutive",
    "window",
    "centerline",
    "start_time",
    "no_leader",
    "interference",
    "gap",
    "analysis",
)


class LaneCrossing(NamedTuple):
    vehicle_id: str
    T_lane: float
    from_lane: int
    to_lane: int


@dataclass(frozen=True)
class Rejection:
    vehicle_id: str
    T_lane: float
    criterion: str
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"type": "rejection", **asdict(self)}


@dataclass(frozen=True)
class LaneChangeInstance:
    """One discretionary lane change with its neighbourhood."""

    sv_id: str
    T_lane: float
    T_sv_s: float
    original_lane: int
    target_lane: int
    window_t: tuple[float, float]
    window_x: tuple[float, float]
    tlv_id: str | None = None
    lv_id: str | None = None
    tfv_ids: tuple[str, ...] = ()
    fv_ids: tuple[str, ...] = ()
    direction: str = ""
    traffic_state: str = ""

    @property
    def instance_id(self) -> str:
        return f"{self.sv_id}-{int(to_frames(self.T_lane)):07d}"

    def reference(self, lane: str) -> str | None:
        return self.tlv_id if lane == "target" else self.lv_id

    def followers(self, lane: str) -> tuple[str, ...]:
        return self.tfv_ids if lane == "target" else self.fv_ids

    def to_dict(self) -> dict[str, Any]:
        record = asdict(self)
        record["window_t"] = list(self.window_t)
        record["window_x"] = list(self.window_x)
        record["tfv_ids"] = list(self.tfv_ids)
        record["fv_ids"] = list(self.fv_ids)
        return {"type": "instance", "instance_id": self.instance_id, **record}

    @classmethod
    def from_dict(cls, record: dict[str, Any]) -> LaneChangeInstance:
        fields = {k: v for k, v in record.items() if k not in ("type", "instance_id")}
        fields["window_t"] = tuple(fields["window_t"])
        fields["window_x"] = tuple(fields["window_x"])
        fields["tfv_ids"] = tuple(fields.get("tfv_ids", ()))
        fields["fv_ids"] = tuple(fields.get("fv_ids", ()))
        return cls(**fields)


@dataclass
class ExtractionResult:
    instances: list[LaneChangeInstance] = field(default_factory=list)
    rejections: list[Rejection] = field(default_factory=list)
    n_crossings: int = 0

    @property
    def rejection_counts(self) -> dict[str, int]:
        counts = Counter(r.criterion for r in self.rejections)
        return {criterion: counts.get(criterion, 0) for criterion in REJECTION_CRITERIA}

    def manifest_records(self) -> list[dict[str, Any]]:
        return [i.to_dict() for i in self.instances] + [r.to_dict() for r in self.rejections]


# ---- Crossings ----


def detect_crossings(dataset: Dataset) -> list[LaneCrossing]:
    """One record per lane-id transition, stamped at the first new-lane sample."""
    crossings = []
    for track in dataset:
        for i in np.flatnonzero(np.diff(track.lane_id) != 0) + 1:
            crossings.append(
                LaneCrossing(
                    vehicle_id=track.vehicle_id,
                    T_lane=float(track.t[i]),
                    from_lane=int(track.lane_id[i - 1]),
                    to_lane=int(track.lane_id[i]),
                )
            )
    return crossings


def filter_discretionary(
    crossings: Sequence[LaneCrossing],
    dataset: Dataset | None = None,
    ramp_lanes: Sequence[int] = (3,),
    rejections: list[Rejection] | None = None,
) -> list[LaneCrossing]:
    """Keep single lane changes between main lanes."""
    per_vehicle = Counter(c.vehicle_id for c in crossings)
    if dataset is not None:
        for vid in per_vehicle:
            per_vehicle[vid] = max(per_vehicle[vid], len(dataset[vid].lane_sequence()) - 1)

    kept = []
    for crossing in crossings:
        if per_vehicle[crossing.vehicle_id] >= 2:
            reason, detail = "consecutive", f"{per_vehicle[crossing.vehicle_id]} crossings"
        elif crossing.from_lane in ramp_lanes or crossing.to_lane in ramp_lanes:
            reason, detail = "ramp", f"{crossing.from_lane}->{crossing.to_lane}"
        else:
            kept.append(crossing)
            continue
        if rejections is not None:
            rejections.append(Rejection(crossing.vehicle_id, crossing.T_lane, reason, detail))
    return kept


# ---- Start time ----


def detect_start_time(
    lateral_series: Sequence[tuple[float, float]] | np.ndarray,
    T_lane: float,
    eps_lat: float = 0.1,
    direction: int | None = None,
) -> float:
    """Locate the instant the lateral drift toward the target lane begins.

    The series is first cut back to the longest stretch ending at ``T_lane``
    without an ``eps_lat``-significant reversal. Inside that stretch the start
    is the stretch start when the motion is strictly monotone throughout,
    otherwise the last sample still within ``eps_lat`` of the stretch floor.

    Args:
        lateral_series: (t, lateral) pairs, time-ordered
        T_lane: Lane-marking crossing instant
        eps_lat: Dead-band in meters
        direction: +1 when lateral grows toward the target lane, -1 otherwise;
            inferred from the series when omitted

    Raises:
        InstanceRejected: fewer than two seconds of history, or no lateral motion
    """
    series = np.asarray(lateral_series, dtype=float).reshape(-1, 2)
    series = series[series[:, 0] <= T_lane + 1e-9]
    if len(series) < 2 or T_lane - series[0, 0] < MIN_START_HISTORY - 1e-9:
        raise InstanceRejected("start_time", "less than 2 s of lateral history")

    t, lateral = series[:, 0], series[:, 1]
    if direction is None:
        direction = int(np.sign(lateral[-1] - lateral[0]))
        if direction == 0:
            raise InstanceRejected("start_time", "no lateral motion toward the target lane")
    y = direction * lateral

    suffix_min = np.minimum.accumulate(y[::-1])[::-1]
    reversals = np.flatnonzero(y[:-1] > suffix_min[1:] + eps_lat)
    start = int(reversals[-1]) + 1 if reversals.size else 0

    stretch = y[start:]
    if len(stretch) == 1:
        return float(t[-1])
    if (np.diff(stretch) > 0).all():
        return float(t[start])
    near_floor = np.flatnonzero(stretch <= stretch.min() + eps_lat)
    return float(t[start + int(near_floor[-1])])


# ---- Neighbours ----


def _keeps_lane(track: VehicleTrack, lane: int, t0: float, t1: float) -> bool:
    window = track.crop(t0, t1)
    return len(window) > 0 and bool((window.lane_id == lane).all())


def _stays_until(track: VehicleTrack, t_from: float, t_end: float) -> bool:
    """Present without gaps from ``t_from`` to ``t_end``."""
    return track.covers(t_from, t_end)


def assign_neighbors(
    instance: LaneChangeInstance, dataset: Dataset, follower_cap: int = 10
) -> LaneChangeInstance:
    """Identify TLV/TFVs and LV/FVs at T_sv_s inside the space window.

    Followers are ordered nearest first; a follower that does not keep its
    lane or leave coverage before the window end truncates the list.

    Raises:
        InstanceRejected: no usable leader in the target lane
    """
    t = instance.T_sv_s
    t0, t1 = instance.window_t
    x0, x1 = instance.window_x
    sv = dataset[instance.sv_id]
    i_sv = sv.index_at(t)
    if i_sv is None:
        raise InstanceRejected("window", f"SV has no sample at T_sv_s={t:.1f}")
    sv_x = float(sv.x[i_sv])

    ahead: dict[int, list[tuple[float, str]]] = {instance.target_lane: [], instance.original_lane: []}
    behind: dict[int, list[tuple[float, str]]] = {instance.target_lane: [], instance.original_lane: []}
    for track in dataset:
        if track.vehicle_id == instance.sv_id:
            continue
        i = track.index_at(t)
        if i is None:
            continue
        x, lane = float(track.x[i]), int(track.lane_id[i])
        if lane not in ahead or not x0 <= x <= x1:
            continue
        if x > sv_x:
            ahead[lane].append((x, track.vehicle_id))
        elif x < sv_x:
            behind[lane].append((-x, track.vehicle_id))

    def leader(lane: int) -> str | None:
        if not ahead[lane]:
            return None
        vid = min(ahead[lane])[1]
        track = dataset[vid]
        if not _keeps_lane(track, lane, t0, t1):
            return None
        return vid

    def followers(lane: int) -> tuple[str, ...]:
        chosen = []
        for _, vid in sorted(behind[lane]):
            track = dataset[vid]
            if not _keeps_lane(track, lane, t0, t1) or not _stays_until(track, t, t1):
                logger.debug(f"{instance.instance_id}: follower list in lane {lane} truncated at {vid}")
                break
            chosen.append(vid)
            if len(chosen) == follower_cap:
                break
        return tuple(chosen)

    tlv_id = leader(instance.target_lane)
    if tlv_id is None:
        raise InstanceRejected("no_leader", f"no usable leader in target lane {instance.target_lane}")
    lv_id = leader(instance.original_lane)
    if lv_id is None:
        logger.warning(f"{instance.instance_id}: no leader in original lane, original-lane analysis skipped")

    return replace(
        instance,
        tlv_id=tlv_id,
        lv_id=lv_id,
        tfv_ids=followers(instance.target_lane),
        fv_ids=followers(instance.original_lane) if lv_id else (),
    )


# ---- Interference ----


def filter_interference(
    instance: LaneChangeInstance,
    dataset: Dataset,
    crossings: Sequence[LaneCrossing] | None = None,
) -> bool:
    """True when no upstream vehicle changes into either lane after T_lane."""
    if crossings is None:
        crossings = detect_crossings(dataset)
    lanes = {instance.target_lane, instance.original_lane}
    sv = dataset[instance.sv_id]
    x0, x1 = instance.window_x
    for crossing in crossings:
        if crossing.vehicle_id == instance.sv_id or crossing.to_lane not in lanes:
            continue
        if not instance.T_lane <= crossing.T_lane <= instance.window_t[1]:
            continue
        other = dataset[crossing.vehicle_id]
        x = float(np.interp(crossing.T_lane, other.t, other.x))
        if not x0 <= x <= x1:
            continue
        if x < float(np.interp(crossing.T_lane, sv.t, sv.x)):
            logger.debug(f"{instance.instance_id}: {crossing.vehicle_id} inserts upstream at t={crossing.T_lane:.1f}")
            return False
    return True


# ---- Pipeline ----


def extract_instance(
    crossing: LaneCrossing,
    dataset: Dataset,
    centerline: LaneCenterline,
    config: RunConfig,
    crossings: Sequence[LaneCrossing] | None = None,
) -> LaneChangeInstance:
    """Build, locate and vet one candidate; raises InstanceRejected on failure."""
    sv = dataset[crossing.vehicle_id]
    T_lane = crossing.T_lane
    i_lane = sv.index_at(T_lane)
    x_lane = float(sv.x[i_lane])
    window_t = (T_lane - config.window_t, T_lane + config.window_t)
    window_x = (x_lane - config.window_x, x_lane + config.window_x)

    history_start = max([window_t[0], *(after for before, after in sv.gaps if after <= T_lane)])
    history = sv.crop(history_start, T_lane)
    if len(history) == 0 or history.t[-1] - history.t[0] < MIN_START_HISTORY - 1e-9:
        raise InstanceRejected("window", "SV history shorter than 2 s before T_lane")

    lateral = lateral_offsets(history, centerline, config.passing_side).lateral
    T_sv_s = detect_start_time(np.column_stack([history.t, lateral]), T_lane, config.eps_lat)
    direction = "toward_passing" if lateral[-1] > lateral[0] else "toward_driving"

    pre = sv.crop(window_t[0], T_sv_s)
    mean_speed = float(pre.speed.mean()) if len(pre) else float(sv.speed[i_lane])
    traffic_state = "free_flow" if mean_speed >= config.traffic_state_speed else "congested"

    instance = LaneChangeInstance(
        sv_id=sv.vehicle_id,
        T_lane=T_lane,
        T_sv_s=T_sv_s,
        original_lane=crossing.from_lane,
        target_lane=crossing.to_lane,
        window_t=window_t,
        window_x=window_x,
        direction=direction,
        traffic_state=traffic_state,
    )
    instance = assign_neighbors(instance, dataset, config.follower_cap)

    # leaders are chosen without looking at gaps; a gapped leader rejects the instance
    for leader_id in filter(None, (instance.tlv_id, instance.lv_id)):
        if dataset[leader_id].has_gap_within(*window_t):
            raise InstanceRejected("gap", f"leader {leader_id} has a gap inside the window")
    if not filter_interference(instance, dataset, crossings):
        raise InstanceRejected("interference", "upstream vehicle inserted into an analyzed lane")
    return instance


def extract_instances(dataset: Dataset, config: RunConfig | None = None) -> ExtractionResult:
    """Run every extraction criterion over a dataset."""
    config = config or RunConfig()
    crossings = detect_crossings(dataset)
    result = ExtractionResult(n_crossings=len(crossings))
    kept = filter_discretionary(crossings, dataset, config.ramp_lanes, result.rejections)

    if kept:
        try:
            centerline = build_centerline(dataset, config.centerline_lane, config.centerline_bin)
        except CenterlineError as e:
            logger.error(f"Cannot build centerline: {e}")
            result.rejections.extend(
                Rejection(c.vehicle_id, c.T_lane, "centerline", str(e)) for c in kept
            )
            kept = []

    for crossing in kept:
        try:
            result.instances.append(
                extract_instance(crossing, dataset, centerline, config, crossings)
            )
        except InstanceRejected as e:
            result.rejections.append(
                Rejection(crossing.vehicle_id, crossing.T_lane, e.criterion, e.detail)
            )

    result.instances.sort(key=lambda i: i.instance_id)
    result.rejections.sort(key=lambda r: (r.vehicle_id, r.T_lane))
    logger.info(
        f"Extracted {len(result.instances)} instances from {len(crossings)} crossings "
        f"({len(result.rejections)} rejected)"
    )
    return result
