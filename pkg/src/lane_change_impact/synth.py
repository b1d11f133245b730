"""
Synthetic two-lane platoons with known lane-change impact.

Every vehicle behind a lane's lead vehicle obeys the lower-order Newell
model exactly, so the undisturbed traffic state is known in closed form.
An injected lane change moves one vehicle (the SV) from the original lane
into a gap of the target lane. The new follower behind the SV and the
follower left behind in the original lane join their new leaders by closing
the spacing difference at a constant rate, and everything further upstream
keeps following Newell. Ground truth comes from differencing each
vehicle's speed against the undisturbed run.

Example:
    >>> from lane_change_impact.synth import ScenarioSpec, generate_platoon, inject_lane_change
    >>> spec = ScenarioSpec(seed=3, insertion_time=60)
    >>> baseline = generate_platoon(spec)
    >>> dataset, truth = inject_lane_change(baseline, spec)
    >>> truth.sv_id
    'L1V05'
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import LaneList, OptionalFloat, PairList, build_model, read_key_value_file
from .exceptions import ScenarioError
from .newell import D_BOUNDS, TAU_BOUNDS
from .trajectory import FRAMES_PER_SECOND, Dataset, VehicleTrack, snap_to_grid, unproject

logger = logging.getLogger(__name__)

SYNTH_EPOCH_MS = 1_704_067_200_000  # 2024-01-01T00:00:00
AFFECTED_SPEED_DEVIATION = 0.1  # m/s
GROUND_TRUTH_SCHEMA_VERSION = 1

Curve = Callable[[np.ndarray], np.ndarray]


class ScenarioSpec(BaseModel):
    """Parameters of one synthetic scenario."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = 0
    duration: float = Field(default=120.0, gt=0, description="Recorded span (s)")
    lanes: LaneList = Field(default_factory=lambda: [1, 2], description="Driving lane first")
    n_vehicles: int = Field(default=15, ge=3, description="Vehicles per lane")
    tau: float = Field(default=1.0, ge=TAU_BOUNDS[0], le=TAU_BOUNDS[1])
    d: float = Field(default=5.0, ge=D_BOUNDS[0], le=D_BOUNDS[1])
    tau_spread: float = Field(default=0.0, ge=0, description="Uniform +/- spread of tau")
    d_spread: float = Field(default=0.0, ge=0, description="Uniform +/- spread of d")
    gap_extra: float = Field(default=0.0, ge=0, description="Extra spacing ahead of the target-lane follower (m)")
    speed_profile: PairList = Field(
        default_factory=lambda: [(0.0, 20.0)],
        description="Lead-vehicle (t, speed) breakpoints, linear in between",
    )
    insertion_time: OptionalFloat = Field(default=60.0, description="Lateral onset of the SV; none disables")
    gap_fraction: float = Field(default=0.5, gt=0, lt=1, description="SV position inside the target gap")
    original_lane: int = 1
    target_lane: int = 2
    sv_index: int = Field(default=5, ge=1, description="Platoon position of the SV in its lane")
    gap_index: int = Field(default=5, ge=0, description="Target-lane vehicle the SV inserts behind")
    ramp_duration: float = Field(default=3.0, gt=0)
    closing_rate: float = Field(default=1.0, gt=0, description="Rate (m/s) at which new followers settle")
    noise: float = Field(default=0.0, ge=0, description="Gaussian position noise (m)")
    lateral_jitter: float = Field(default=0.05, ge=0)
    lane_width: float = Field(default=3.5, gt=0)
    origin_lat: float = 35.0
    origin_lon: float = 135.0
    kilopost_origin: float = 2_000_000.0
    x_start: float = 1_000.0
    vehicle_type: str = "car"

    @model_validator(mode="after")
    def _check_layout(self) -> ScenarioSpec:
        if len(set(self.lanes)) != len(self.lanes) or len(self.lanes) < 2:
            raise ValueError("lanes must list at least two distinct lanes")
        if self.original_lane == self.target_lane:
            raise ValueError("original_lane and target_lane must differ")
        for lane in (self.original_lane, self.target_lane):
            if lane not in self.lanes:
                raise ValueError(f"lane {lane} not in lanes {self.lanes}")
        if self.sv_index >= self.n_vehicles - 1:
            raise ValueError("sv_index needs a follower behind it")
        if self.gap_index >= self.n_vehicles - 1:
            raise ValueError("gap_index needs a follower behind it")
        if any(v < 0 for _, v in self.speed_profile):
            raise ValueError("speed_profile speeds must be >= 0")
        times = [t for t, _ in self.speed_profile]
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("speed_profile times must be strictly increasing")
        if self.insertion_time is not None and not (
            0 <= self.insertion_time and self.insertion_time + self.ramp_duration < self.duration
        ):
            raise ValueError("insertion_time and its ramp must fall inside the recorded span")
        return self

    @property
    def T_lane(self) -> float | None:
        if self.insertion_time is None:
            return None
        return snap_to_grid(snap_to_grid(self.insertion_time) + self.ramp_duration / 2)

    def lane_offset(self, lane: int) -> float:
        """Northward offset (m) of a lane center; passing lanes lie to the right."""
        return -(self.lanes.index(lane)) * self.lane_width


@dataclass
class GroundTruth:
    """Known outcome of one injected scenario."""

    sv_id: str
    T_sv_s: float | None
    T_lane: float | None
    original_lane: int
    target_lane: int
    tlv_id: str | None
    lv_id: str | None
    tfv_ids: list[str]
    fv_ids: list[str]
    affected: list[str] = field(default_factory=list)
    onsets: dict[str, float] = field(default_factory=dict)
    deviations: dict[str, float] = field(default_factory=dict)
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def load_scenario_spec(path: str | Path, **overrides: Any) -> ScenarioSpec:
    """Read a ScenarioSpec from a ``key = value`` file."""
    values: dict[str, Any] = dict(read_key_value_file(path))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return build_model(ScenarioSpec, values, str(path))


# ---- Closed-form lead motion ----


def _lead_curves(spec: ScenarioSpec) -> tuple[Curve, Curve]:
    """Position and speed of a lane's lead vehicle for any time."""
    tb = np.array([t for t, _ in spec.speed_profile], dtype=float)
    vb = np.array([v for _, v in spec.speed_profile], dtype=float)
    slopes = np.diff(vb) / np.diff(tb) if len(tb) > 1 else np.zeros(0)
    # distance covered from tb[0] up to each breakpoint
    area = np.concatenate(([0.0], np.cumsum((vb[:-1] + vb[1:]) / 2 * np.diff(tb))))

    segment_slopes = np.concatenate((slopes, [0.0]))

    def speed(t: np.ndarray) -> np.ndarray:
        return np.interp(t, tb, vb)

    def distance(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(tb, t, side="right") - 1, 0, len(tb) - 1)
        h = t - tb[k]
        slope = np.where(t >= tb[0], segment_slopes[k], 0.0)
        return area[k] + vb[k] * h + 0.5 * slope * h * h

    at_zero = float(distance(np.zeros(1))[0])

    def position(t: np.ndarray) -> np.ndarray:
        return spec.x_start + (distance(t) - at_zero)

    return position, speed


def _follow(position: Curve, speed: Curve, tau: float, spacing: float) -> tuple[Curve, Curve]:
    return (lambda t: position(t - tau) - spacing), (lambda t: speed(t - tau))


@dataclass
class _Lane:
    lane: int
    ids: list[str]
    taus: np.ndarray
    ds: np.ndarray
    extra: np.ndarray
    shift: float = 0.0
    position: list[Curve] = field(default_factory=list)
    speed: list[Curve] = field(default_factory=list)

    def chain(self, lead: tuple[Curve, Curve], start: int = 1) -> None:
        """(Re)build Newell curves of vehicles ``start..`` behind ``lead`` curves at ``start - 1``."""
        if start == 1:
            pos0, spd0 = lead
            self.position = [lambda t, p=pos0: p(t) + self.shift]
            self.speed = [spd0]
        for j in range(start, len(self.ids)):
            pos, spd = _follow(self.position[j - 1], self.speed[j - 1], self.taus[j], self.ds[j] + self.extra[j])
            if j < len(self.position):
                self.position[j], self.speed[j] = pos, spd
            else:
                self.position.append(pos)
                self.speed.append(spd)


def _build_lanes(spec: ScenarioSpec, rng: np.random.Generator, prefix: str) -> dict[int, _Lane]:
    lead = _lead_curves(spec)
    lanes: dict[int, _Lane] = {}
    for lane in (spec.original_lane, spec.target_lane):
        n = spec.n_vehicles
        taus = np.clip(spec.tau + rng.uniform(-1, 1, n) * spec.tau_spread, *TAU_BOUNDS)
        ds = np.clip(spec.d + rng.uniform(-1, 1, n) * spec.d_spread, *D_BOUNDS)
        extra = np.zeros(n)
        if lane == spec.target_lane:
            extra[spec.gap_index + 1] = spec.gap_extra
        ids = [f"{prefix}L{lane}V{j:02d}" for j in range(n)]
        lanes[lane] = _Lane(lane=lane, ids=ids, taus=taus, ds=ds, extra=extra)
        lanes[lane].chain(lead)
    return lanes


def _align_target_gap(spec: ScenarioSpec, lanes: dict[int, _Lane]) -> None:
    """Shift the target lane so the SV sits at ``gap_fraction`` of its gap at onset."""
    if spec.insertion_time is None:
        return
    t = np.array([snap_to_grid(spec.insertion_time)])
    original, target = lanes[spec.original_lane], lanes[spec.target_lane]
    x_sv = original.position[spec.sv_index](t)[0]
    ahead = target.position[spec.gap_index](t)[0]
    behind = target.position[spec.gap_index + 1](t)[0]
    target.shift = x_sv - (behind + spec.gap_fraction * (ahead - behind))
    target.chain(_lead_curves(spec))


def _settle(
    base: tuple[Curve, Curve],
    leader: tuple[Curve, Curve],
    tau: float,
    d: float,
    T_lane: float,
    rate: float,
    closer: bool,
) -> tuple[Curve, Curve]:
    """Curves of a follower switching to a new leader at ``T_lane``.

    The spacing difference at the switch is worked off at ``rate``. A
    follower that ends up closer to its new leader (``closer``) can only fall
    back (min); one that gains room can only catch up (max).
    """
    base_pos, base_spd = base
    lead_pos, lead_spd = leader
    t_lane = np.array([T_lane])
    offset = float(base_pos(t_lane)[0] - (lead_pos(t_lane - tau)[0] - d))
    sign = 1.0 if closer else -1.0
    delta0 = sign * offset

    def residual(t: np.ndarray) -> np.ndarray:
        return np.maximum(0.0, delta0 - rate * (t - T_lane))

    def candidate(t: np.ndarray) -> np.ndarray:
        return lead_pos(t - tau) - d + sign * residual(t)

    def position(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        pick = np.minimum if closer else np.maximum
        return np.where(t > T_lane, pick(base_pos(t), candidate(t)), base_pos(t))

    def speed(t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        base_x, cand_x = base_pos(t), candidate(t)
        active = (t > T_lane) & ((cand_x < base_x) if closer else (cand_x > base_x))
        closing = np.where(residual(t) > 0, rate, 0.0)
        return np.where(active, lead_spd(t - tau) - sign * closing, base_spd(t))

    return position, speed


def _inject(spec: ScenarioSpec, lanes: dict[int, _Lane]) -> None:
    original, target = lanes[spec.original_lane], lanes[spec.target_lane]
    T_lane = spec.T_lane
    i, p = spec.sv_index, spec.gap_index
    t = np.array([T_lane])
    sv = (original.position[i], original.speed[i])
    x_sv = sv[0](t)[0]
    x_ahead = target.position[p](t)[0]
    x_behind = target.position[p + 1](t)[0]
    if x_ahead - x_sv <= 0 or x_sv - x_behind < target.ds[p + 1]:
        raise ScenarioError(
            f"gap of {x_ahead - x_behind:.1f} m at t={T_lane:.1f} cannot take the SV "
            f"(new follower needs {target.ds[p + 1]:.1f} m)"
        )

    lv = (original.position[i - 1], original.speed[i - 1])
    fv_base = (original.position[i + 1], original.speed[i + 1])
    tfv_base = (target.position[p + 1], target.speed[p + 1])

    target.position[p + 1], target.speed[p + 1] = _settle(
        tfv_base, sv, target.taus[p + 1], target.ds[p + 1], T_lane, spec.closing_rate, closer=True
    )
    target.chain((target.position[0], target.speed[0]), start=p + 2)
    original.position[i + 1], original.speed[i + 1] = _settle(
        fv_base, lv, original.taus[i + 1], original.ds[i + 1], T_lane, spec.closing_rate, closer=False
    )
    original.chain((original.position[0], original.speed[0]), start=i + 2)


# ---- Realization ----


def _realize(spec: ScenarioSpec, inserted: bool, prefix: str = "") -> tuple[dict[str, VehicleTrack], dict[int, _Lane]]:
    rng = np.random.default_rng(spec.seed)
    lanes = _build_lanes(spec, rng, prefix)
    _align_target_gap(spec, lanes)
    if inserted:
        _inject(spec, lanes)

    frames = np.arange(int(round(spec.duration * FRAMES_PER_SECOND)) + 1)
    t = frames / FRAMES_PER_SECOND
    n = len(t)
    tracks: dict[str, VehicleTrack] = {}
    # draw order: lateral jitter then position noise, lane by lane
    jitter = {lane: rng.uniform(-1, 1, (spec.n_vehicles, n)) * spec.lateral_jitter for lane in lanes}
    noise = {lane: rng.normal(0.0, 1.0, (spec.n_vehicles, n)) * spec.noise for lane in lanes}

    for lane, platoon in lanes.items():
        for j, vid in enumerate(platoon.ids):
            x = platoon.position[j](t)
            speed = platoon.speed[j](t)
            if (speed < -1e-9).any():
                raise ScenarioError(f"{vid}: negative speed in synthesized motion")
            lane_id = np.full(n, lane, dtype=np.int64)
            north = spec.lane_offset(lane) + jitter[lane][j]
            if inserted and lane == spec.original_lane and j == spec.sv_index:
                north, lane_id = _sv_lateral(spec, t, north)
            observed = x + noise[lane][j]
            lat, lon = unproject(observed, north, (spec.origin_lat, spec.origin_lon))
            tracks[vid] = VehicleTrack(
                vehicle_id=vid,
                vehicle_type=spec.vehicle_type,
                t=t,
                x=observed,
                speed=np.maximum(speed, 0.0),
                lane_id=lane_id,
                kilopost=spec.kilopost_origin - observed,
                lat=lat,
                lon=lon,
            )
    return tracks, lanes


def _sv_lateral(spec: ScenarioSpec, t: np.ndarray, jittered: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    start = int(round(snap_to_grid(spec.insertion_time) * FRAMES_PER_SECOND))
    steps = int(round(spec.ramp_duration * FRAMES_PER_SECOND))
    frames = np.rint(t * FRAMES_PER_SECOND).astype(np.int64)
    k = frames - start
    orig_off = spec.lane_offset(spec.original_lane)
    target_off = spec.lane_offset(spec.target_lane)
    north = jittered.copy()
    ramp = (k >= 0) & (k <= steps)
    north[ramp] = orig_off + (target_off - orig_off) * k[ramp] / steps
    after = k > steps
    north[after] = jittered[after] - orig_off + target_off
    lane_id = np.where(2 * k >= steps, spec.target_lane, spec.original_lane).astype(np.int64)
    return north, lane_id


def _dataset(tracks: dict[str, VehicleTrack], spec: ScenarioSpec, route_id: str, **meta: Any) -> Dataset:
    return Dataset(
        tracks=tracks,
        route_id=route_id,
        kilopost_origin=spec.kilopost_origin,
        epoch_origin_ms=SYNTH_EPOCH_MS,
        meta={"synthetic": True, "seed": spec.seed, **meta},
    )


def generate_platoon(spec: ScenarioSpec, prefix: str = "") -> Dataset:
    """Undisturbed two-lane platoon; the SV stays in its lane."""
    tracks, _ = _realize(spec, inserted=False, prefix=prefix)
    logger.info(f"Generated {len(tracks)} vehicles over {spec.duration:.0f} s (seed {spec.seed})")
    return _dataset(tracks, spec, route_id=f"synth-{spec.seed}")


def inject_lane_change(dataset: Dataset, spec: ScenarioSpec, prefix: str = "") -> tuple[Dataset, GroundTruth]:
    """Replay ``spec`` with the SV lane change and diff against ``dataset``.

    ``dataset`` must be the undisturbed platoon generated from the same
    spec. Without an insertion time it is returned unchanged.

    Raises:
        ScenarioError: the target gap cannot take the SV
    """
    _, lanes = _realize(spec, inserted=False, prefix=prefix)
    original, target = lanes[spec.original_lane], lanes[spec.target_lane]
    i, p = spec.sv_index, spec.gap_index
    truth = GroundTruth(
        sv_id=original.ids[i],
        T_sv_s=None if spec.insertion_time is None else snap_to_grid(spec.insertion_time),
        T_lane=spec.T_lane,
        original_lane=spec.original_lane,
        target_lane=spec.target_lane,
        tlv_id=target.ids[p],
        lv_id=original.ids[i - 1],
        tfv_ids=target.ids[p + 1 :],
        fv_ids=original.ids[i + 1 :],
        seed=spec.seed,
    )
    if spec.insertion_time is None:
        return dataset, truth

    tracks, _ = _realize(spec, inserted=True, prefix=prefix)
    for vid in truth.tfv_ids + truth.fv_ids:
        baseline = dataset[vid]
        deviation = np.abs(tracks[vid].speed - baseline.speed)
        over = np.flatnonzero(deviation > AFFECTED_SPEED_DEVIATION)
        truth.deviations[vid] = float(deviation.max())
        if len(over):
            truth.affected.append(vid)
            truth.onsets[vid] = float(tracks[vid].t[over[0]])
    logger.info(
        f"Injected lane change of {truth.sv_id} at t={truth.T_lane:.1f}: "
        f"{len(truth.affected)} vehicles deviate from baseline"
    )
    merged = dict(dataset.tracks)
    merged.update(tracks)
    return dataset.with_tracks(merged), truth


def generate_batch(spec: ScenarioSpec, n_instances: int) -> tuple[Dataset, list[GroundTruth]]:
    """``n_instances`` injected scenarios side by side on one long route.

    Scenario k uses seed ``spec.seed + k``, alternates the maneuver
    direction and is placed far enough downstream of scenario k-1 that
    their time-space windows never meet.
    """
    v_max = max(v for _, v in spec.speed_profile)
    platoon = spec.n_vehicles * (TAU_BOUNDS[1] * v_max + D_BOUNDS[1] + spec.gap_extra)
    section = float(np.ceil((platoon + v_max * spec.duration + 2_000.0) / 1_000.0) * 1_000.0)

    tracks: dict[str, VehicleTrack] = {}
    truths: list[GroundTruth] = []
    for k in range(n_instances):
        lanes = (spec.original_lane, spec.target_lane)
        if k % 2:
            lanes = lanes[::-1]
        scenario = spec.model_copy(
            update={
                "seed": spec.seed + k,
                "x_start": spec.x_start + k * section,
                "original_lane": lanes[0],
                "target_lane": lanes[1],
            }
        )
        prefix = f"S{k:03d}"
        baseline = _dataset(_realize(scenario, inserted=False, prefix=prefix)[0], scenario, "batch")
        injected, truth = inject_lane_change(baseline, scenario, prefix=prefix)
        tracks.update(injected.tracks)
        truths.append(truth)
    logger.info(f"Generated batch of {n_instances} scenarios, {len(tracks)} vehicles")
    return _dataset(tracks, spec, route_id=f"synth-batch-{spec.seed}", instances=n_instances), truths


def write_ground_truth(truths: list[GroundTruth], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": GROUND_TRUTH_SCHEMA_VERSION,
        "scenarios": [truth.to_dict() for truth in truths],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
