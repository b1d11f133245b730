"""
Trajectory core: canonical vehicle tracks and their geometric enrichment.

Raw rows are read with pandas, grouped per vehicle and normalized to seconds,
meters and m/s on the 0.1 s frame grid. Longitudinal position ``x`` grows in
the direction of travel (``x = kilopost_origin - kilopost``). Lateral offsets
are measured from a bin-averaged lane centerline in a local equirectangular
projection, positive toward the passing lane.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from .config import SAMPLE_DT, IngestConfig
from .exceptions import CenterlineError, IngestError

logger = logging.getLogger(__name__)

FRAMES_PER_SECOND = 10
EARTH_RADIUS = 6_371_008.8  # mean radius, meters
REQUIRED_COLUMNS = (
    "vehicle_id",
    "datetime",
    "vehicle_type",
    "speed",
    "lane_id",
    "kilopost",
    "lat",
    "lon",
)


def to_frames(t: np.ndarray | float) -> np.ndarray:
    """Seconds to integer frame indices on the 0.1 s grid."""
    return np.rint(np.asarray(t, dtype=float) * FRAMES_PER_SECOND).astype(np.int64)


def snap_to_grid(t: float) -> float:
    """Round a time to the nearest 0.1 s frame."""
    return round(t * FRAMES_PER_SECOND) / FRAMES_PER_SECOND


class TrajectoryPoint(NamedTuple):
    t: float
    x: float
    speed: float
    lane_id: int
    lateral: float | None
    kilopost: float
    lat: float
    lon: float


class SpeedSeries(NamedTuple):
    """Time/speed arrays of one vehicle on the frame grid."""

    t: np.ndarray
    v: np.ndarray


@dataclass(frozen=True, eq=False)
class VehicleTrack:
    """One vehicle's time-ordered kinematic record, stored column-wise."""

    vehicle_id: str
    vehicle_type: str
    t: np.ndarray
    x: np.ndarray
    speed: np.ndarray
    lane_id: np.ndarray
    kilopost: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    lateral: np.ndarray | None = None
    gaps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        n = len(self.t)
        columns = ("x", "speed", "lane_id", "kilopost", "lat", "lon")
        for name in columns:
            if len(getattr(self, name)) != n:
                raise ValueError(f"Track {self.vehicle_id}: column {name} length mismatch")
        if self.lateral is not None and len(self.lateral) != n:
            raise ValueError(f"Track {self.vehicle_id}: lateral length mismatch")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def frames(self) -> np.ndarray:
        return to_frames(self.t)

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [self.point(i) for i in range(len(self))]

    def point(self, i: int) -> TrajectoryPoint:
        return TrajectoryPoint(
            t=float(self.t[i]),
            x=float(self.x[i]),
            speed=float(self.speed[i]),
            lane_id=int(self.lane_id[i]),
            lateral=None if self.lateral is None else float(self.lateral[i]),
            kilopost=float(self.kilopost[i]),
            lat=float(self.lat[i]),
            lon=float(self.lon[i]),
        )

    @property
    def is_lane_keeper(self) -> bool:
        return len(self) > 0 and bool(np.all(self.lane_id == self.lane_id[0]))

    def lane_sequence(self) -> list[int]:
        """Distinct lane ids in the order they were visited."""
        if len(self) == 0:
            return []
        change = np.flatnonzero(np.diff(self.lane_id) != 0) + 1
        return [int(self.lane_id[0])] + [int(self.lane_id[i]) for i in change]

    def index_at(self, t: float) -> int | None:
        """Index of the sample at time ``t`` (frame match), or None."""
        frames = self.frames
        frame = int(to_frames(t))
        i = int(np.searchsorted(frames, frame))
        if i < len(frames) and frames[i] == frame:
            return i
        return None

    def covers(self, t0: float, t1: float) -> bool:
        """True when samples exist on every frame of [t0, t1]."""
        if len(self) == 0:
            return False
        f0, f1 = int(to_frames(t0)), int(to_frames(t1))
        frames = self.frames
        if frames[0] > f0 or frames[-1] < f1:
            return False
        return not self.has_gap_within(t0, t1)

    def has_gap_within(self, t0: float, t1: float) -> bool:
        return any(before < t1 and after > t0 for before, after in self.gaps)

    def crop(self, t0: float, t1: float) -> VehicleTrack:
        """Samples with t in [t0, t1] (frame-inclusive)."""
        frames = self.frames
        mask = (frames >= to_frames(t0)) & (frames <= to_frames(t1))
        return self.select(mask)

    def select(self, mask: np.ndarray) -> VehicleTrack:
        return dataclasses.replace(
            self,
            t=self.t[mask],
            x=self.x[mask],
            speed=self.speed[mask],
            lane_id=self.lane_id[mask],
            kilopost=self.kilopost[mask],
            lat=self.lat[mask],
            lon=self.lon[mask],
            lateral=None if self.lateral is None else self.lateral[mask],
        )

    def speed_series(self) -> SpeedSeries:
        return SpeedSeries(self.t, self.speed)

    def replace(self, **changes) -> VehicleTrack:
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Dataset:
    """All tracks of one route, keyed by vehicle id."""

    tracks: dict[str, VehicleTrack]
    route_id: str = "route"
    kilopost_origin: float = 0.0
    epoch_origin_ms: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tracks)

    def __iter__(self) -> Iterator[VehicleTrack]:
        for vehicle_id in self.vehicle_ids:
            yield self.tracks[vehicle_id]

    def __getitem__(self, vehicle_id: str) -> VehicleTrack:
        return self.tracks[vehicle_id]

    def __contains__(self, vehicle_id: object) -> bool:
        return vehicle_id in self.tracks

    @cached_property
    def vehicle_ids(self) -> list[str]:
        return sorted(self.tracks)

    @cached_property
    def centroid(self) -> tuple[float, float]:
        """Mean (lat, lon) of every sample; anchors the local projection."""
        lat = np.concatenate([tr.lat for tr in self.tracks.values()])
        lon = np.concatenate([tr.lon for tr in self.tracks.values()])
        if lat.size == 0:
            return (0.0, 0.0)
        return (float(lat.mean()), float(lon.mean()))

    def with_tracks(self, tracks: dict[str, VehicleTrack]) -> Dataset:
        return Dataset(
            tracks=tracks,
            route_id=self.route_id,
            kilopost_origin=self.kilopost_origin,
            epoch_origin_ms=self.epoch_origin_ms,
            meta=dict(self.meta),
        )

    def map_tracks(self, func) -> Dataset:
        return self.with_tracks({vid: func(tr) for vid, tr in self.tracks.items()})


# ---- Parsing ----


def parse_dataset(
    path: str | Path,
    schema_config: IngestConfig | None = None,
    route_id: str | None = None,
) -> Dataset:
    """Read a trajectory CSV into a normalized Dataset.

    Args:
        path: CSV with the standard header (see ``REQUIRED_COLUMNS``)
        schema_config: Unit and datetime flags
        route_id: Label of the route; defaults to the file stem

    Returns:
        Dataset with one time-sorted track per vehicle

    Raises:
        IngestError: unreadable file, missing columns, malformed or duplicate rows
    """
    path = Path(path)
    schema_config = schema_config or IngestConfig()
    try:
        frame = pd.read_csv(
            path,
            dtype={"vehicle_id": str, "vehicle_type": str, "datetime": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except FileNotFoundError as e:
        raise IngestError(f"No such file: {path}") from e
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as e:
        raise IngestError(f"Cannot read {path}: {e}") from e

    dataset = dataset_from_frame(frame, schema_config, route_id or path.stem)
    logger.info(f"Parsed {len(dataset)} tracks from {path}")
    return dataset


def dataset_from_frame(
    frame: pd.DataFrame, schema_config: IngestConfig, route_id: str = "route"
) -> Dataset:
    """Normalize an in-memory table with the standard columns."""
    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise IngestError(f"Missing columns: {', '.join(missing)}")

    lines = np.arange(len(frame)) + 2  # header is line 1
    vehicle_id = frame["vehicle_id"].astype(str).str.strip()
    vehicle_type = frame["vehicle_type"].astype(str).str.strip()
    speed = pd.to_numeric(frame["speed"], errors="coerce").to_numpy(dtype=float)
    lane = pd.to_numeric(frame["lane_id"], errors="coerce").to_numpy(dtype=float)
    kilopost = pd.to_numeric(frame["kilopost"], errors="coerce").to_numpy(dtype=float)
    lat = pd.to_numeric(frame["lat"], errors="coerce").to_numpy(dtype=float)
    lon = pd.to_numeric(frame["lon"], errors="coerce").to_numpy(dtype=float)
    stamp_ms = _parse_datetime_ms(frame["datetime"], schema_config.datetime_format)

    bad = (
        (vehicle_id == "").to_numpy()
        | np.isnan(speed)
        | np.isnan(lane)
        | np.isnan(kilopost)
        | np.isnan(lat)
        | np.isnan(lon)
        | np.isnan(stamp_ms)
    )
    bad |= ~np.isnan(lane) & (lane != np.round(lane))
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise IngestError("malformed row", line=int(lines[row]))
    if (speed < 0).any():
        row = int(np.flatnonzero(speed < 0)[0])
        raise IngestError("negative speed", line=int(lines[row]))

    if schema_config.speed_unit == "kmh":
        speed = speed / 3.6
    if schema_config.kilopost_unit == "km":
        kilopost = kilopost * 1000.0

    if len(frame) == 0:
        return Dataset(tracks={}, route_id=route_id,
                       kilopost_origin=schema_config.kilopost_origin or 0.0)

    origin_ms = int(np.min(stamp_ms))
    frames = np.rint((stamp_ms - origin_ms) / (1000.0 / FRAMES_PER_SECOND)).astype(np.int64)
    kilopost_origin = (
        schema_config.kilopost_origin
        if schema_config.kilopost_origin is not None
        else float(np.max(kilopost))
    )

    table = pd.DataFrame(
        {
            "vehicle_id": vehicle_id.to_numpy(),
            "vehicle_type": vehicle_type.to_numpy(),
            "frame": frames,
            "speed": speed,
            "lane_id": lane.astype(np.int64),
            "kilopost": kilopost,
            "lat": lat,
            "lon": lon,
            "line": lines,
        }
    )
    duplicated = table.duplicated(["vehicle_id", "frame"], keep="first")
    if duplicated.any():
        row = table[duplicated].iloc[0]
        raise IngestError(
            f"duplicate sample for vehicle {row['vehicle_id']} at t={row['frame'] / FRAMES_PER_SECOND:.1f}",
            line=int(row["line"]),
        )
    table = table.sort_values(["vehicle_id", "frame"], kind="stable")

    max_steps = int(round(schema_config.max_gap * FRAMES_PER_SECOND))
    tracks: dict[str, VehicleTrack] = {}
    for vid, group in table.groupby("vehicle_id", sort=True):
        tracks[str(vid)] = _build_track(str(vid), group, kilopost_origin, max_steps)

    return Dataset(
        tracks=tracks,
        route_id=route_id,
        kilopost_origin=kilopost_origin,
        epoch_origin_ms=origin_ms,
    )


def _parse_datetime_ms(column: pd.Series, datetime_format: str) -> np.ndarray:
    if datetime_format == "epoch_ms":
        return pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
    stamps = pd.to_datetime(column, format="ISO8601", errors="coerce")
    if stamps.dt.tz is not None:
        stamps = stamps.dt.tz_convert(None)
    elapsed = (stamps - pd.Timestamp(0)) / pd.Timedelta(milliseconds=1)
    return elapsed.to_numpy(dtype=float)


def _build_track(
    vehicle_id: str, group: pd.DataFrame, kilopost_origin: float, max_steps: int
) -> VehicleTrack:
    frames = group["frame"].to_numpy()
    steps = np.diff(frames)
    if (steps <= 0).any():
        line = int(group["line"].to_numpy()[1:][steps <= 0][0])
        raise IngestError(f"non-monotone timestamps for vehicle {vehicle_id}", line=line)

    columns = {
        name: group[name].to_numpy(dtype=float)
        for name in ("speed", "kilopost", "lat", "lon")
    }
    lane = group["lane_id"].to_numpy()
    gaps: list[tuple[float, float]] = []

    if (steps > 1).any():
        keep = [np.arange(frames[i], frames[i + 1]) if s <= max_steps else frames[i : i + 1]
                for i, s in enumerate(steps)]
        full = np.concatenate([*keep, frames[-1:]])
        for name, values in columns.items():
            columns[name] = np.interp(full, frames, values)
        previous = np.searchsorted(frames, full, side="right") - 1
        lane = lane[previous]
        gaps = [
            (frames[i] / FRAMES_PER_SECOND, frames[i + 1] / FRAMES_PER_SECOND)
            for i in np.flatnonzero(steps > max_steps)
        ]
        filled = int(np.sum(steps[steps <= max_steps] - 1))
        if filled:
            logger.debug(f"Vehicle {vehicle_id}: interpolated {filled} missing samples")
        if gaps:
            logger.warning(f"Vehicle {vehicle_id}: {len(gaps)} gap(s) longer than {max_steps * SAMPLE_DT:.1f} s")
        frames = full

    return VehicleTrack(
        vehicle_id=vehicle_id,
        vehicle_type=str(group["vehicle_type"].iloc[0]),
        t=frames / FRAMES_PER_SECOND,
        x=kilopost_origin - columns["kilopost"],
        speed=columns["speed"],
        lane_id=np.asarray(lane, dtype=np.int64),
        kilopost=columns["kilopost"],
        lat=columns["lat"],
        lon=columns["lon"],
        gaps=tuple(gaps),
    )


def write_dataset(
    dataset: Dataset, path: str | Path, datetime_format: str = "iso"
) -> Path:
    """Serialize a Dataset in the standard schema (m/s, meters)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = []
    for track in dataset:
        ms = dataset.epoch_origin_ms + track.frames * (1000 // FRAMES_PER_SECOND)
        if datetime_format == "iso":
            stamps = pd.to_datetime(ms, unit="ms").strftime("%Y-%m-%dT%H:%M:%S.%f").str[:-3]
        else:
            stamps = ms
        frames.append(
            pd.DataFrame(
                {
                    "vehicle_id": track.vehicle_id,
                    "datetime": np.asarray(stamps),
                    "vehicle_type": track.vehicle_type,
                    "speed": track.speed,
                    "lane_id": track.lane_id,
                    "kilopost": track.kilopost,
                    "lat": track.lat,
                    "lon": track.lon,
                }
            )
        )
    table = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=REQUIRED_COLUMNS)
    table.to_csv(path, index=False, columns=list(REQUIRED_COLUMNS))
    return path


# ---- Smoothing ----


def smooth_speeds(track: VehicleTrack, window: float) -> VehicleTrack:
    """Centered moving average of speed over ``window`` seconds.

    The window always spans an odd number of samples: ``round(window / 0.1)``
    samples, plus one when that count is even (0.4 s and 0.5 s both average
    5 samples, 1.0 s averages 11). The window shrinks symmetrically near
    the ends of every contiguous segment, so end samples are averaged over
    fewer neighbours.
    """
    if window < SAMPLE_DT - 1e-9:
        raise ValueError(f"Smoothing window must be >= {SAMPLE_DT} s, got {window}")
    if len(track) == 0:
        raise ValueError(f"Cannot smooth empty track {track.vehicle_id}")

    half = int(round(window / SAMPLE_DT)) // 2
    if half == 0:
        return track
    speed = np.empty(len(track))
    breaks = np.flatnonzero(np.diff(track.frames) > 1) + 1
    for segment in np.split(np.arange(len(track)), breaks):
        speed[segment] = _centered_mean(track.speed[segment], half)
    return track.replace(speed=speed)


def _centered_mean(values: np.ndarray, half: int) -> np.ndarray:
    n = len(values)
    idx = np.arange(n)
    reach = np.minimum(np.minimum(idx, n - 1 - idx), half)
    out = np.empty(n)
    for k in np.unique(reach):
        rows = np.flatnonzero(reach == k)
        if k == 0:
            out[rows] = values[rows]
            continue
        windows = sliding_window_view(values, 2 * k + 1)
        out[rows] = windows[rows - k].sum(axis=1) / (2 * k + 1)
    return out


def smooth_dataset(dataset: Dataset, window: float) -> Dataset:
    return dataset.map_tracks(lambda track: smooth_speeds(track, window))


# ---- Geometry ----


def project(lat: np.ndarray, lon: np.ndarray, origin: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular projection to local (east, north) meters."""
    lat0, lon0 = origin
    north = np.radians(np.asarray(lat) - lat0) * EARTH_RADIUS
    east = np.radians(np.asarray(lon) - lon0) * EARTH_RADIUS * math.cos(math.radians(lat0))
    return east, north


def unproject(east: np.ndarray, north: np.ndarray, origin: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    lat0, lon0 = origin
    lat = lat0 + np.degrees(np.asarray(north) / EARTH_RADIUS)
    lon = lon0 + np.degrees(np.asarray(east) / (EARTH_RADIUS * math.cos(math.radians(lat0))))
    return lat, lon


@dataclass(frozen=True, eq=False)
class LaneCenterline:
    """Bin-averaged anchor points of one lane, ordered by x."""

    lane_id: int
    x: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    bin_width: float
    origin: tuple[float, float]

    @property
    def samples(self) -> list[tuple[float, float, float]]:
        return list(zip(self.x.tolist(), self.lat.tolist(), self.lon.tolist()))

    @cached_property
    def east_north(self) -> tuple[np.ndarray, np.ndarray]:
        return project(self.lat, self.lon, self.origin)


def build_centerline(dataset: Dataset, lane_id: int, bin_width: float = 10.0) -> LaneCenterline:
    """Average lat/lon of lane-keeping vehicles in x bins of ``bin_width`` meters."""
    keepers = [tr for tr in dataset if tr.is_lane_keeper and tr.lane_id[0] == lane_id]
    if not keepers:
        raise CenterlineError(f"No lane-keeping vehicles in lane {lane_id}")

    x = np.concatenate([tr.x for tr in keepers])
    lat = np.concatenate([tr.lat for tr in keepers])
    lon = np.concatenate([tr.lon for tr in keepers])

    first = math.floor(x.min() / bin_width)
    bins = np.floor(x / bin_width).astype(np.int64) - first
    n_bins = int(bins.max()) + 1
    if n_bins < 2:
        raise CenterlineError(f"Lane {lane_id} lane-keepers span a single bin")

    counts = np.bincount(bins, minlength=n_bins)
    filled = counts > 0
    centers = (first + np.arange(n_bins) + 0.5) * bin_width

    def bin_mean(values: np.ndarray) -> np.ndarray:
        sums = np.bincount(bins, weights=values, minlength=n_bins)
        return sums[filled] / counts[filled]

    anchor_x = centers.copy()
    anchor_x[filled] = bin_mean(x)
    anchor_lat = np.interp(anchor_x, anchor_x[filled], bin_mean(lat))
    anchor_lon = np.interp(anchor_x, anchor_x[filled], bin_mean(lon))
    if not filled.all():
        logger.debug(f"Lane {lane_id} centerline: interpolated {int((~filled).sum())} empty bins")

    return LaneCenterline(
        lane_id=lane_id,
        x=anchor_x,
        lat=anchor_lat,
        lon=anchor_lon,
        bin_width=bin_width,
        origin=dataset.centroid,
    )


def lateral_offsets(
    track: VehicleTrack, centerline: LaneCenterline, passing_side: str = "right"
) -> VehicleTrack:
    """Signed perpendicular distance from the locally linearized centerline.

    Positive values point toward the passing lane, which lies on
    ``passing_side`` of the travel direction. End segments extrapolate.
    """
    ce, cn = centerline.east_north
    if len(ce) < 2 or (np.hypot(np.diff(ce), np.diff(cn)) < 1e-9).any():
        raise CenterlineError(f"Degenerate centerline for lane {centerline.lane_id}")

    qe, qn = project(track.lat, track.lon, centerline.origin)
    seg = np.clip(np.searchsorted(centerline.x, track.x, side="right") - 1, 0, len(ce) - 2)
    de = ce[seg + 1] - ce[seg]
    dn = cn[seg + 1] - cn[seg]
    left = (de * (qn - cn[seg]) - dn * (qe - ce[seg])) / np.hypot(de, dn)
    lateral = -left if passing_side == "right" else left
    return track.replace(lateral=lateral)
