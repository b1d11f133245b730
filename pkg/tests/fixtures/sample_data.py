#!/usr/bin/env python3
"""
Sample data and fixtures for lane-change-impact tests.

Frozen TDB sequences with hand-checked outcomes, plus small factories for
tracks, datasets and trajectory CSV files.
"""

import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from lane_change_impact.trajectory import (
    REQUIRED_COLUMNS,
    Dataset,
    SpeedSeries,
    VehicleTrack,
    unproject,
)

ORIGIN = (35.0, 135.0)
KILOPOST_ORIGIN = 10_000.0

# Θ of a 14-interval follower, first 6 entries before T_s
STATUS_EXAMPLE_THETA = [0, 1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 0]
STATUS_EXAMPLE_NF = 6
STATUS_EXAMPLE_EXPECTED = {
    "omega_star": 2,
    "adjusted_pre": [0, 0, 0, 0, 0, 0],
    "K_A": [2, 3, 4],
    "upsilon": 1,
    "t_s": 0.5,
    "t_e": 2.0,
    "T_A": 1.5,
}

# Target-lane first follower: one 4-interval excursion before T_s, a
# 21-interval slowdown after it followed by a shorter dip
FIRST_FOLLOWER_PRE = [
    -0.5, 0.5, -0.5, -0.5, -2.5, -2.5, -2.5, -2.5, -0.5, 0.5,
    -0.5, -0.5, -0.5, 0.5, -0.5, -0.5, -0.5, 0.5, -0.5, -0.5,
]
FIRST_FOLLOWER_POST = [-0.5] * 3 + [-3.0] * 21 + [-0.5] * 5 + [-2.5] * 3 + [-0.5] * 10
FIRST_FOLLOWER_EXPECTED = {
    "mu_neg": -1.0,
    "sigma_neg": math.sqrt(0.75),
    "mu_pos": 0.5,
    "sigma_pos": 0.0,
    "omega_star": 4,
    "K_A": list(range(4, 25)),
    "T_A": 10.5,
    "w_A": 21 * (-3.0 + 1.0 + math.sqrt(0.75)),
}

# Original-lane first follower: post excursions never outlast the pre one
ORIGINAL_FOLLOWER_PRE = [0.5] * 8 + [2.0, 2.0] + [0.5] * 10
ORIGINAL_FOLLOWER_POST = [0.5] * 10 + [2.0, 2.0] + [0.5] * 5 + [1.5, 1.5] + [0.5] * 10
ORIGINAL_FOLLOWER_EXPECTED = {
    "mu_pos": 0.65,
    "sigma_pos": 0.45,
    "omega_star": 2,
    "K_A": [],
    "T_A": 0.0,
    "w_A": 0.0,
}

SAMPLE_CONFIG_TEXT = """\
# analysis settings
dt = 0.5
min_nf = 8
ramp_lanes = 3, 4
passing_side = left
kilopost_origin = none
workers = 2
"""

SAMPLE_SCENARIO_TEXT = """\
seed = 11
n_vehicles = 8
sv_index = 3
gap_index = 3
speed_profile = 0:20, 30:20, 40:15
insertion_time = 60
"""


def time_axis(duration: float, start: float = 0.0) -> np.ndarray:
    """0.1 s grid from ``start`` to ``start + duration`` inclusive."""
    frames = np.arange(int(round(start * 10)), int(round((start + duration) * 10)) + 1)
    return frames / 10.0


def make_track(
    vehicle_id: str,
    t: np.ndarray,
    speed: Sequence[float] | float,
    x0: float = 0.0,
    lane: Sequence[int] | int = 1,
    north: Sequence[float] | float = 0.0,
    x: Optional[np.ndarray] = None,
) -> VehicleTrack:
    """Track on a straight eastward road; positions integrate ``speed`` unless given."""
    t = np.asarray(t, dtype=float)
    n = len(t)
    speed = np.broadcast_to(np.asarray(speed, dtype=float), (n,)).copy()
    if x is None:
        steps = np.diff(t) * (speed[:-1] + speed[1:]) / 2
        x = x0 + np.concatenate(([0.0], np.cumsum(steps)))
    north = np.broadcast_to(np.asarray(north, dtype=float), (n,))
    lat, lon = unproject(np.asarray(x, dtype=float), north, ORIGIN)
    return VehicleTrack(
        vehicle_id=vehicle_id,
        vehicle_type="car",
        t=t,
        x=np.asarray(x, dtype=float),
        speed=speed,
        lane_id=np.broadcast_to(np.asarray(lane, dtype=np.int64), (n,)).copy(),
        kilopost=KILOPOST_ORIGIN - np.asarray(x, dtype=float),
        lat=lat,
        lon=lon,
    )


def make_dataset(tracks: List[VehicleTrack], route_id: str = "test") -> Dataset:
    return Dataset(
        tracks={track.vehicle_id: track for track in tracks},
        route_id=route_id,
        kilopost_origin=KILOPOST_ORIGIN,
    )


def speed_series(t: np.ndarray, v: Sequence[float] | float) -> SpeedSeries:
    t = np.asarray(t, dtype=float)
    return SpeedSeries(t, np.broadcast_to(np.asarray(v, dtype=float), t.shape).copy())


def trajectory_rows(
    vehicle_id: str,
    n: int,
    speed: float = 72.0,
    lane: int = 1,
    kilopost0: float = 2000.0,
    start_ms: int = 1_700_000_000_000,
) -> List[Dict[str, Any]]:
    """Rows of one vehicle in the CSV schema, datetime in ISO with milliseconds."""
    rows = []
    for i in range(n):
        stamp = np.datetime64(start_ms + 100 * i, "ms").astype(str)
        rows.append(
            {
                "vehicle_id": vehicle_id,
                "datetime": stamp,
                "vehicle_type": "car",
                "speed": speed,
                "lane_id": lane,
                "kilopost": kilopost0 - i * speed / 36.0,
                "lat": 35.0,
                "lon": 135.0 + i * 1e-5,
            }
        )
    return rows


def write_trajectory_csv(rows: List[Dict[str, Any]], path: Path) -> Path:
    """Write rows in the standard column order; values are written as given."""
    lines = [",".join(REQUIRED_COLUMNS)]
    for row in rows:
        lines.append(",".join(str(row[column]) for column in REQUIRED_COLUMNS))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
