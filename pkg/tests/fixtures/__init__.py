"""Test fixtures and sample data for lane-change-impact."""

from .sample_data import (
    FIRST_FOLLOWER_EXPECTED,
    FIRST_FOLLOWER_POST,
    FIRST_FOLLOWER_PRE,
    KILOPOST_ORIGIN,
    ORIGIN,
    ORIGINAL_FOLLOWER_EXPECTED,
    ORIGINAL_FOLLOWER_POST,
    ORIGINAL_FOLLOWER_PRE,
    SAMPLE_CONFIG_TEXT,
    SAMPLE_SCENARIO_TEXT,
    STATUS_EXAMPLE_EXPECTED,
    STATUS_EXAMPLE_NF,
    STATUS_EXAMPLE_THETA,
    make_dataset,
    make_track,
    speed_series,
    time_axis,
    trajectory_rows,
    write_trajectory_csv,
)

__all__ = [
    'FIRST_FOLLOWER_EXPECTED',
    'FIRST_FOLLOWER_POST',
    'FIRST_FOLLOWER_PRE',
    'KILOPOST_ORIGIN',
    'ORIGIN',
    'ORIGINAL_FOLLOWER_EXPECTED',
    'ORIGINAL_FOLLOWER_POST',
    'ORIGINAL_FOLLOWER_PRE',
    'SAMPLE_CONFIG_TEXT',
    'SAMPLE_SCENARIO_TEXT',
    'STATUS_EXAMPLE_EXPECTED',
    'STATUS_EXAMPLE_NF',
    'STATUS_EXAMPLE_THETA',
    'make_dataset',
    'make_track',
    'speed_series',
    'time_axis',
    'trajectory_rows',
    'write_trajectory_csv',
]
