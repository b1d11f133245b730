#!/usr/bin/env python3
"""
Test configuration and fixtures for the lane-change-impact test suite.

Provides synthetic platoons with and without an injected lane change and
a few assertion helpers shared by unit and integration tests.
"""

import tempfile
from pathlib import Path
from typing import Any, Dict, Generator, Tuple

import numpy as np
import pytest

from lane_change_impact.config import RunConfig
from lane_change_impact.synth import (
    GroundTruth,
    ScenarioSpec,
    _sv_lateral,
    generate_platoon,
    inject_lane_change,
)
from lane_change_impact.trajectory import Dataset, unproject


@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create temporary directory for test files."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def small_spec() -> ScenarioSpec:
    """Eight vehicles per lane, SV and gap at position 3, onset at 60 s."""
    return ScenarioSpec(seed=3, n_vehicles=8, sv_index=3, gap_index=3)


@pytest.fixture
def baseline_platoon(small_spec: ScenarioSpec) -> Dataset:
    return generate_platoon(small_spec)


@pytest.fixture
def injected(small_spec: ScenarioSpec, baseline_platoon: Dataset) -> Tuple[Dataset, GroundTruth]:
    return inject_lane_change(baseline_platoon, small_spec)


@pytest.fixture
def null_lane_change(small_spec: ScenarioSpec, baseline_platoon: Dataset) -> Tuple[Dataset, str]:
    """Baseline platoon whose SV drifts into the target lane without any speed change."""
    sv_id = f"L{small_spec.original_lane}V{small_spec.sv_index:02d}"
    sv = baseline_platoon[sv_id]
    steady = np.full(len(sv), small_spec.lane_offset(small_spec.original_lane))
    north, lane_id = _sv_lateral(small_spec, sv.t, steady)
    lat, lon = unproject(sv.x, north, (small_spec.origin_lat, small_spec.origin_lon))
    tracks = dict(baseline_platoon.tracks)
    tracks[sv_id] = sv.replace(lat=lat, lon=lon, lane_id=lane_id)
    return baseline_platoon.with_tracks(tracks), sv_id


@pytest.fixture
def run_config() -> RunConfig:
    return RunConfig(full=True)


# Performance testing utilities
@pytest.fixture
def performance_threshold() -> Dict[str, float]:
    """Performance thresholds for different operations (seconds)."""
    return {
        'judgment_chain': 0.001,     # 1ms
        'tdb_follower': 0.01,        # 10ms
        'calibration': 0.5,          # 500ms
        'instance_analysis': 5.0,
        'batch_228': 60.0,
    }


# Markers for test categories
def pytest_configure(config):
    """Configure pytest markers."""
    config.addinivalue_line("markers", "unit: Unit tests")
    config.addinivalue_line("markers", "integration: Integration tests")
    config.addinivalue_line("markers", "performance: Performance tests")
    config.addinivalue_line("markers", "slow: Slow tests (> 1 second)")


# Utility functions for tests
def assert_result_record(record: Dict[str, Any]) -> None:
    """Assert a per-instance result carries every lane and global field."""
    for key in ('schema_version', 'instance_id', 'instance', 'lanes', 'global', 'calibration'):
        assert key in record, f"Missing result field: {key}"
    assert record['lanes']['target'] is not None
    for summary in record['lanes'].values():
        if summary is None:
            continue
        for key in ('N', 'N_A', 'W_A', 'T_A_total', 'followers', 'demarcation_times'):
            assert key in summary, f"Missing lane field: {key}"
        assert 0 <= summary['N_A'] <= summary['N']
        assert len(summary['followers']) == summary['N']


def assert_failure(response: Dict[str, Any]) -> None:
    assert response.get('success') is False
    assert 'error' in response
