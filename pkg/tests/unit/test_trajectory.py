#!/usr/bin/env python3
"""
Unit tests for trajectory parsing, smoothing and lane geometry.
"""

import numpy as np
import pytest

from lane_change_impact.config import IngestConfig
from lane_change_impact.exceptions import CenterlineError, IngestError
from lane_change_impact.trajectory import (
    build_centerline,
    lateral_offsets,
    parse_dataset,
    smooth_speeds,
    snap_to_grid,
    to_frames,
    write_dataset,
)
from tests.fixtures import (
    make_dataset,
    make_track,
    time_axis,
    trajectory_rows,
    write_trajectory_csv,
)


@pytest.mark.unit
class TestParseDataset:
    """Reading trajectory CSV files."""

    def test_three_vehicles(self, temp_dir):
        rows = []
        for i, vid in enumerate(["a", "b", "c"]):
            rows += trajectory_rows(vid, 100, speed=20.0, kilopost0=2000.0 - 30 * i)
        path = write_trajectory_csv(rows, temp_dir / "three.csv")

        dataset = parse_dataset(path)

        assert len(dataset) == 3
        assert dataset.vehicle_ids == ["a", "b", "c"]
        assert all(len(track) == 100 for track in dataset)
        assert dataset.route_id == "three"
        np.testing.assert_allclose(dataset["a"].t, time_axis(9.9))

    def test_speed_in_kmh(self, temp_dir):
        path = write_trajectory_csv(trajectory_rows("a", 10, speed=72.0), temp_dir / "kmh.csv")
        dataset = parse_dataset(path, IngestConfig(speed_unit="kmh"))
        assert dataset["a"].speed == pytest.approx(np.full(10, 20.0))

    def test_x_from_kilopost(self, temp_dir):
        rows = trajectory_rows("a", 5)
        rows[0]["kilopost"] = 1500.0
        path = write_trajectory_csv(rows, temp_dir / "kp.csv")
        dataset = parse_dataset(path, IngestConfig(kilopost_origin=2000.0))
        assert dataset["a"].x[0] == 500.0
        assert dataset.kilopost_origin == 2000.0

    def test_kilopost_in_km(self, temp_dir):
        rows = trajectory_rows("a", 5)
        for row in rows:
            row["kilopost"] = row["kilopost"] / 1000.0
        path = write_trajectory_csv(rows, temp_dir / "km.csv")
        dataset = parse_dataset(path, IngestConfig(kilopost_unit="km"))
        assert dataset["a"].kilopost[0] == pytest.approx(2000.0)

    def test_epoch_ms(self, temp_dir):
        rows = trajectory_rows("a", 5)
        for i, row in enumerate(rows):
            row["datetime"] = 1_700_000_000_000 + 100 * i
        path = write_trajectory_csv(rows, temp_dir / "epoch.csv")
        dataset = parse_dataset(path, IngestConfig(datetime_format="epoch_ms"))
        np.testing.assert_allclose(dataset["a"].t, [0.0, 0.1, 0.2, 0.3, 0.4])
        assert dataset.epoch_origin_ms == 1_700_000_000_000

    def test_unsorted_rows_are_sorted(self, temp_dir):
        rows = trajectory_rows("a", 10)
        path = write_trajectory_csv(rows[::-1], temp_dir / "rev.csv")
        track = parse_dataset(path)["a"]
        assert (np.diff(track.t) > 0).all()

    def test_missing_file(self, temp_dir):
        with pytest.raises(IngestError, match="No such file"):
            parse_dataset(temp_dir / "absent.csv")

    def test_missing_column(self, temp_dir):
        path = temp_dir / "bad.csv"
        path.write_text("vehicle_id,datetime,speed\na,2024-01-01T00:00:00.000,1\n")
        with pytest.raises(IngestError, match="Missing columns"):
            parse_dataset(path)

    def test_malformed_row_reports_line(self, temp_dir):
        rows = trajectory_rows("a", 5)
        rows[2]["speed"] = "fast"
        path = write_trajectory_csv(rows, temp_dir / "bad.csv")
        with pytest.raises(IngestError) as excinfo:
            parse_dataset(path)
        assert excinfo.value.line == 4

    def test_negative_speed(self, temp_dir):
        rows = trajectory_rows("a", 5)
        rows[1]["speed"] = -1.0
        path = write_trajectory_csv(rows, temp_dir / "neg.csv")
        with pytest.raises(IngestError, match="negative speed"):
            parse_dataset(path)

    def test_duplicate_sample(self, temp_dir):
        rows = trajectory_rows("a", 5)
        rows.append(dict(rows[3]))
        path = write_trajectory_csv(rows, temp_dir / "dup.csv")
        with pytest.raises(IngestError, match="duplicate") as excinfo:
            parse_dataset(path)
        assert excinfo.value.line == 7

    def test_short_gap_interpolated(self, temp_dir):
        rows = trajectory_rows("a", 30)
        del rows[10:13]
        path = write_trajectory_csv(rows, temp_dir / "gap.csv")
        track = parse_dataset(path)["a"]
        assert len(track) == 30
        assert track.gaps == ()
        expected = [row["kilopost"] for row in trajectory_rows("a", 30)]
        np.testing.assert_allclose(track.kilopost, expected)

    def test_long_gap_recorded(self, temp_dir):
        rows = trajectory_rows("a", 60)
        del rows[10:30]
        path = write_trajectory_csv(rows, temp_dir / "gap.csv")
        track = parse_dataset(path)["a"]
        assert len(track) == 40
        assert track.gaps == ((0.9, 3.0),)
        assert track.has_gap_within(1.0, 2.0)
        assert not track.covers(0.0, 4.0)
        assert track.covers(3.0, 5.9)

    def test_write_then_parse_is_exact(self, temp_dir):
        rows = trajectory_rows("a", 50, speed=19.87) + trajectory_rows("b", 40, speed=22.31, lane=2)
        first = parse_dataset(write_trajectory_csv(rows, temp_dir / "in.csv"))
        second = parse_dataset(write_dataset(first, temp_dir / "out.csv"))

        for vid in ("a", "b"):
            for column in ("t", "x", "speed", "lane_id", "kilopost", "lat", "lon"):
                np.testing.assert_array_equal(getattr(first[vid], column), getattr(second[vid], column))


@pytest.mark.unit
class TestTrackHelpers:
    """Frame grid and track accessors."""

    def test_grid(self):
        assert to_frames(1.23) == 12
        assert snap_to_grid(60.04) == 60.0
        assert snap_to_grid(61.56) == pytest.approx(61.6)

    def test_index_and_crop(self):
        track = make_track("a", time_axis(10.0), 20.0)
        assert track.index_at(2.5) == 25
        assert track.index_at(20.0) is None
        cropped = track.crop(2.0, 3.0)
        assert len(cropped) == 11
        assert cropped.t[0] == 2.0

    def test_lane_sequence(self):
        t = time_axis(0.3)
        track = make_track("a", t, 20.0, lane=[1, 1, 2, 2])
        assert track.lane_sequence() == [1, 2]
        assert not track.is_lane_keeper
        assert make_track("b", t, 20.0).is_lane_keeper

    def test_point(self):
        track = make_track("a", time_axis(1.0), 10.0, x0=5.0)
        point = track.point(10)
        assert point.t == 1.0
        assert point.x == pytest.approx(15.0)
        assert point.lateral is None


@pytest.mark.unit
class TestSmoothing:
    """Centered moving average."""

    def test_constant_fixed_point(self):
        track = make_track("a", time_axis(5.0), 10.0)
        np.testing.assert_array_equal(smooth_speeds(track, 1.0).speed, track.speed)

    def test_spike(self):
        track = make_track("a", time_axis(0.4), [10, 10, 20, 10, 10])
        smoothed = smooth_speeds(track, 0.5)
        assert smoothed.speed[2] == pytest.approx(12.0)
        # end samples shrink to themselves
        assert smoothed.speed[0] == 10.0

    def test_even_sample_window_widens_to_odd(self):
        track = make_track("a", time_axis(0.8), [10, 10, 10, 10, 20, 10, 10, 10, 10])
        four = smooth_speeds(track, 0.4)
        np.testing.assert_array_equal(four.speed, smooth_speeds(track, 0.5).speed)
        assert four.speed[4] == pytest.approx(12.0)

    def test_positions_untouched(self):
        track = make_track("a", time_axis(3.0), np.linspace(10, 20, 31))
        smoothed = smooth_speeds(track, 1.0)
        np.testing.assert_array_equal(smoothed.x, track.x)

    @pytest.mark.parametrize("seed", range(10))
    def test_noise_variance_drops(self, seed):
        rng = np.random.default_rng(seed)
        track = make_track("a", time_axis(30.0), 20.0 + rng.normal(0, 1, 301))
        assert smooth_speeds(track, 1.0).speed.var() < track.speed.var()

    def test_segments_smoothed_separately(self):
        t = np.concatenate([time_axis(1.0), time_axis(1.0, start=5.0)])
        speed = np.concatenate([np.full(11, 10.0), np.full(11, 30.0)])
        smoothed = smooth_speeds(make_track("a", t, speed), 1.0)
        np.testing.assert_array_equal(smoothed.speed, speed)

    def test_empty_track(self):
        track = make_track("a", time_axis(1.0), 10.0).crop(5.0, 6.0)
        with pytest.raises(ValueError, match="empty"):
            smooth_speeds(track, 1.0)

    def test_window_too_short(self):
        with pytest.raises(ValueError):
            smooth_speeds(make_track("a", time_axis(1.0), 10.0), 0.05)


@pytest.mark.unit
class TestCenterline:
    """Lane centerline and lateral offsets."""

    def test_straight_line(self):
        t = time_axis(20.0)
        dataset = make_dataset([make_track("a", t, 10.0), make_track("b", t, 12.0, x0=-30.0)])
        centerline = build_centerline(dataset, 1, 10.0)
        assert np.abs(centerline.lat - 35.0).max() < 1e-9
        assert (np.diff(centerline.x) > 0).all()

    def test_symmetric_keepers(self):
        t = time_axis(30.0)
        dataset = make_dataset([
            make_track("a", t, 10.0, north=0.5),
            make_track("b", t, 10.0, north=-0.5),
            make_track("c", t, 10.0, lane=2, north=-3.5),
        ])
        centerline = build_centerline(dataset, 1)
        on_line = lateral_offsets(make_track("d", t, 9.0, north=0.0), centerline)
        assert np.abs(on_line.lateral).max() < 0.01

    def test_empty_bin_interpolated(self):
        x = np.concatenate([np.arange(400) * 0.1 + 0.05, np.arange(500) * 0.1 + 50.05])
        t = np.arange(len(x)) / 10.0
        dataset = make_dataset([
            make_track("a", t[:400], 1.0, x=x[:400], north=0.0),
            make_track("b", t[400:], 1.0, x=x[400:], north=1.0),
        ])
        centerline = build_centerline(dataset, 1, 10.0)
        lat = dict(zip(np.round(centerline.x, 6), centerline.lat))
        assert lat[45.0] == pytest.approx((lat[35.0] + lat[55.0]) / 2, abs=1e-12)

    def test_no_keepers(self):
        t = time_axis(1.0)
        dataset = make_dataset([make_track("a", t, 10.0, lane=2)])
        with pytest.raises(CenterlineError):
            build_centerline(dataset, 1)

    def test_single_bin(self):
        dataset = make_dataset([make_track("a", time_axis(0.5), 1.0)])
        with pytest.raises(CenterlineError, match="single bin"):
            build_centerline(dataset, 1, 10.0)

    def test_lateral_sign_and_size(self):
        t = time_axis(30.0)
        dataset = make_dataset([make_track("a", t, 10.0), make_track("b", t, 10.0, x0=-20.0)])
        centerline = build_centerline(dataset, 1)
        on_line = lateral_offsets(dataset["a"], centerline)
        passing = lateral_offsets(make_track("p", t, 10.0, north=-3.5), centerline)
        mirrored = lateral_offsets(make_track("q", t, 10.0, north=-3.5), centerline, "left")

        assert np.abs(on_line.lateral).max() < 1e-6
        assert passing.lateral == pytest.approx(np.full(len(t), 3.5), abs=0.01)
        assert mirrored.lateral == pytest.approx(np.full(len(t), -3.5), abs=0.01)

    def test_linear_crossing_is_linear(self):
        t = time_axis(30.0)
        dataset = make_dataset([make_track("a", t, 10.0), make_track("b", t, 10.0, x0=-20.0)])
        centerline = build_centerline(dataset, 1)
        crossing = make_track("c", t, 10.0, north=-3.5 * t / 30.0)
        lateral = lateral_offsets(crossing, centerline).lateral
        slope, intercept = np.polyfit(t, lateral, 1)
        assert slope == pytest.approx(3.5 / 30.0, rel=1e-3)
        assert np.abs(lateral - (slope * t + intercept)).max() < 0.01
