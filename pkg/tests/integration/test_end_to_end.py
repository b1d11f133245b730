#!/usr/bin/env python3
"""
Integration tests for end-to-end workflows.

Synthetic scenarios go through the CSV writer, the parser, extraction,
calibration, the impact judgment and the report files, and the results
are checked against the scenario's ground truth.
"""

import json

import numpy as np
import pandas as pd
import pytest

from lane_change_impact import ImpactAnalyzer, RunConfig
from lane_change_impact.cli import EXIT_EMPTY, EXIT_OK, main
from lane_change_impact.report import emit_reports
from lane_change_impact.synth import generate_batch, generate_platoon, inject_lane_change
from tests.conftest import assert_result_record
from tests.fixtures import SAMPLE_SCENARIO_TEXT


def _analyze(spec, **config):
    dataset, truth = inject_lane_change(generate_platoon(spec), spec)
    batch = ImpactAnalyzer(RunConfig(**config)).analyze_dataset(dataset)
    return batch, truth


@pytest.mark.integration
class TestCommandLineWorkflow:
    """synth -> analyze -> report through the CLI."""

    def test_synth_analyze_report(self, temp_dir):
        scenario = temp_dir / "scenario.cfg"
        scenario.write_text(SAMPLE_SCENARIO_TEXT)
        synth_dir, run_dir, again_dir = temp_dir / "synth", temp_dir / "run", temp_dir / "again"

        assert main(["synth", "--out", str(synth_dir), "--config", str(scenario)]) == EXIT_OK
        data = str(synth_dir / "trajectories.csv")
        assert main(["analyze", "--input", data, "--out", str(run_dir), "--full"]) == EXIT_OK
        assert main(["report", "--input", str(run_dir), "--out", str(again_dir)]) == EXIT_OK

        truth = json.loads((synth_dir / "ground_truth.json").read_text())["scenarios"][0]
        lanes = pd.read_csv(run_dir / "instances.csv")
        assert sorted(lanes["lane"]) == ["original", "target"]
        assert lanes["instance_id"].iloc[0].startswith(truth["sv_id"] + "-")

        record = json.loads(next((run_dir / "instances").glob("*.json")).read_text())
        assert_result_record(record)
        target = record["lanes"]["target"]
        assert [f["vehicle_id"] for f in target["followers"]] == truth["tfv_ids"][: target["N"]]
        assert target["followers"][0]["upsilon"] == 1
        assert target["W_A"] < 0
        assert "tdb_post" in target["followers"][0]

        for name in ("instances.csv", "aggregate.csv", "follower_profile.csv"):
            assert (run_dir / name).read_bytes() == (again_dir / name).read_bytes(), name

    def test_ingested_file_analyzes_like_raw(self, temp_dir):
        scenario = temp_dir / "scenario.cfg"
        scenario.write_text(SAMPLE_SCENARIO_TEXT)
        assert main(["synth", "--out", str(temp_dir / "synth"), "--config", str(scenario)]) == EXIT_OK
        raw = temp_dir / "synth" / "trajectories.csv"
        normalized = temp_dir / "normalized.csv"

        assert main(["ingest", "--input", str(raw), "--out", str(normalized)]) == EXIT_OK
        assert main(["analyze", "--input", str(raw), "--out", str(temp_dir / "raw")]) == EXIT_OK
        assert main(["analyze", "--input", str(normalized), "--out", str(temp_dir / "norm")]) == EXIT_OK

        for name in ("instances.csv", "calibration.csv"):
            assert (temp_dir / "raw" / name).read_bytes() == (temp_dir / "norm" / name).read_bytes(), name

    def test_no_lane_change_gives_empty_report(self, temp_dir):
        scenario = temp_dir / "scenario.cfg"
        scenario.write_text(SAMPLE_SCENARIO_TEXT.replace("insertion_time = 60", "insertion_time = none"))
        assert main(["synth", "--out", str(temp_dir / "synth"), "--config", str(scenario)]) == EXIT_OK

        data = str(temp_dir / "synth" / "trajectories.csv")
        assert main(["analyze", "--input", data, "--out", str(temp_dir / "run")]) == EXIT_OK
        assert pd.read_csv(temp_dir / "run" / "instances.csv").empty
        assert main(["analyze", "--input", data, "--out", str(temp_dir / "run"), "--strict"]) == EXIT_EMPTY


@pytest.mark.integration
class TestAgainstGroundTruth:
    """Analysis results follow the injected dynamics."""

    def test_tight_gap_hurts_more_than_large_gap(self, small_spec):
        tight, tight_truth = _analyze(small_spec)
        large, large_truth = _analyze(small_spec.model_copy(update={"gap_extra": 30.0}))

        tight_target = tight["instances"][0]["lanes"]["target"]
        large_target = large["instances"][0]["lanes"]["target"]
        assert tight_truth.tfv_ids[0] in tight_truth.affected
        assert not set(large_truth.affected) & set(large_truth.tfv_ids)

        assert tight_target["N_A"] >= 1
        assert tight_target["W_A"] < 0
        assert large_target["N_A"] == 0
        assert large_target["W_A"] == pytest.approx(0.0, abs=1e-9)
        assert abs(tight_target["W_A"]) > abs(large_target["W_A"])

    def test_onset_after_demarcation(self, small_spec):
        batch, truth = _analyze(small_spec)
        target = batch["instances"][0]["lanes"]["target"]
        first = target["followers"][0]
        assert first["t_s"] >= target["demarcation_times"][0] - 0.1
        assert first["t_s"] == pytest.approx(truth.onsets[truth.tfv_ids[0]], abs=1.0)
        # slowed by 1 m/s until the 12.5 m surplus is gone
        assert first["T_A"] == pytest.approx(12.5, abs=1.5)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(20))
    def test_injected_suite(self, small_spec, seed):
        spec = small_spec.model_copy(update={"seed": seed})
        batch, truth = _analyze(spec)
        target = batch["instances"][0]["lanes"]["target"]
        first = target["followers"][0]

        assert first["vehicle_id"] == truth.tfv_ids[0]
        assert first["upsilon"] == 1
        assert first["w_A"] < 0
        assert abs(first["t_s"] - truth.onsets[truth.tfv_ids[0]]) <= 2.0

        control, _ = _analyze(spec.model_copy(update={"gap_extra": 30.0}))
        assert control["instances"][0]["lanes"]["target"]["N_A"] == 0

    def test_upstream_cut_in_rejects_instance(self, injected):
        dataset, truth = injected
        cutter_id = truth.fv_ids[-1]
        cutter = dataset[cutter_id]
        tracks = dict(dataset.tracks)
        tracks[cutter_id] = cutter.replace(lane_id=np.where(cutter.t >= 70.0, 2, 1).astype(np.int64))

        batch = ImpactAnalyzer(RunConfig()).analyze_dataset(dataset.with_tracks(tracks))

        assert truth.sv_id not in [r["instance"]["sv_id"] for r in batch["instances"]]
        assert batch["rejection_counts"]["interference"] >= 1
        assert any(
            r["vehicle_id"] == truth.sv_id and r["criterion"] == "interference" for r in batch["rejections"]
        )


@pytest.mark.integration
@pytest.mark.slow
class TestBatches:
    """Many scenarios on one route."""

    def test_workers_give_identical_reports(self, small_spec, temp_dir):
        dataset, truths = generate_batch(small_spec, 10)
        names = ("instances.csv", "aggregate.csv", "calibration.csv", "follower_profile.csv", "manifest.jsonl")
        reports = {}
        for workers in (1, 4, 8):
            batch = ImpactAnalyzer(RunConfig(workers=workers)).analyze_dataset(dataset)
            assert batch["n_instances"] == 10
            emit_reports(batch, temp_dir / f"w{workers}")
            reports[workers] = {name: (temp_dir / f"w{workers}" / name).read_bytes() for name in names}

        assert reports[4] == reports[1]
        assert reports[8] == reports[1]
        instance_files = sorted(p.name for p in (temp_dir / "w8" / "instances").glob("*.json"))
        for name in instance_files:
            one = (temp_dir / "w1" / "instances" / name).read_bytes()
            assert (temp_dir / "w8" / "instances" / name).read_bytes() == one, name

        sv_ids = sorted(r["instance"]["sv_id"] for r in batch["instances"])
        assert sv_ids == sorted(t.sv_id for t in truths)

    def test_full_batch(self, small_spec):
        dataset, truths = generate_batch(small_spec, 228)
        batch = ImpactAnalyzer(RunConfig(workers=4)).analyze_dataset(dataset)

        assert batch["n_instances"] == 228
        assert batch["rejection_counts"]["analysis"] == 0
        directions = {r["instance"]["direction"] for r in batch["instances"]}
        assert directions == {"toward_passing", "toward_driving"}
        assert all(r["lanes"]["target"]["followers"][0]["w_A"] < 0 for r in batch["instances"])
