#!/usr/bin/env python3
# -*- coding: utf-8 -*-
# Timestamp: "2026-10-17 09:12:03"
# File: ./src/lane_change_impact/ImpactAnalyzer.py
# ----------------------------------------
from __future__ import annotations
import os
__FILE__ = (
    "./src/lane_change_impact/ImpactAnalyzer.py"
)
__DIR__ = os.path.dirname(__FILE__)
# ----------------------------------------

"""
ImpactAnalyzer - Batch extraction, calibration and impact quantification.
"""

import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

from tqdm import tqdm

from .config import RunConfig
from .exceptions import (
    CalibrationError,
    CoverageGapError,
    IngestError,
    LaneChangeImpactError,
)
from .extraction import LaneChangeInstance, Rejection, extract_instances
from .impact import FollowerAnalysis, analyze_follower, global_magnitude, lane_summary
from .newell import NewellParams, calibrate_newell, fallback_params, instance_schedule
from .trajectory import Dataset, parse_dataset, smooth_dataset, write_dataset

logger = logging.getLogger(__name__)

RESULT_SCHEMA_VERSION = 1
LANES = ("target", "original")

# Per-process state of pool workers
_WORKER: dict[str, Any] = {}


def _analyze_lane(
    instance: LaneChangeInstance,
    lane: str,
    dataset: Dataset,
    config: RunConfig,
    tau_pool: list[float],
) -> tuple[list[FollowerAnalysis], list[NewellParams]]:
    """Calibrate and judge the followers of one lane in upstream order.

    The chain stops at the first follower whose demarcation time leaves the
    window, whose speed record has a gap, or who lacks enough intervals on
    either side of its demarcation time.
    """
    reference = dataset[instance.reference(lane)]
    window_start, window_end = instance.window_t
    leader = reference
    T_prev = instance.T_sv_s
    analyses: list[FollowerAnalysis] = []
    params: list[NewellParams] = []

    for i, vehicle_id in enumerate(instance.followers(lane), start=1):
        follower = dataset[vehicle_id]
        fit: NewellParams | None = None
        try:
            fit = calibrate_newell(
                follower,
                leader,
                (max(window_start, follower.t[0], leader.t[0]), T_prev),
                config.min_calibration_span,
            )
        except CalibrationError as e:
            logger.warning(f"{instance.instance_id} {lane} follower {i}: {e}")
        if fit is None or not fit.usable:
            fit = fallback_params(tau_pool, fit)
            logger.warning(
                f"{instance.instance_id} {lane} follower {i}: tau falls back to {fit.tau:.2f} s"
            )
        else:
            tau_pool.append(fit.tau)

        T_s = T_prev + fit.tau
        if T_s >= window_end:
            logger.debug(f"{instance.instance_id} {lane}: T_{i}^s={T_s:.2f} leaves the window")
            break
        T_lb = max(window_start, follower.t[0], reference.t[0])
        T_ub = min(window_end, follower.t[-1], reference.t[-1])
        try:
            analysis = analyze_follower(
                follower.speed_series(),
                reference.speed_series(),
                T_lb,
                T_s,
                T_ub,
                config.dt,
                lane=lane,
                follower_index=i,
                vehicle_id=vehicle_id,
            )
        except CoverageGapError as e:
            logger.warning(f"{instance.instance_id} {lane} follower {i} excluded: {e}")
            break
        if analysis.tdb.n_f < config.min_nf or analysis.tdb.n_r < 1:
            logger.debug(
                f"{instance.instance_id} {lane} follower {i} excluded: "
                f"n_f={analysis.tdb.n_f}, n_r={analysis.tdb.n_r}"
            )
            break

        analyses.append(analysis)
        params.append(fit)
        leader = follower
        T_prev = T_s

    return analyses, params


def analyze_instance(
    instance: LaneChangeInstance, dataset: Dataset, config: RunConfig
) -> dict[str, Any]:
    """Per-instance result record (JSON-ready)."""
    tau_pool: list[float] = []
    lanes: dict[str, Any] = {}
    calibration: list[dict[str, Any]] = []
    summaries = {}

    for lane in LANES:
        if instance.reference(lane) is None:
            lanes[lane] = None
            continue
        analyses, params = _analyze_lane(instance, lane, dataset, config, tau_pool)
        schedule = instance_schedule(instance, params, lane)
        summary = lane_summary(analyses, schedule, config.dt, lane)
        summaries[lane] = summary
        lanes[lane] = {
            **summary.to_dict(),
            "demarcation_times": list(schedule.times),
            "followers": [a.to_dict(full=config.full) for a in analyses],
        }
        calibration.extend(
            {
                "instance_id": instance.instance_id,
                "lane": lane,
                "follower_index": i,
                "tau": p.tau,
                "d": p.d,
                "sse": p.sse,
                "flag": p.flag,
            }
            for i, p in enumerate(params, start=1)
        )

    magnitude = global_magnitude(summaries["target"], summaries.get("original"))
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "instance_id": instance.instance_id,
        "instance": instance.to_dict(),
        "lanes": lanes,
        "global": {"W_A": magnitude.W_A, "original_missing": magnitude.original_missing},
        "calibration": calibration,
    }


def _init_worker(dataset: Dataset, config: RunConfig) -> None:
    _WORKER["dataset"] = dataset
    _WORKER["config"] = config


def _safe_analyze(instance: LaneChangeInstance, dataset: Dataset, config: RunConfig) -> dict[str, Any]:
    try:
        return analyze_instance(instance, dataset, config)
    except LaneChangeImpactError as e:
        logger.error(f"{instance.instance_id}: analysis failed: {e}")
        return {"instance_id": instance.instance_id, "error": str(e)}


def _worker_analyze(instance: LaneChangeInstance) -> dict[str, Any]:
    return _safe_analyze(instance, _WORKER["dataset"], _WORKER["config"])


class ImpactAnalyzer:
    """Quantifies lane-change impact for trajectory datasets."""

    def __init__(self, config: RunConfig | None = None, progress: bool = False):
        self.config = config or RunConfig()
        self.progress = progress
        self.dataset: Dataset | None = None

    def load_dataset(self, path: str | Path, smooth: bool = True) -> Dataset:
        """Parse (and by default smooth) a trajectory file; raises IngestError."""
        dataset = parse_dataset(path, self.config.ingest)
        self.dataset = smooth_dataset(dataset, self.config.smoothing_window) if smooth else dataset
        return self.dataset

    def ingest(
        self, input_path: str | Path, out_path: str | Path | None = None, smooth: bool = False
    ) -> dict[str, Any]:
        """Validate a trajectory file and optionally write it back normalized.

        Speeds are left unsmoothed unless ``smooth`` is set, so analyzing the
        written file gives the same results as analyzing the raw input.
        """
        try:
            dataset = self.load_dataset(input_path, smooth=smooth)
        except (IngestError, FileNotFoundError) as e:
            return {"success": False, "error": str(e), "input": str(input_path)}

        result: dict[str, Any] = {
            "success": True,
            "input": str(input_path),
            "route_id": dataset.route_id,
            "n_vehicles": len(dataset),
            "n_samples": sum(len(track) for track in dataset),
            "n_gaps": sum(len(track.gaps) for track in dataset),
            "kilopost_origin": dataset.kilopost_origin,
        }
        if out_path is not None:
            result["output"] = str(write_dataset(dataset, out_path))
        return result

    def extract(self, dataset: Dataset | None = None) -> dict[str, Any]:
        """Extract lane-change instances; the manifest holds instances and rejections."""
        dataset = dataset if dataset is not None else self.dataset
        if dataset is None:
            return {"success": False, "error": "No dataset loaded"}
        extraction = extract_instances(dataset, self.config)
        return {
            "success": True,
            "n_crossings": extraction.n_crossings,
            "n_instances": len(extraction.instances),
            "rejection_counts": extraction.rejection_counts,
            "manifest": extraction.manifest_records(),
        }

    def analyze_instance(self, instance: LaneChangeInstance, dataset: Dataset | None = None) -> dict[str, Any]:
        dataset = dataset if dataset is not None else self.dataset
        if dataset is None:
            return {"success": False, "error": "No dataset loaded"}
        try:
            return {"success": True, **analyze_instance(instance, dataset, self.config)}
        except LaneChangeImpactError as e:
            return {"success": False, "instance_id": instance.instance_id, "error": str(e)}

    def analyze_dataset(self, dataset: Dataset | None = None) -> dict[str, Any]:
        """Extract every instance of ``dataset`` and quantify its impact.

        Results are ordered by instance id whatever the worker count.
        """
        dataset = dataset if dataset is not None else self.dataset
        if dataset is None:
            return {"success": False, "error": "No dataset loaded"}

        extraction = extract_instances(dataset, self.config)
        instances = extraction.instances
        workers = min(self.config.workers, max(len(instances), 1))
        progress = dict(total=len(instances), desc="instances", file=sys.stderr, disable=not self.progress)

        if workers > 1:
            with ProcessPoolExecutor(
                max_workers=workers,
                initializer=_init_worker,
                initargs=(dataset, self.config),
            ) as pool:
                chunksize = max(1, len(instances) // (workers * 4))
                records = list(tqdm(pool.map(_worker_analyze, instances, chunksize=chunksize), **progress))
        else:
            records = [_safe_analyze(i, dataset, self.config) for i in tqdm(instances, **progress)]

        results = sorted((r for r in records if "error" not in r), key=lambda r: r["instance_id"])
        rejections = list(extraction.rejections)
        by_id = {i.instance_id: i for i in instances}
        for record in records:
            if "error" in record:
                instance = by_id[record["instance_id"]]
                rejections.append(Rejection(instance.sv_id, instance.T_lane, "analysis", record["error"]))
        extraction.rejections = sorted(rejections, key=lambda r: (r.vehicle_id, r.T_lane))

        if not results:
            logger.warning(f"No analyzable lane-change instances in {dataset.route_id}")
        logger.info(f"Analyzed {len(results)} instances with {workers} worker(s)")
        return {
            "success": True,
            "schema_version": RESULT_SCHEMA_VERSION,
            "route_id": dataset.route_id,
            "n_vehicles": len(dataset),
            "n_crossings": extraction.n_crossings,
            "n_instances": len(results),
            "rejection_counts": extraction.rejection_counts,
            "rejections": [r.to_dict() for r in extraction.rejections],
            "instances": results,
        }

    def run_batch(self, input_path: str | Path) -> dict[str, Any]:
        """Parse, smooth, extract and quantify one trajectory file."""
        try:
            dataset = self.load_dataset(input_path)
        except (IngestError, FileNotFoundError) as e:
            return {"success": False, "error": str(e), "input": str(input_path)}
        result = self.analyze_dataset(dataset)
        result["input"] = str(input_path)
        return result


# EOF
