"""
Report files for analyzed batches.

Layout of an output directory::

    batch.json                 counts, rejection totals, schema version
    config.cfg                 effective configuration (key = value)
    manifest.jsonl             one line per instance or rejection
    instances/<id>.json        full per-instance result
    instances.csv              one row per instance and lane
    calibration.csv            Newell fits of every analyzed follower
    aggregate.csv              means per lane, overall and per label group
    follower_profile.csv       impact by follower position
    histograms/*.csv           value,count pairs
    charts/*.svg               optional bar charts of the histograms

Every file is written in a fixed order with sorted keys, so identical
batches give byte-identical reports.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from collections.abc import Iterable
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .config import RunConfig, dump_key_value

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
LANES = ("target", "original")

INSTANCE_COLUMNS = ["instance_id", "lane", "N", "N_A", "W_A", "T_A", "t_S", "t_E"]
CALIBRATION_COLUMNS = ["instance_id", "lane", "follower_index", "tau", "d", "sse", "flag"]
AGGREGATE_COLUMNS = ["group", "lane", "n", "T_A", "N_A", "W_A", "first_T_A", "first_w_A"]
PROFILE_COLUMNS = ["lane", "follower_index", "n", "affected_share", "mean_T_A", "mean_w_A"]


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def _write_json(payload: Any, path: Path) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---- Tables ----


def lane_table(results: Iterable[dict[str, Any]]) -> pd.DataFrame:
    """One row per (instance, analyzed lane) with labels and first-follower values."""
    rows = []
    for result in results:
        instance = result["instance"]
        for lane in LANES:
            summary = result["lanes"].get(lane)
            if summary is None:
                continue
            first = summary["followers"][0] if summary["followers"] else None
            rows.append(
                {
                    "instance_id": result["instance_id"],
                    "lane": lane,
                    "direction": instance.get("direction", ""),
                    "traffic_state": instance.get("traffic_state", ""),
                    "N": summary["N"],
                    "N_A": summary["N_A"],
                    "W_A": summary["W_A"],
                    "T_A": summary["T_A_total"],
                    "t_S": summary["t_S"],
                    "t_E": summary["t_E"],
                    "first_T_A": first["T_A"] if first else math.nan,
                    "first_w_A": first["w_A"] if first else math.nan,
                }
            )
    columns = INSTANCE_COLUMNS + ["direction", "traffic_state", "first_T_A", "first_w_A"]
    return pd.DataFrame(rows, columns=columns)


def global_table(results: Iterable[dict[str, Any]]) -> pd.DataFrame:
    rows = [
        {
            "instance_id": r["instance_id"],
            "direction": r["instance"].get("direction", ""),
            "traffic_state": r["instance"].get("traffic_state", ""),
            "W_A": r["global"]["W_A"],
            "original_missing": r["global"]["original_missing"],
        }
        for r in results
    ]
    return pd.DataFrame(rows, columns=["instance_id", "direction", "traffic_state", "W_A", "original_missing"])


def aggregate_table(lanes: pd.DataFrame, totals: pd.DataFrame) -> pd.DataFrame:
    """Means per lane and of the global magnitude, overall and per label."""
    if totals.empty:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)

    groups: list[tuple[str, pd.Series, pd.Series]] = [
        ("all", pd.Series(True, index=lanes.index), pd.Series(True, index=totals.index))
    ]
    for label in ("direction", "traffic_state"):
        for value in sorted(v for v in totals[label].unique() if v):
            groups.append((f"{label}={value}", lanes[label] == value, totals[label] == value))

    rows = []
    for name, lane_mask, total_mask in groups:
        for lane in LANES:
            part = lanes[lane_mask & (lanes["lane"] == lane)]
            rows.append(
                {
                    "group": name,
                    "lane": lane,
                    "n": len(part),
                    "T_A": part["T_A"].mean(),
                    "N_A": part["N_A"].mean(),
                    "W_A": part["W_A"].mean(),
                    "first_T_A": part["first_T_A"].mean(),
                    "first_w_A": part["first_w_A"].mean(),
                }
            )
        part = totals[total_mask]
        rows.append({"group": name, "lane": "global", "n": len(part), "W_A": part["W_A"].mean()})
    return pd.DataFrame(rows, columns=AGGREGATE_COLUMNS)


def follower_profile(results: Iterable[dict[str, Any]]) -> pd.DataFrame:
    """Share of affected followers and mean impact by position upstream of the SV."""
    rows = [
        {
            "lane": lane,
            "follower_index": f["follower_index"],
            "upsilon": f["upsilon"],
            "T_A": f["T_A"],
            "w_A": f["w_A"],
        }
        for r in results
        for lane in LANES
        if r["lanes"].get(lane)
        for f in r["lanes"][lane]["followers"]
    ]
    if not rows:
        return pd.DataFrame(columns=PROFILE_COLUMNS)
    frame = pd.DataFrame(rows)
    profile = (
        frame.groupby(["lane", "follower_index"], sort=True)
        .agg(
            n=("upsilon", "size"),
            affected_share=("upsilon", "mean"),
            mean_T_A=("T_A", "mean"),
            mean_w_A=("w_A", "mean"),
        )
        .reset_index()
    )
    return profile[PROFILE_COLUMNS]


def histogram(values: Iterable[float], bin_width: float) -> pd.DataFrame:
    """Counts of non-empty bins; a value v falls in bin ``floor(v / bin_width) * bin_width``."""
    finite = [v for v in values if v is not None and not math.isnan(v)]
    counts = Counter(float(np.floor(v / bin_width) * bin_width) + 0.0 for v in finite)
    rows = [(f"{value:g}", counts[value]) for value in sorted(counts)]
    return pd.DataFrame(rows, columns=["value", "count"])


def histograms(lanes: pd.DataFrame, totals: pd.DataFrame, config: RunConfig) -> dict[str, pd.DataFrame]:
    tables: dict[str, pd.DataFrame] = {}
    for lane in LANES:
        part = lanes[lanes["lane"] == lane]
        tables[f"duration_{lane}"] = histogram(part["T_A"], config.histogram_duration_bin)
        tables[f"affected_{lane}"] = histogram(part["N_A"], config.histogram_count_bin)
        tables[f"magnitude_{lane}"] = histogram(part["W_A"], config.histogram_magnitude_bin)
        tables[f"first_follower_duration_{lane}"] = histogram(part["first_T_A"], config.histogram_duration_bin)
        tables[f"first_follower_magnitude_{lane}"] = histogram(part["first_w_A"], config.histogram_magnitude_bin)
    tables["magnitude_global"] = histogram(totals["W_A"], config.histogram_magnitude_bin)
    return tables


# ---- Charts ----


def render_charts(tables: dict[str, pd.DataFrame], out_dir: Path) -> list[Path]:
    """Bar chart per histogram as reproducible SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "lane-change-impact"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, table in sorted(tables.items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.bar(table["value"].astype(float), table["count"], width=0.8, color="tab:blue")
        ax.set_xlabel(name.replace("_", " "))
        ax.set_ylabel("instances")
        path = out_dir / f"{name}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


# ---- Entry points ----


def emit_reports(batch: dict[str, Any], out_dir: str | Path, config: RunConfig | None = None) -> dict[str, Any]:
    """Write every report file of ``batch`` below ``out_dir``."""
    config = config or RunConfig()
    out_dir = Path(out_dir)
    try:
        (out_dir / "instances").mkdir(parents=True, exist_ok=True)
        (out_dir / "histograms").mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return {"success": False, "error": f"Cannot create {out_dir}: {e}"}

    results = sorted(batch.get("instances", []), key=lambda r: r["instance_id"])
    written: list[Path] = []
    try:
        for stale in (out_dir / "instances").glob("*.json"):
            stale.unlink()
        for result in results:
            written.append(_write_json(result, out_dir / "instances" / f"{result['instance_id']}.json"))

        manifest = [r["instance"] for r in results] + list(batch.get("rejections", []))
        manifest_path = out_dir / "manifest.jsonl"
        manifest_path.write_text(
            "".join(json.dumps(record, sort_keys=True) + "\n" for record in manifest), encoding="utf-8"
        )
        written.append(manifest_path)

        meta = {
            "schema_version": REPORT_SCHEMA_VERSION,
            "route_id": batch.get("route_id"),
            "n_crossings": batch.get("n_crossings", 0),
            "n_instances": len(results),
            "rejection_counts": batch.get("rejection_counts", {}),
        }
        written.append(_write_json(meta, out_dir / "batch.json"))
        config_path = out_dir / "config.cfg"
        config_path.write_text(dump_key_value(config), encoding="utf-8")
        written.append(config_path)

        lanes = lane_table(results)
        totals = global_table(results)
        written.append(_write_csv(lanes[INSTANCE_COLUMNS], out_dir / "instances.csv"))
        calibration = pd.DataFrame(
            [row for r in results for row in r.get("calibration", [])], columns=CALIBRATION_COLUMNS
        )
        written.append(_write_csv(calibration, out_dir / "calibration.csv"))
        written.append(_write_csv(aggregate_table(lanes, totals), out_dir / "aggregate.csv"))
        written.append(_write_csv(follower_profile(results), out_dir / "follower_profile.csv"))

        tables = histograms(lanes, totals, config)
        for name, table in tables.items():
            written.append(_write_csv(table, out_dir / "histograms" / f"{name}.csv"))
        if config.charts:
            written.extend(render_charts(tables, out_dir / "charts"))
    except OSError as e:
        return {"success": False, "error": f"Cannot write reports to {out_dir}: {e}"}

    logger.info(f"Wrote {len(written)} report files to {out_dir}")
    return {
        "success": True,
        "out_dir": str(out_dir),
        "n_instances": len(results),
        "files": sorted(str(p.relative_to(out_dir)) for p in written),
    }


def load_results(in_dir: str | Path) -> dict[str, Any]:
    """Rebuild a batch dictionary from a previously written report directory."""
    in_dir = Path(in_dir)
    instance_dir = in_dir / "instances"
    if not instance_dir.is_dir():
        return {"success": False, "error": f"No instances directory in {in_dir}"}

    results = [
        json.loads(path.read_text(encoding="utf-8")) for path in sorted(instance_dir.glob("*.json"))
    ]
    rejections = []
    manifest_path = in_dir / "manifest.jsonl"
    if manifest_path.exists():
        for line in manifest_path.read_text(encoding="utf-8").splitlines():
            record = json.loads(line)
            if record.get("type") == "rejection":
                rejections.append(record)
    meta = {}
    if (in_dir / "batch.json").exists():
        meta = json.loads((in_dir / "batch.json").read_text(encoding="utf-8"))
    return {
        "success": True,
        "route_id": meta.get("route_id"),
        "n_crossings": meta.get("n_crossings", 0),
        "n_instances": len(results),
        "rejection_counts": meta.get("rejection_counts", {}),
        "rejections": rejections,
        "instances": results,
    }
