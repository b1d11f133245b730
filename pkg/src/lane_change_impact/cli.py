#!/usr/bin/env python3
"""
CLI interface for lane-change-impact

Ingest trajectory files, extract lane-change instances, quantify their
impact on upstream traffic and emit report files.
"""

import argparse
import json
import logging
import sys
from importlib import metadata
from pathlib import Path

from .__version__ import __version__
from .config import RunConfig, dump_key_value, load_config
from .exceptions import ConfigError, ScenarioError
from .ImpactAnalyzer import ImpactAnalyzer
from .report import emit_reports, load_results
from .synth import (
    ScenarioSpec,
    generate_batch,
    generate_platoon,
    inject_lane_change,
    load_scenario_spec,
    write_ground_truth,
)
from .trajectory import write_dataset

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2
EXIT_EMPTY = 3

RUNTIME_PACKAGES = ("numpy", "scipy", "pandas", "matplotlib", "pydantic", "tqdm")


def _run_config(args: argparse.Namespace) -> RunConfig:
    return load_config(
        getattr(args, "config", None),
        dt=getattr(args, "dt", None),
        workers=getattr(args, "workers", None),
        full=True if getattr(args, "full", False) else None,
        strict=True if getattr(args, "strict", False) else None,
    )


def _print_result(args: argparse.Namespace, result: dict, ok: str) -> None:
    if args.json:
        print(json.dumps(result, indent=2))
    elif result.get("success"):
        print(f"✓ {ok}")
    else:
        print(f"✗ {result.get('error')}")


def ingest_command(args: argparse.Namespace) -> int:
    """Validate and normalize a trajectory file."""
    config = _run_config(args)
    analyzer = ImpactAnalyzer(config)
    out = Path(args.out) if args.out else None
    result = analyzer.ingest(args.input, out)

    _print_result(
        args,
        result,
        f"Ingested {result.get('n_vehicles')} vehicles ({result.get('n_samples')} samples, "
        f"{result.get('n_gaps')} gaps) from {args.input}",
    )
    if result.get("success") and not args.json and out is not None:
        print(f"  Normalized data written to {out}")
    return EXIT_OK if result.get("success") else EXIT_INPUT


def extract_command(args: argparse.Namespace) -> int:
    """Extract lane-change instances and write the manifest."""
    config = _run_config(args)
    analyzer = ImpactAnalyzer(config)
    loaded = analyzer.ingest(args.input, smooth=True)
    if not loaded.get("success"):
        _print_result(args, loaded, "")
        return EXIT_INPUT

    result = analyzer.extract()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text(
        "".join(json.dumps(record, sort_keys=True) + "\n" for record in result["manifest"]),
        encoding="utf-8",
    )
    summary = {k: v for k, v in result.items() if k != "manifest"}
    summary["manifest"] = str(manifest)

    _print_result(args, summary, f"Extracted {result['n_instances']} instances from {result['n_crossings']} lane crossings")
    if not args.json:
        for criterion, count in result["rejection_counts"].items():
            if count:
                print(f"  rejected ({criterion}): {count}")
    if config.strict and result["n_instances"] == 0:
        return EXIT_EMPTY
    return EXIT_OK


def analyze_command(args: argparse.Namespace) -> int:
    """Run the full pipeline and write reports."""
    config = _run_config(args)
    analyzer = ImpactAnalyzer(config, progress=args.verbose)
    batch = analyzer.run_batch(args.input)
    if not batch.get("success"):
        _print_result(args, batch, "")
        return EXIT_INPUT

    report = emit_reports(batch, args.out, config)
    summary = {
        "success": report.get("success", False),
        "input": args.input,
        "n_crossings": batch["n_crossings"],
        "n_instances": batch["n_instances"],
        "rejection_counts": batch["rejection_counts"],
        **{k: v for k, v in report.items() if k != "success"},
    }
    _print_result(args, summary, f"Analyzed {batch['n_instances']} instances, reports in {args.out}")
    if not report.get("success"):
        return EXIT_INPUT
    if config.strict and batch["n_instances"] == 0:
        return EXIT_EMPTY
    return EXIT_OK


def synth_command(args: argparse.Namespace) -> int:
    """Generate a synthetic dataset with ground truth."""
    overrides = {"seed": args.seed}
    try:
        if args.config:
            spec = load_scenario_spec(args.config, **overrides)
        else:
            spec = ScenarioSpec(**{k: v for k, v in overrides.items() if v is not None})
    except ConfigError as e:
        print(f"✗ {e}")
        return EXIT_CONFIG

    out_dir = Path(args.out)
    try:
        if args.instances is not None:
            dataset, truths = generate_batch(spec, args.instances)
        else:
            baseline = generate_platoon(spec)
            dataset, truth = inject_lane_change(baseline, spec)
            truths = [truth]
    except ScenarioError as e:
        print(f"✗ Scenario cannot be realized: {e}")
        return EXIT_CONFIG

    data_path = write_dataset(dataset, out_dir / "trajectories.csv")
    truth_path = write_ground_truth(truths, out_dir / "ground_truth.json")
    (out_dir / "scenario.cfg").write_text(dump_key_value(spec), encoding="utf-8")

    result = {
        "success": True,
        "n_vehicles": len(dataset),
        "n_scenarios": len(truths),
        "dataset": str(data_path),
        "ground_truth": str(truth_path),
    }
    _print_result(args, result, f"Generated {len(truths)} scenario(s), {len(dataset)} vehicles in {out_dir}")
    return EXIT_OK


def report_command(args: argparse.Namespace) -> int:
    """Re-emit reports from stored per-instance results."""
    config = _run_config(args)
    batch = load_results(args.input)
    if not batch.get("success"):
        _print_result(args, batch, "")
        return EXIT_INPUT
    result = emit_reports(batch, args.out, config)
    _print_result(args, result, f"Re-emitted reports for {result.get('n_instances')} instances in {args.out}")
    if not result.get("success"):
        return EXIT_INPUT
    if config.strict and batch["n_instances"] == 0:
        return EXIT_EMPTY
    return EXIT_OK


def info_command(args: argparse.Namespace) -> int:
    """Show version and runtime information."""
    versions = {}
    for package in RUNTIME_PACKAGES:
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = None
    info = {
        "success": True,
        "version": __version__,
        "python": sys.version.split()[0],
        "dependencies": versions,
        "defaults": RunConfig().model_dump(),
    }
    if args.json:
        print(json.dumps(info, indent=2))
        return EXIT_OK

    print("=== lane-change-impact - System Information ===")
    print(f"Version: {__version__}")
    print(f"Python: {info['python']}")
    for package, version in versions.items():
        print(f"  {package}: {version or 'not installed'}")
    return EXIT_OK


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--dt", type=float, help="TDB interval length (s)")
    parser.add_argument("--workers", type=int, help="Worker processes")
    parser.add_argument("--full", action="store_true", help="Include TDB/CTDB series and status strips")
    parser.add_argument("--strict", action="store_true", help="Exit with 3 when no instance is found")


def main(args: list[str] | None = None) -> int:
    """Main CLI entry point."""
    parser = argparse.ArgumentParser(
        description="lane-change-impact - Spatiotemporal impact of lane changes on upstream traffic",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s ingest --input ztd.csv --out normalized.csv   # Validate and normalize
  %(prog)s extract --input ztd.csv --out run/             # Instance manifest
  %(prog)s analyze --input ztd.csv --out run/ --dt 0.5   # Full pipeline
  %(prog)s synth --out synth/ --seed 7 --instances 20     # Synthetic batch
  %(prog)s report --input run/ --out run2/               # Re-emit reports
  %(prog)s info                                           # Versions
        """,
    )

    # Global options
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose output")
    parser.add_argument("--json", action="store_true", help="Output results as JSON")

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    ingest_parser = subparsers.add_parser("ingest", help="Validate and normalize a trajectory file")
    ingest_parser.add_argument("--input", required=True, help="Trajectory CSV")
    ingest_parser.add_argument("--out", help="Write the normalized CSV here")
    _add_run_options(ingest_parser)
    ingest_parser.set_defaults(func=ingest_command)

    extract_parser = subparsers.add_parser("extract", help="Extract lane-change instances")
    extract_parser.add_argument("--input", required=True, help="Trajectory CSV")
    extract_parser.add_argument("--out", required=True, help="Output directory")
    _add_run_options(extract_parser)
    extract_parser.set_defaults(func=extract_command)

    analyze_parser = subparsers.add_parser("analyze", help="Run the full pipeline")
    analyze_parser.add_argument("--input", required=True, help="Trajectory CSV")
    analyze_parser.add_argument("--out", required=True, help="Output directory")
    _add_run_options(analyze_parser)
    analyze_parser.set_defaults(func=analyze_command)

    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic scenario dataset")
    synth_parser.add_argument("--out", required=True, help="Output directory")
    synth_parser.add_argument("--config", help="Scenario spec (key = value)")
    synth_parser.add_argument("--seed", type=int, help="Random seed")
    synth_parser.add_argument("--instances", type=int, help="Number of scenarios in one dataset")
    synth_parser.set_defaults(func=synth_command)

    report_parser = subparsers.add_parser("report", help="Re-emit reports from stored results")
    report_parser.add_argument("--input", required=True, help="Directory written by analyze")
    report_parser.add_argument("--out", required=True, help="Output directory")
    _add_run_options(report_parser)
    report_parser.set_defaults(func=report_command)

    info_parser = subparsers.add_parser("info", help="Show version information")
    info_parser.set_defaults(func=info_command)

    parsed_args = parser.parse_args(args)

    logging.basicConfig(
        level=logging.INFO if parsed_args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )

    if not hasattr(parsed_args, "func"):
        parser.print_help()
        return 1

    try:
        return parsed_args.func(parsed_args)
    except ConfigError as e:
        print(f"✗ {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
