"""
lane-change-impact: spatiotemporal impact of single lane changes

Measures how one discretionary lane change disturbs the vehicles upstream
of it in both the target and the original lane:

1. **Extraction**: lane-change instances, start times and neighbours
2. **Newell calibration**: per-follower reaction time and spacing, giving
   the time at which the disturbance reaches each follower
3. **Impact judgment**: travel distance bias, threshold bands and run
   lengths decide which followers were affected, for how long and by how much
4. **Synthetic oracle**: platoons with injected lane changes and known
   ground truth

Basic Usage:
    >>> from lane_change_impact import ImpactAnalyzer, RunConfig
    >>> analyzer = ImpactAnalyzer(RunConfig(dt=0.5))
    >>> batch = analyzer.run_batch("trajectories.csv")
    >>> print(batch["n_instances"], batch["rejection_counts"])
"""

from .__version__ import __version__
from .config import RunConfig, load_config
from .ImpactAnalyzer import ImpactAnalyzer
from .synth import ScenarioSpec, generate_platoon, inject_lane_change
from .trajectory import Dataset, VehicleTrack, parse_dataset

__all__ = [
    "__version__",
    "Dataset",
    "ImpactAnalyzer",
    "RunConfig",
    "ScenarioSpec",
    "VehicleTrack",
    "generate_platoon",
    "inject_lane_change",
    "load_config",
    "parse_dataset",
]
