"""
Run configuration.

Config files are plain text, one ``key = value`` per line, ``#`` starts a
comment. Keys are exactly the :class:`RunConfig` field names; list values
are comma separated.

Example:
    >>> from lane_change_impact.config import load_config
    >>> config = load_config("run.cfg", dt=0.5, workers=4)
    >>> config.ingest.speed_unit
    'kmh'
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
)

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

SAMPLE_DT = 0.1
"""Nominal sampling step of trajectory data (seconds)."""


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _none_if_blank(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
        return None
    return value


def _split_pairs(value: Any) -> Any:
    if isinstance(value, str):
        return [tuple(part.split(":", 1)) for part in _split_list(value)]
    return value


LaneList = Annotated[list[int], BeforeValidator(_split_list)]
PairList = Annotated[list[tuple[float, float]], BeforeValidator(_split_pairs)]
OptionalFloat = Annotated[float | None, BeforeValidator(_none_if_blank)]


class IngestConfig(BaseModel):
    """Schema and unit flags for reading trajectory CSV files."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    speed_unit: Literal["kmh", "mps"] = Field(
        default="mps", description="Unit of the speed column"
    )
    kilopost_unit: Literal["m", "km"] = Field(
        default="m", description="Unit of the kilopost column"
    )
    datetime_format: Literal["iso", "epoch_ms"] = Field(
        default="iso", description="ISO-8601 with milliseconds or epoch milliseconds"
    )
    kilopost_origin: OptionalFloat = Field(
        default=None,
        description="Kilopost (meters) mapped to x = 0; defaults to the largest kilopost",
    )
    max_gap: float = Field(
        default=0.5, gt=0, description="Longest gap (s) filled by interpolation"
    )


class RunConfig(BaseModel):
    """All tunables of an analysis run."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # ---- Judgment ----
    dt: float = Field(default=0.5, gt=0, description="TDB interval length (s)")
    min_nf: int = Field(
        default=10, gt=0, description="Minimum pre-demarcation intervals per follower"
    )
    follower_cap: int = Field(default=10, gt=0, description="Followers per lane")

    # ---- Extraction ----
    window_t: float = Field(default=50.0, gt=0, description="Half time window (s)")
    window_x: float = Field(default=500.0, gt=0, description="Half space window (m)")
    eps_lat: float = Field(
        default=0.1, gt=0, description="Dead-band for lateral monotonicity (m)"
    )
    ramp_lanes: LaneList = Field(default_factory=lambda: [3])
    centerline_lane: int = Field(default=1, description="Lane whose centerline anchors lateral offsets")
    centerline_bin: float = Field(default=10.0, gt=0, description="Centerline bin width (m)")
    passing_side: Literal["left", "right"] = Field(
        default="right", description="Side of the passing lane relative to travel"
    )

    # ---- Trajectory ----
    smoothing_window: float = Field(
        default=1.0, ge=SAMPLE_DT, description="Centered moving-average window (s); an even sample count is widened by one sample"
    )
    speed_unit: Literal["kmh", "mps"] = "mps"
    kilopost_unit: Literal["m", "km"] = "m"
    datetime_format: Literal["iso", "epoch_ms"] = "iso"
    kilopost_origin: OptionalFloat = None
    max_gap: float = Field(default=0.5, gt=0)

    # ---- Calibration ----
    min_calibration_span: float = Field(
        default=5.0, gt=0, description="Shortest usable calibration range (s)"
    )

    # ---- Labels ----
    traffic_state_speed: float = Field(
        default=16.7, gt=0, description="Mean SV speed (m/s) separating free flow from congestion"
    )

    # ---- Reports ----
    workers: int = Field(default=1, gt=0, description="Worker processes")
    histogram_duration_bin: float = Field(default=1.0, gt=0)
    histogram_count_bin: float = Field(default=1.0, gt=0)
    histogram_magnitude_bin: float = Field(default=1.0, gt=0)
    charts: bool = False
    full: bool = False
    strict: bool = False

    @field_validator("dt")
    @classmethod
    def _dt_on_grid(cls, value: float) -> float:
        steps = value / SAMPLE_DT
        if steps < 1 - 1e-9 or not math.isclose(steps, round(steps), abs_tol=1e-9):
            raise ValueError(f"dt must be a multiple of {SAMPLE_DT} s, got {value}")
        return value

    @property
    def ingest(self) -> IngestConfig:
        return IngestConfig(
            speed_unit=self.speed_unit,
            kilopost_unit=self.kilopost_unit,
            datetime_format=self.datetime_format,
            kilopost_origin=self.kilopost_origin,
            max_gap=self.max_gap,
        )


# ---- Key = value files ----


def read_key_value_file(path: str | Path) -> dict[str, str]:
    """Read a ``key = value`` file into a dict of raw strings."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e

    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def dump_key_value(model: BaseModel) -> str:
    """Render a config model back to ``key = value`` text."""
    lines = []
    for key, value in model.model_dump().items():
        if value is None:
            text = "none"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            text = ", ".join(_format_item(item) for item in value)
        else:
            text = _format_item(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def _format_item(item: Any) -> str:
    if isinstance(item, (list, tuple)):
        return ":".join(str(part) for part in item)
    return str(item)


def build_model(model_cls: type[BaseModel], values: dict[str, Any], source: str) -> Any:
    """Validate raw values into ``model_cls``, mapping failures to ConfigError."""
    try:
        return model_cls(**values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '?'}: {err['msg']}"
            for err in e.errors()
        )
        raise ConfigError(f"Invalid configuration in {source}: {problems}") from e


def load_config(path: str | Path | None = None, **overrides: Any) -> RunConfig:
    """Load a RunConfig from an optional file, then apply non-None overrides."""
    values: dict[str, Any] = dict(read_key_value_file(path)) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    config = build_model(RunConfig, values, str(path) if path else "arguments")
    logger.debug(f"Loaded configuration: {config.model_dump()}")
    return config
