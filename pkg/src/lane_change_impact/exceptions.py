"""Exception hierarchy for lane-change-impact."""


class LaneChangeImpactError(Exception):
    """Base class for all package errors."""


class IngestError(LaneChangeImpactError):
    """Raised when a trajectory file cannot be parsed or is inconsistent."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(LaneChangeImpactError):
    """Raised for unreadable config files or invalid config values."""


class CenterlineError(LaneChangeImpactError):
    """Raised when a lane centerline cannot be built or is degenerate."""


class CalibrationError(LaneChangeImpactError):
    """Raised when a car-following calibration cannot be attempted."""


class CoverageGapError(LaneChangeImpactError):
    """Raised when a speed series does not cover a required interval."""


class ScenarioError(LaneChangeImpactError):
    """Raised for synthetic scenario specs that cannot be realized."""


class InstanceRejected(LaneChangeImpactError):
    """A lane-change candidate failed one of the extraction criteria."""

    def __init__(self, criterion: str, detail: str = ""):
        self.criterion = criterion
        self.detail = detail
        super().__init__(f"{criterion}: {detail}" if detail else criterion)
