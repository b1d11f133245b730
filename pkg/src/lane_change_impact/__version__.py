"""Version information for lane-change-impact."""

__version__ = "0.1.0"
