#!/usr/bin/env python3
"""
Entry point for ``python -m lane_change_impact`` and the console script.

Maps uncaught package errors to the documented exit codes.
"""

import sys

from .cli import EXIT_CONFIG, EXIT_INPUT, main
from .exceptions import ConfigError, IngestError, LaneChangeImpactError


def main_entry(args: list[str] | None = None) -> int:
    try:
        return main(args)
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        return 130
    except ConfigError as e:
        print(f"Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, FileNotFoundError) as e:
        print(f"Input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except LaneChangeImpactError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main_entry())
