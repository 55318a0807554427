"""Lab and output format versions."""

LAB_VERSION = "0.1.0"

# Bumped explicitly whenever a CSV column set or order changes.
FORMAT_VERSION = 1

__all__ = ["LAB_VERSION", "FORMAT_VERSION"]
