"""Flag grammars for the command line.

Depth ranges and node lists are small string grammars that several
subcommands share:

- depth range: ``'4:12'`` (inclusive, step 1), ``'4:12:2'`` (with step) or
  ``'4,6,8'`` (explicit list)
- node list: ``'0,3,5'`` (comma-separated node ids, no duplicates)
"""

import re
from typing import List

# Conservative regex patterns for validation
_RANGE_RE = re.compile(r"^(\d+):(\d+)(?::(\d+))?$")
_LIST_RE = re.compile(r"^\d+(?:,\d+)*$")


class FlagFormatError(ValueError):
    """Raised when a flag value does not match its grammar."""
    pass


def parse_depth_range(text: str) -> List[int]:
    """Parse a depth range into a strictly increasing list.

    Args:
        text: '4:12', '4:12:2' or '4,6,8'

    Returns:
        List of depths

    Raises:
        FlagFormatError: If the grammar or ordering is invalid
    """
    s = text.strip()
    m = _RANGE_RE.match(s)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        step = int(m.group(3)) if m.group(3) else 1
        if step < 1:
            raise FlagFormatError(f"Depth range step must be positive: {text}")
        if hi < lo:
            raise FlagFormatError(f"Depth range is empty: {text}")
        depths = list(range(lo, hi + 1, step))
    elif _LIST_RE.match(s):
        depths = [int(x) for x in s.split(",")]
        if any(b <= a for a, b in zip(depths, depths[1:])):
            raise FlagFormatError(f"Depth list must be strictly increasing: {text}")
    else:
        raise FlagFormatError(f"Invalid depth range format: {text}")

    if depths[0] < 2:
        raise FlagFormatError(f"Depths must be at least 2: {text}")
    return depths


def parse_node_list(text: str) -> List[int]:
    """Parse a comma-separated list of node ids.

    Raises:
        FlagFormatError: If malformed or a node is repeated
    """
    s = text.strip()
    if not _LIST_RE.match(s):
        raise FlagFormatError(f"Invalid node list format: {text}")
    nodes = [int(x) for x in s.split(",")]
    if len(set(nodes)) != len(nodes):
        raise FlagFormatError(f"Node list contains duplicates: {text}")
    return nodes


def format_node_list(nodes) -> str:
    """Inverse of parse_node_list."""
    return ",".join(str(int(n)) for n in nodes)


__all__ = [
    "FlagFormatError",
    "parse_depth_range",
    "parse_node_list",
    "format_node_list",
]
