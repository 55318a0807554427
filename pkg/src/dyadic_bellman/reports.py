"""Report artifacts: CSV tables and run reports.

Every table the lab writes is a CSV body preceded by ``#``-prefixed header
lines. Timestamps live only in the header, so two runs with the same config
and seed produce byte-identical bodies; the body checksum is what the
determinism check compares.
"""

from __future__ import annotations
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Tuple
import csv
import io
import logging
import math

import numpy as np
import yaml

from .errors import InvariantViolationError
from .hashing import digest_text
from .version import FORMAT_VERSION, LAB_VERSION

logger = logging.getLogger(__name__)


def format_cell(value: Any) -> str:
    """Render one CSV cell.

    Floats use 17 significant digits so bodies round-trip exactly; non-finite
    values are rejected.
    """
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise InvariantViolationError(f"Non-finite value in report: {value}")
        return format(value + 0.0, ".17g")
    if value is None:
        return ""
    return str(value)


@dataclass(frozen=True)
class CsvTable:
    """A frozen table with fixed column order.

    Attributes:
        columns: Column names, frozen per format version
        rows: Row tuples, one cell per column

    Invariants:
        - every row has exactly len(columns) cells
        - every numeric cell is finite
    """
    columns: Tuple[str, ...]
    rows: Tuple[Tuple[Any, ...], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        if not self.columns:
            raise InvariantViolationError("table must have at least one column")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise InvariantViolationError(
                    f"row {i} has {len(row)} cells, expected {len(self.columns)}"
                )

    @classmethod
    def from_records(cls, columns: Sequence[str], records: Sequence[Mapping[str, Any]]) -> "CsvTable":
        """Build a table from dict records, picking columns in order."""
        return cls(tuple(columns), tuple(tuple(rec[c] for c in columns) for rec in records))

    def body(self) -> str:
        """CSV body (column line plus rows), newline-terminated."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_cell(v) for v in row])
        return buf.getvalue()

    @property
    def checksum(self) -> str:
        """BLAKE2b-256 of the body."""
        return digest_text(self.body())

    def column(self, name: str) -> list:
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def render(self, command: str, config_digest: str,
               generated_at: Optional[str] = None) -> str:
        """Full document: header lines then the body."""
        header = render_header(command, config_digest, generated_at)
        return header + self.body()

    def write(self, path: Path, command: str, config_digest: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(command, config_digest))
        logger.debug("Wrote %d rows to %s", len(self.rows), path)
        return path


def render_header(command: str, config_digest: str,
                  generated_at: Optional[str] = None) -> str:
    if generated_at is None:
        generated_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return (
        f"# format_version: {FORMAT_VERSION}\n"
        f"# lab_version: {LAB_VERSION}\n"
        f"# command: {command}\n"
        f"# config_digest: {config_digest}\n"
        f"# generated_at: {generated_at}\n"
    )


def split_document(text: str) -> Tuple[dict, str]:
    """Split a rendered document into (header fields, body)."""
    header = {}
    lines = text.splitlines(keepends=True)
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].strip().partition(":")
        header[key.strip()] = value.strip()
        i += 1
    return header, "".join(lines[i:])


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check.

    Attributes:
        name: Check identifier, e.g. "bellman_bound"
        passed: Whether the check held
        value: The measured quantity (usually a minimum slack)
        detail: Short human-readable note
    """
    name: str
    passed: bool
    value: float = 0.0
    detail: str = ""

    def __post_init__(self):
        if not self.name:
            raise InvariantViolationError("check name must be non-empty")
        v = float(self.value)
        if not math.isfinite(v):
            raise InvariantViolationError(f"check {self.name!r} has non-finite value {v}")
        object.__setattr__(self, "value", v)
        object.__setattr__(self, "passed", bool(self.passed))

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "detail": self.detail}


@dataclass(frozen=True)
class RunReport:
    """Consolidated result of a command or of the acceptance suite.

    Attributes:
        command: The command line or suite name
        config: Snapshot of the LabConfig that produced it
        checks: Per-check results in execution order
        duration_s: Wall-clock duration
        tables: Named CSV tables produced along the way
    """
    command: str
    config: Mapping[str, Any]
    checks: Tuple[CheckResult, ...] = ()
    duration_s: float = 0.0
    tables: Mapping[str, CsvTable] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "checks", tuple(self.checks))
        object.__setattr__(self, "tables", dict(self.tables))
        for check in self.checks:
            if not isinstance(check, CheckResult):
                raise InvariantViolationError(
                    f"checks must be CheckResult, got {type(check).__name__}"
                )

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failures(self) -> Tuple[CheckResult, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def summary(self) -> str:
        """One-line summary for the terminal."""
        n_ok = sum(1 for c in self.checks if c.passed)
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.command}: {n_ok}/{len(self.checks)} checks passed in {self.duration_s:.1f}s"

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "config": dict(self.config),
            "passed": self.passed,
            "duration_s": float(self.duration_s),
            "checks": [c.to_dict() for c in self.checks],
            "tables": {name: t.checksum for name, t in sorted(self.tables.items())},
        }

    def to_yaml_string(self) -> str:
        return yaml.safe_dump(self.to_dict(), default_flow_style=False, sort_keys=False)

    def write(self, out_dir: Path, config_digest: str) -> Path:
        """Write report.yaml plus one CSV per table into out_dir."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, table in sorted(self.tables.items()):
            table.write(out_dir / f"{name}.csv", self.command, config_digest)
        path = out_dir / "report.yaml"
        path.write_text(self.to_yaml_string())
        logger.debug("Wrote report to %s", path)
        return path


__all__ = [
    "format_cell",
    "CsvTable",
    "render_header",
    "split_document",
    "CheckResult",
    "RunReport",
]
