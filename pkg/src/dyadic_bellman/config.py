"""Lab configuration.

A LabConfig fixes every tolerance, the default exponent, the master seed
and the acceptance-suite scale. It is fully serializable: each output file
carries its digest in the header so a CSV can always be traced back to the
run that produced it.
"""

from __future__ import annotations
from pathlib import Path
from typing import List, Optional
import logging
import os

import yaml
from pydantic import BaseModel, Field, field_validator, model_validator

from .hashing import canonical_json, digest_bytes
from .version import FORMAT_VERSION

logger = logging.getLogger(__name__)

# Defaults shared by every module when no config is threaded through.
TAU_MEAS = 1e-12  # relative, measure sums
TAU_NUM = 1e-9    # relative, integral comparisons and slacks
TAU_ROOT = 1e-13  # absolute, |H_p(omega_p(x)) - x|

THREADS_ENV = "LAB_THREADS"


def threads_from_env() -> int:
    """Worker cap from LAB_THREADS (1 when unset or invalid)."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logger.warning("Ignoring non-integer %s=%r", THREADS_ENV, raw)
        return 1
    return max(1, value)


class Tolerances(BaseModel):
    """Numerical tolerances used across the lab."""

    tau_meas: float = TAU_MEAS
    tau_num: float = TAU_NUM
    tau_root: float = TAU_ROOT

    @field_validator("tau_meas", "tau_num", "tau_root")
    def validate_nonnegative(cls, v):
        if v < 0:
            raise ValueError("tolerances must be non-negative")
        return v


class LabConfig(BaseModel):
    """Complete configuration for a lab run.

    The suite-scale fields only affect run_full_suite; single commands use
    the tolerances, default_p, seed and threads.
    """

    tolerances: Tolerances = Field(default_factory=Tolerances)
    default_p: float = 2.0
    seed: int = 7
    output_dir: str = "lab-output"
    format_version: int = FORMAT_VERSION
    threads: int = Field(default_factory=threads_from_env)

    # Acceptance-suite scale
    corpus_size: int = 1000
    inequality_instances: int = 500
    sweep_depths: List[int] = Field(default_factory=lambda: list(range(4, 13)))
    sweep_restarts: int = 8
    max_steps: int = 300
    negative_control_depths: List[int] = Field(default_factory=lambda: [4, 8, 12, 16, 20, 24])

    @field_validator("default_p")
    def validate_p(cls, v):
        if not (1.0 < v <= 64.0):
            raise ValueError("default_p must lie in (1, 64]")
        return v

    @field_validator("threads", "sweep_restarts", "max_steps")
    def validate_positive(cls, v):
        if v < 1:
            raise ValueError("must be at least 1")
        return v

    @field_validator("corpus_size", "inequality_instances")
    def validate_count(cls, v):
        if v < 0:
            raise ValueError("instance counts must be non-negative")
        return v

    @field_validator("sweep_depths", "negative_control_depths")
    def validate_depths(cls, v):
        if not v:
            raise ValueError("depth list cannot be empty")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("depths must be strictly increasing")
        if v[0] < 2:
            raise ValueError("depths must be at least 2")
        return v

    @model_validator(mode="after")
    def validate_format(self):
        if self.format_version != FORMAT_VERSION:
            raise ValueError(
                f"format_version {self.format_version} is not supported "
                f"(this build writes version {FORMAT_VERSION})"
            )
        return self

    # Loading and saving

    @classmethod
    def load(cls, path: Optional[Path] = None) -> "LabConfig":
        """Load a config file, or the defaults when no path is given."""
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        return cls.from_yaml(path)

    @classmethod
    def from_yaml(cls, path: Path) -> "LabConfig":
        """Load from a specific YAML file."""
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        logger.debug("Loaded config from %s", path)
        return cls(**data)

    @classmethod
    def from_yaml_string(cls, yaml_str: str) -> "LabConfig":
        """Load from a YAML string."""
        data = yaml.safe_load(yaml_str) or {}
        return cls(**data)

    def to_yaml(self, path: Path) -> None:
        """Save to a specific YAML file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self.model_dump(), f, default_flow_style=False, sort_keys=False)

    def to_yaml_string(self) -> str:
        """Export to a YAML string."""
        return yaml.safe_dump(self.model_dump(), default_flow_style=False, sort_keys=False)

    def digest(self) -> str:
        """BLAKE2b-256 of the canonical JSON form.

        threads is excluded: the worker count never changes results.
        """
        data = self.model_dump(exclude={"threads"})
        return digest_bytes(b"lab:config:v1|" + canonical_json(data))


__all__ = [
    "TAU_MEAS",
    "TAU_NUM",
    "TAU_ROOT",
    "THREADS_ENV",
    "threads_from_env",
    "Tolerances",
    "LabConfig",
]
