"""Canonical hashing for configs, report bodies and seed derivation.

Reports embed a digest of the configuration that produced them, and the
determinism check compares digests of CSV bodies across runs. Both rely on
a canonical JSON form so the same values always hash the same way,
independent of dict ordering or numpy scalar types.

Restart and instance seeds are derived from a master seed by hashing
``{master}:{label}:{index}`` so that running restarts concurrently never
changes which random stream a restart sees.
"""

from __future__ import annotations
from typing import Any
import hashlib
import json
import math

import numpy as np

from .errors import InvariantViolationError


def canonical_scalar(v: Any) -> bool | int | float | str:
    """Canonicalize a scalar value for hashing.

    Numpy scalars are unwrapped. Non-finite floats are rejected: nothing
    that reaches a report may be NaN or infinite.
    """
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return v
    elif isinstance(v, int):
        return v
    elif isinstance(v, float):
        if not math.isfinite(v):
            raise InvariantViolationError(f"Non-finite float not allowed: {v}")
        return v + 0.0  # -0.0 → 0.0
    elif isinstance(v, str):
        return v
    else:
        raise InvariantViolationError(
            f"Unsupported type for canonicalization: {type(v).__name__}"
        )


def normalize_for_json(obj: Any) -> Any:
    """Recursively normalize an object for canonical JSON.

    - Scalars are canonicalized
    - Dicts have sorted string keys
    - Lists, tuples and 1-d arrays become lists
    - None is preserved
    """
    from collections.abc import Mapping

    if obj is None:
        return None
    elif isinstance(obj, (bool, int, float, str, np.generic)):
        return canonical_scalar(obj)
    elif isinstance(obj, Mapping):
        return {str(k): normalize_for_json(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    elif isinstance(obj, (list, tuple, np.ndarray)):
        return [normalize_for_json(item) for item in obj]
    else:
        raise InvariantViolationError(
            f"Unsupported type in canonical JSON: {type(obj).__name__}"
        )


def canonical_json(obj: Any) -> bytes:
    """Convert an object to canonical JSON bytes (sorted keys, no spaces)."""
    normalized = normalize_for_json(obj)
    json_str = json.dumps(
        normalized,
        sort_keys=True,
        separators=(",", ":"),
        ensure_ascii=False
    )
    return json_str.encode("utf-8")


def digest_bytes(data: bytes) -> str:
    """Compute BLAKE2b-256 hash of bytes as a 64-character hex string."""
    return hashlib.blake2b(data, digest_size=32).hexdigest()


def digest_text(text: str) -> str:
    """Digest of a UTF-8 text body."""
    return digest_bytes(text.encode("utf-8"))


def derive_seed(master_seed: int, label: str, index: int) -> int:
    """Derive a child seed in uint32 range from a master seed.

    Args:
        master_seed: Seed of the whole run
        label: Stream name, e.g. "restart" or "corpus"
        index: Position within the stream (0-based)

    Returns:
        Seed value in uint32 range
    """
    content = f"lab:seed:v1|{master_seed}:{label}:{index}"
    hash_bytes = hashlib.blake2b(content.encode(), digest_size=8).digest()
    return int.from_bytes(hash_bytes, "big") % (2**32)


def make_rng(master_seed: int, label: str, index: int) -> np.random.Generator:
    """Independent PCG64 generator for one (label, index) stream."""
    return np.random.default_rng(derive_seed(master_seed, label, index))


__all__ = [
    "canonical_scalar",
    "normalize_for_json",
    "canonical_json",
    "digest_bytes",
    "digest_text",
    "derive_seed",
    "make_rng",
]
