"""Stable hashing, seed derivation and exact-rational helpers."""

from __future__ import annotations

import hashlib
import json
import random
from enum import Enum
from fractions import Fraction
from typing import Any

# Scores produced from digests live on this grid.
SCORE_RESOLUTION = 1_000_000


def _json_default(obj: Any) -> Any:
    if isinstance(obj, Fraction):
        return frac_str(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, default=_json_default)


def dump_line(obj: Any) -> str:
    """One JSON line with insertion-ordered keys (field order is part of the format)."""
    return json.dumps(obj, ensure_ascii=False, default=_json_default)


def digest(*parts: Any) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(canonical_json(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


def derive_seed(seed: int, *tags: Any) -> int:
    # Never use built-in hash(): it is salted per process.
    return int(digest(int(seed), *tags)[:16], 16)


def derive_rng(seed: int, *tags: Any) -> random.Random:
    return random.Random(derive_seed(seed, *tags))


def unit_fraction(hexdigest: str) -> Fraction:
    """Map a hex digest onto the rational grid {0, 1/R, ..., 1}."""
    return Fraction(int(hexdigest[:16], 16) % (SCORE_RESOLUTION + 1), SCORE_RESOLUTION)


def frac_str(value: Fraction) -> str:
    return str(Fraction(value))


def to_fraction(value: Any) -> Fraction:
    """Parse ``"7/10"``, ``"0.7"``, ``0.7`` or ``7`` into an exact Fraction.

    Floats go through their shortest repr so ``0.7`` becomes ``7/10``.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a rational")
