"""bfloat16 storage conversion: float32 <-> 16-bit truncated patterns.

A bf16 value is the upper half of the IEEE-754 binary32 bit pattern (same
sign and 8-bit exponent, 7 stored mantissa bits). Narrowing rounds to
nearest-even on the discarded 16 bits; widening appends 16 zero bits and is
exact. All arithmetic elsewhere in the package happens in float32; these
conversions are used only when reading/writing persistent buffer storage.
"""

from __future__ import annotations

import numpy as np

# Relative rounding error bound for finite values whose rounding stays
# finite: half an ulp of the 8-bit significand.
EPS = 2.0 ** -8


def bf16_narrow(x) -> np.ndarray:
    """float32 -> uint16 bf16 patterns, round-to-nearest-even.

    NaN inputs keep their sign and payload top bits and stay NaN (the
    quiet bit is forced so a payload of all-zero discarded bits cannot
    turn a NaN into an infinity). Works on scalars and arrays.
    """
    f = np.asarray(x, dtype=np.float32)
    bits = f.view(np.uint32).astype(np.uint64)
    # round-to-nearest-even: add 0x7FFF plus the lowest kept bit, truncate
    rounded = (bits + 0x7FFF + ((bits >> 16) & 1)) >> 16
    nan_mask = np.isnan(f)
    if np.any(nan_mask):
        quiet = (bits >> 16) | 0x0040
        rounded = np.where(nan_mask, quiet, rounded)
    return rounded.astype(np.uint16)


def bf16_widen(b) -> np.ndarray:
    """uint16 bf16 patterns -> float32 (exact)."""
    u = np.asarray(b, dtype=np.uint16)
    return (u.astype(np.uint32) << np.uint32(16)).view(np.float32)


def bf16_round(x) -> np.ndarray:
    """float32 -> float32 after a storage round-trip through bf16."""
    return bf16_widen(bf16_narrow(x))
