"""Halton low-discrepancy sequence over the unit hypercube."""

from __future__ import annotations

import numpy as np

PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53,
    59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131,
)


def radical_inverse(index: int, base: int) -> float:
    """Mirror the base-``base`` digits of ``index`` about the radix point.

    Accumulates an exact integer numerator/denominator so the only rounding
    is the final division.
    """
    if index < 0:
        raise ValueError("index must be non-negative")
    num, den = 0, 1
    while index > 0:
        index, digit = divmod(index, base)
        num = num * base + digit
        den *= base
    return num / den


def halton_point(index: int, dim: int) -> np.ndarray:
    if index < 1:
        raise ValueError("Halton index must be >= 1")
    if dim < 1 or dim > len(PRIMES):
        raise ValueError(f"dim must be in [1, {len(PRIMES)}], got {dim}")
    return np.array([radical_inverse(index, PRIMES[k]) for k in range(dim)])


def halton_points(n: int, dim: int, start: int = 1) -> np.ndarray:
    """Rows are Halton points ``start, start + 1, ..., start + n - 1``."""
    if dim < 1 or dim > len(PRIMES):
        raise ValueError(f"dim must be in [1, {len(PRIMES)}], got {dim}")
    if start < 1:
        raise ValueError("Halton index must be >= 1")
    out = np.zeros((n, dim))
    idx0 = np.arange(start, start + n, dtype=np.int64)
    for k in range(dim):
        base = PRIMES[k]
        idx = idx0.copy()
        num = np.zeros(n, dtype=np.int64)
        den = np.ones(n, dtype=np.int64)
        while np.any(idx > 0):
            digit = idx % base
            live = idx > 0
            num = np.where(live, num * base + digit, num)
            den = np.where(live, den * base, den)
            idx //= base
        out[:, k] = num / den
    return out
