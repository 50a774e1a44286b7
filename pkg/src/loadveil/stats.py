"""Spearman rank correlation and its two-sided significance test."""

from __future__ import annotations

from functools import lru_cache
from itertools import permutations
from math import factorial

import numpy as np
from scipy.stats import rankdata
from scipy.stats import t as student_t

from .profiles import InvalidInputError

EXACT_BELOW = 10  # use the exact permutation null for n < 10


def _ranks(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError(f"length mismatch: {a.shape} vs {b.shape}")
    return rankdata(a), rankdata(b)


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0:
        return 0.0
    return float(np.clip(np.dot(a, b) / den, -1.0, 1.0))


def spearman(a, b) -> float:
    """Pearson correlation of average ranks; 0 when either side is constant."""
    ra, rb = _ranks(a, b)
    if ra.size < 3:
        raise InvalidInputError(f"need at least 3 observations, got {ra.size}")
    return _pearson(ra, rb)


@lru_cache(maxsize=None)
def _all_permutations(n: int) -> np.ndarray:
    return np.array(list(permutations(range(n))), dtype=np.int8)


def spearman_pvalue(a, b) -> float:
    """Two-sided p-value of Spearman's rho under independence.

    Exact permutation null for n < 10, otherwise the t approximation with
    n - 2 degrees of freedom. A perfect (untied) correlation gets 2/n!.
    """
    ra, rb = _ranks(a, b)
    n = ra.size
    if n < 4:
        raise InvalidInputError(f"need at least 4 observations, got {n}")
    rho = _pearson(ra, rb)
    if rho == 0.0:
        return 1.0
    if abs(rho) >= 1.0 - 1e-12 and np.unique(ra).size == n:
        return 2.0 / factorial(n)
    if n < EXACT_BELOW:
        ca = ra - ra.mean()
        cb = rb - rb.mean()
        perms = cb[_all_permutations(n)]
        den = np.sqrt(np.dot(ca, ca) * np.dot(cb, cb))
        null = perms @ ca / den
        return float(np.mean(np.abs(null) >= abs(rho) - 1e-12))
    tstat = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * student_t.sf(abs(tstat), n - 2)))
