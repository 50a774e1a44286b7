"""Histogram (plug-in) and nearest-neighbour information estimators.

Conventions: histogram ranges are data driven unless given explicitly. Joint
estimators (MI, conditional entropy) bin each axis on its own range, so the
marginal entropy of ``xs`` does not depend on ``ys``. Divergences compare two
samples of the same quantity and bin both on their pooled range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma
from sklearn.base import BaseEstimator

from .profiles import InvalidInputError

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class BinSpec:
    """Bin count per axis and an optional explicit ``(lo, hi)`` range.

    ``range`` may be a single pair applied to every axis or one pair per axis.
    """

    h: int = 20
    range: tuple | None = None

    def __post_init__(self):
        if int(self.h) < 2:
            raise InvalidInputError(f"bin count must be >= 2, got {self.h}")
        object.__setattr__(self, "h", int(self.h))
        if self.range is not None:
            pairs = self.range if np.ndim(self.range) == 2 else [self.range]
            for lo, hi in pairs:
                if not lo < hi:
                    raise InvalidInputError(f"bin range must have lo < hi, got {(lo, hi)}")

    def axis_range(self, axis: int):
        if self.range is None:
            return None
        if np.ndim(self.range) == 2:
            return tuple(self.range[axis])
        return tuple(self.range)


@dataclass(frozen=True, eq=False)
class SamplePairs:
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        _check_pairs(xs, ys)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self):
        return self.xs.size


def as_binspec(bins) -> BinSpec:
    if isinstance(bins, BinSpec):
        return bins
    return BinSpec(int(bins))


def _check_sample(xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float).ravel()
    if xs.size < 2:
        raise InvalidInputError(f"need at least 2 samples, got {xs.size}")
    if not np.all(np.isfinite(xs)):
        raise InvalidInputError("samples must be finite")
    return xs


def _check_pairs(xs, ys):
    xs = _check_sample(xs)
    ys = _check_sample(ys)
    if xs.size != ys.size:
        raise InvalidInputError(f"length mismatch: {xs.size} vs {ys.size}")
    return xs, ys


def bin_indices(values, h: int, value_range=None) -> np.ndarray:
    """Integer bin index in ``[0, h)`` for each value; the top edge is closed.

    A degenerate data range puts every sample in bin 0.
    """
    values = np.asarray(values, dtype=float)
    if value_range is None:
        lo, hi = float(values.min()), float(values.max())
    else:
        lo, hi = value_range
    if hi <= lo:
        return np.zeros(values.size, dtype=np.int64)
    idx = np.floor((values - lo) * (h / (hi - lo))).astype(np.int64)
    return np.clip(idx, 0, h - 1)


def entropy_from_counts(counts, base=np.e) -> float:
    """Plug-in entropy of a count vector; empty cells contribute nothing."""
    c = np.sort(np.asarray(counts, dtype=float).ravel())
    c = c[c > 0]
    n = c.sum()
    if n == 0:
        return 0.0
    h = np.log(n) - np.dot(c, np.log(c)) / n
    return float(max(h, 0.0) / np.log(base))


def symbol_entropy(symbols, base=np.e) -> float:
    _, counts = np.unique(np.asarray(symbols), return_counts=True)
    return entropy_from_counts(counts, base)


def joint_symbol_entropy(a, b, base=np.e) -> float:
    _, a = np.unique(np.asarray(a), return_inverse=True)
    _, b = np.unique(np.asarray(b), return_inverse=True)
    width = int(b.max()) + 1 if b.size else 1
    return symbol_entropy(a.astype(np.int64) * width + b, base)


def symbol_mi(a, b, base=2.0) -> float:
    """Plug-in MI between two discrete label sequences."""
    return symbol_entropy(a, base) + symbol_entropy(b, base) - joint_symbol_entropy(a, b, base)


def hist_entropy(xs, bins=20, base=np.e) -> float:
    xs = _check_sample(xs)
    spec = as_binspec(bins)
    idx = bin_indices(xs, spec.h, spec.axis_range(0))
    return entropy_from_counts(np.bincount(idx, minlength=spec.h), base)


def _joint_bins(xs, ys, bins):
    xs, ys = _check_pairs(xs, ys)
    spec = as_binspec(bins)
    ix = bin_indices(xs, spec.h, spec.axis_range(0))
    iy = bin_indices(ys, spec.h, spec.axis_range(1))
    return ix, iy, spec.h


def _joint_entropies(ix, iy, h, base):
    hx = entropy_from_counts(np.bincount(ix, minlength=h), base)
    hy = entropy_from_counts(np.bincount(iy, minlength=h), base)
    hxy = entropy_from_counts(np.bincount(ix * h + iy, minlength=h * h), base)
    return hx, hy, hxy


def hist_mi(xs, ys, bins=20, base=2.0) -> float:
    """Plug-in mutual information ``H(X) + H(Y) - H(X, Y)`` on an h-by-h grid."""
    ix, iy, h = _joint_bins(xs, ys, bins)
    hx, hy, hxy = _joint_entropies(ix, iy, h, base)
    return hx + hy - hxy


def hist_conditional_entropy(xs, ys, bins=20, base=np.e) -> float:
    """Plug-in ``H(X | Y) = H(X, Y) - H(Y)``."""
    ix, iy, h = _joint_bins(xs, ys, bins)
    _, hy, hxy = _joint_entropies(ix, iy, h, base)
    return hxy - hy


def shared_histograms(xs, ys, bins=20) -> tuple[np.ndarray, np.ndarray]:
    """Mass vectors of both samples on their pooled (or explicit) range."""
    xs = _check_sample(xs)
    ys = _check_sample(ys)
    spec = as_binspec(bins)
    rng = spec.axis_range(0)
    if rng is None:
        rng = (min(xs.min(), ys.min()), max(xs.max(), ys.max()))
    p = np.bincount(bin_indices(xs, spec.h, rng), minlength=spec.h) / xs.size
    q = np.bincount(bin_indices(ys, spec.h, rng), minlength=spec.h) / ys.size
    return p, q


def kl_divergence(p, q, base=2.0) -> float:
    """``KL(p || q)`` for mass vectors; infinite when q misses p's support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])) / np.log(base))


def _smooth(p, n, h):
    eps = 1.0 / (n * h)
    return (p + eps) / (1.0 + h * eps)


def hist_kl(xs, ys, bins=20, base=2.0, smoothing=True) -> float:
    """``KL(p_x || p_y)`` on a shared grid, with additive smoothing by default."""
    p, q = shared_histograms(xs, ys, bins)
    if smoothing:
        h = p.size
        p = _smooth(p, np.size(xs), h)
        q = _smooth(q, np.size(ys), h)
    return kl_divergence(p, q, base)


def hist_k_divergence(xs, ys, bins=20, base=2.0) -> float:
    """``KL(p || (p + q) / 2)``; bounded by ``log 2``."""
    p, q = shared_histograms(xs, ys, bins)
    return kl_divergence(p, 0.5 * (p + q), base)


def hist_tvd(xs, ys, bins=20) -> float:
    p, q = shared_histograms(xs, ys, bins)
    return float(0.5 * np.abs(p - q).sum())


def _jitter(values, salt: int) -> np.ndarray:
    scale = np.max(np.abs(values))
    scale = scale if scale > 0 else 1.0
    noise = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(salt,))).uniform(
        -1.0, 1.0, values.size
    )
    return values + 1e-10 * scale * noise


def _has_ties(values) -> bool:
    s = np.sort(values)
    return bool(np.any(s[1:] == s[:-1]))


def _strict_counts(sorted_vals, centers, radius):
    lo = np.searchsorted(sorted_vals, centers - radius, side="right")
    hi = np.searchsorted(sorted_vals, centers + radius, side="left")
    return hi - lo - 1


def knn_mi(xs, ys, k: int = 2) -> float:
    """Kraskov-Stögbauer-Grassberger estimator (first variant), in nats.

    Max-norm distance to the k-th joint neighbour sets the radius; marginal
    neighbours are counted strictly inside it. Tied values get a
    deterministic perturbation of relative size 1e-10. The result may be
    slightly negative on independent data.
    """
    xs, ys = _check_pairs(xs, ys)
    k = int(k)
    n = xs.size
    if k < 1 or n <= k:
        raise InvalidInputError(f"need n > k >= 1, got n={n}, k={k}")
    if _has_ties(xs):
        xs = _jitter(xs, 1)
    if _has_ties(ys):
        ys = _jitter(ys, 2)
    pts = np.column_stack([xs, ys])
    dist, _ = cKDTree(pts).query(pts, k=k + 1, p=np.inf)
    eps = dist[:, k]
    nx = _strict_counts(np.sort(xs), xs, eps)
    ny = _strict_counts(np.sort(ys), ys, eps)
    return float(digamma(k) + digamma(n) - np.mean(digamma(nx + 1) + digamma(ny + 1)))


class MutualInfoEstimator(BaseEstimator):
    """Estimator-style wrapper: ``fit(x, y)`` stores the estimate in ``mi_``.

    ``method='hist'`` uses the plug-in estimator with ``bins``; ``method='knn'``
    uses KSG with ``n_neighbors``. ``mi_`` is in units of ``base``.
    """

    def __init__(self, method="hist", bins=20, n_neighbors=2, base=2.0):
        self.method = method
        self.bins = bins
        self.n_neighbors = n_neighbors
        self.base = base

    def fit(self, X, y):
        xs = np.asarray(X, dtype=float).ravel()
        ys = np.asarray(y, dtype=float).ravel()
        if self.method == "hist":
            self.mi_ = hist_mi(xs, ys, self.bins, self.base)
        elif self.method == "knn":
            self.mi_ = knn_mi(xs, ys, self.n_neighbors) / np.log(self.base)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        return self

    @property
    def label(self) -> str:
        return f"k={self.n_neighbors}" if self.method == "knn" else f"h={as_binspec(self.bins).h}"
