"""Perturbation probes: noise addition, interpolation, wavelet compression.

Each probe has a plain function form working on one LoadProfile and a
scikit-learn transformer form working on a 2-D array of profiles (one per
row), so probes can sit inside a Pipeline.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .profiles import (
    InvalidInputError,
    LoadProfile,
    constant_profile,
    oplus,
    sample_noise,
)

NOISE_GRID = (0.1, 0.25, 0.5, 1.0, 2.0, 4.0)  # multiples of std(x)
INTERPOLATION_GRID = (2, 4, 8, 16, 32)
COMPRESSION_GRID = (0.2, 0.4, 0.6, 0.8, 0.95)

_SQRT2 = np.sqrt(2.0)


def add_noise(x: LoadProfile, k: float, seed) -> LoadProfile:
    """``x ⊕ u(k)``: uniform noise of amplitude ``k``, non-negative, same total."""
    if k <= 0:
        raise InvalidInputError(f"noise amplitude must be > 0, got {k}")
    return oplus(x, sample_noise(len(x), k, seed))


def interpolate(x: LoadProfile, k: int) -> LoadProfile:
    """Keep every ``k``-th reading (plus the last) and linearly interpolate the rest."""
    k = int(k)
    T = len(x)
    if k < 1 or k >= T:
        raise InvalidInputError(f"granularity must satisfy 1 <= k < T={T}, got {k}")
    if k == 1:
        return x
    keep = np.arange(0, T, k)
    if keep[-1] != T - 1:
        keep = np.append(keep, T - 1)
    values = np.interp(np.arange(T), keep, x.values[keep])
    return x.replace(values)


def haar_decompose(values: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Full-depth orthonormal Haar transform.

    Input is padded to the next power of two by repeating its last value,
    so a constant signal has no detail energy at all. Returns the length-1
    approximation and the detail bands ordered coarse to fine.
    """
    values = np.asarray(values, dtype=float)
    n = 1 << max(0, int(np.ceil(np.log2(values.size))))
    a = np.full(n, values[-1])
    a[: values.size] = values
    details = []
    while a.size > 1:
        even, odd = a[0::2], a[1::2]
        details.append((even - odd) / _SQRT2)
        a = (even + odd) / _SQRT2
    return a, details[::-1]


def haar_reconstruct(approx: np.ndarray, details: list[np.ndarray]) -> np.ndarray:
    a = np.asarray(approx, dtype=float)
    for d in details:
        out = np.empty(2 * a.size)
        out[0::2] = (a + d) / _SQRT2
        out[1::2] = (a - d) / _SQRT2
        a = out
    return a


def haar_threshold(values: np.ndarray, rate: float) -> np.ndarray:
    """Zero the ``rate`` fraction of smallest-magnitude detail coefficients.

    Only coefficients whose support overlaps the signal (not just the
    padding) are counted and ranked. The count is ``round(rate * n)``; ties
    in magnitude are broken by position (coarse bands first). Output has the
    input length, unclamped.
    """
    values = np.asarray(values, dtype=float)
    approx, details = haar_decompose(values)
    if not details:
        return values.copy()
    sizes = [d.size for d in details]
    flat = np.concatenate(details)
    n_pad = 2 * sizes[-1]
    live = np.concatenate([np.arange(s) * (n_pad // s) < values.size for s in sizes])
    candidates = np.flatnonzero(live)
    n_zero = int(np.floor(rate * candidates.size + 0.5))
    if n_zero > 0:
        order = candidates[np.argsort(np.abs(flat[candidates]), kind="stable")]
        flat[order[:n_zero]] = 0.0
    bands = np.split(flat, np.cumsum(sizes)[:-1])
    return haar_reconstruct(approx, bands)[: values.size]


def wavelet_compress(x: LoadProfile, k: float) -> LoadProfile:
    """Haar compression at rate ``k`` in (0, 1), clamped at zero."""
    if not 0.0 < k < 1.0:
        raise InvalidInputError(f"compression rate must lie in (0, 1), got {k}")
    return x.replace(np.maximum(haar_threshold(x.values, k), 0.0))


def best_privacy(x: LoadProfile, k: float, seed) -> LoadProfile:
    """Noise around the mean of ``x``: carries nothing about ``x`` but its total."""
    return add_noise(constant_profile(x), k, seed)


class _ProfileTransformer(TransformerMixin, BaseEstimator):
    """Row-wise transformer over an (n_profiles, T) array."""

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_features=2)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_min_features=2)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} readings per profile, expected {self.n_features_in_}"
            )
        rows = [self._transform_one(LoadProfile(row), i) for i, row in enumerate(X)]
        return np.vstack([r.values for r in rows])


class NoiseAdder(_ProfileTransformer):
    """Add uniform noise with ``⊕`` to every profile.

    With ``relative=True`` the amplitude is a multiple of each row's standard
    deviation. Row ``i`` draws from the stream ``(random_state, i)``.
    """

    def __init__(self, amplitude=1.0, relative=True, random_state=0):
        self.amplitude = amplitude
        self.relative = relative
        self.random_state = random_state

    def _amplitude(self, x):
        k = self.amplitude * (np.std(x.values) if self.relative else 1.0)
        return k if k > 0 else self.amplitude

    def _transform_one(self, x, i):
        return add_noise(x, self._amplitude(x), (self.random_state, i))


class BestPrivacyReplacer(NoiseAdder):
    def _transform_one(self, x, i):
        return best_privacy(x, self._amplitude(x), (self.random_state, i))


class Interpolator(_ProfileTransformer):
    def __init__(self, step=2):
        self.step = step

    def _transform_one(self, x, i):
        return interpolate(x, self.step)


class WaveletCompressor(_ProfileTransformer):
    def __init__(self, rate=0.5):
        self.rate = rate

    def _transform_one(self, x, i):
        return wavelet_compress(x, self.rate)
