"""Load-profile data model, first differences and sum-preserving noise addition."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SUM_RTOL = 1e-9
_MAX_REBALANCE = 100


class InvalidInputError(ValueError):
    """Raised when a profile or parameter violates its declared invariants."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def seed_stream(seed) -> np.random.SeedSequence:
    """Normalise ``seed`` into a SeedSequence.

    An int gives a root stream; a tuple ``(master, *key)`` gives the child
    stream identified by ``key``, so ``(seed, experiment, i, k)`` addresses
    independent streams without any shared generator state.
    """
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (tuple, list)):
        if not seed:
            raise InvalidInputError("empty seed tuple")
        master, *key = (int(s) for s in seed)
        return np.random.SeedSequence(master, spawn_key=tuple(key))
    if seed is None:
        raise InvalidInputError("a seed is required")
    return np.random.SeedSequence(int(seed))


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed_stream(seed))


@dataclass(frozen=True, eq=False)
class LoadProfile:
    """Equidistant non-negative consumption series.

    ``freq`` is the number of readings per day. ``features`` optionally holds
    a per-reading segment label (e.g. the active device) used by the
    conditional mutual information measure.
    """

    values: np.ndarray
    freq: int = 1
    id: str = ""
    features: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = _frozen(self.values)
        if values.ndim != 1:
            raise InvalidInputError("profile values must be one-dimensional")
        if values.size < 2:
            raise InvalidInputError(f"profile needs at least 2 readings, got {values.size}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("profile values must be finite")
        if np.any(values < 0):
            raise InvalidInputError("profile values must be non-negative")
        if int(self.freq) < 1:
            raise InvalidInputError(f"freq must be >= 1, got {self.freq}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "freq", int(self.freq))
        object.__setattr__(self, "id", str(self.id))
        if self.features is not None:
            feats = _frozen(self.features, dtype=np.int64)
            if feats.shape != values.shape:
                raise InvalidInputError("features must have the same length as values")
            object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, LoadProfile):
            return NotImplemented
        return self.freq == other.freq and np.array_equal(self.values, other.values)

    __hash__ = None

    def replace(self, values, **kwargs) -> LoadProfile:
        """Copy with new values, keeping metadata unless overridden."""
        meta = dict(freq=self.freq, id=self.id, features=self.features)
        meta.update(kwargs)
        return LoadProfile(values, **meta)


@dataclass(frozen=True, eq=False)
class DiffProfile:
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("difference values must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class NoiseProfile:
    values: np.ndarray
    amplitude: float
    seed: object = None

    def __post_init__(self):
        values = _frozen(self.values)
        if self.amplitude <= 0:
            raise InvalidInputError(f"noise amplitude must be > 0, got {self.amplitude}")
        if np.any(np.abs(values) > self.amplitude):
            raise InvalidInputError("noise values exceed the amplitude")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def as_values(x) -> np.ndarray:
    """Raw float array from a profile-like object."""
    if isinstance(x, (LoadProfile, DiffProfile, NoiseProfile)):
        return x.values
    return np.asarray(x, dtype=float)


def first_differences(x: LoadProfile | Sequence[float]) -> DiffProfile:
    values = as_values(x)
    if values.size < 2:
        raise InvalidInputError("first differences need at least 2 readings")
    return DiffProfile(np.diff(values))


def sample_noise(T: int, k: float, seed) -> NoiseProfile:
    """``T`` i.i.d. draws from Uniform[-k, k]; identical for identical seeds."""
    if k <= 0:
        raise InvalidInputError(f"noise amplitude must be > 0, got {k}")
    if T < 1:
        raise InvalidInputError(f"T must be >= 1, got {T}")
    rng = make_rng(seed)
    return NoiseProfile(rng.uniform(-k, k, size=int(T)), float(k), seed)


def oplus(x: LoadProfile, u: NoiseProfile | Sequence[float]) -> LoadProfile:
    """Add noise while keeping readings non-negative and the total unchanged.

    Negative readings are clipped to zero, then the series is rescaled
    proportionally so that its sum matches ``sum(x)``. When no rebalancing is
    needed the result is exactly ``x + u``.
    """
    xv = as_values(x)
    uv = as_values(u)
    if xv.shape != uv.shape:
        raise InvalidInputError(f"length mismatch: {xv.size} vs {uv.size}")
    target = float(xv.sum())
    if target == 0.0:
        return x if isinstance(x, LoadProfile) else LoadProfile(xv)

    y = np.maximum(xv + uv, 0.0)
    tol = SUM_RTOL * target
    for _ in range(_MAX_REBALANCE):
        total = float(y.sum())
        if abs(total - target) <= tol:
            break
        if total == 0.0:
            # every reading was clipped; spread the total evenly
            y = np.full_like(y, target / y.size)
        else:
            y = y * (target / total)
    else:
        raise RuntimeError("noise addition failed to preserve the total")

    if isinstance(x, LoadProfile):
        return x.replace(y)
    return LoadProfile(y)


def constant_profile(x: LoadProfile) -> LoadProfile:
    xv = as_values(x)
    values = np.full(xv.size, xv.mean())
    if isinstance(x, LoadProfile):
        return x.replace(values)
    return LoadProfile(values)
