"""Synthetic loads with a known secret.

A household runs four devices in turn, each for a quarter of the day; device
``d`` draws power uniformly from ``[d-1, d]``. Load-hiding algorithms A-D
produce grid loads that either hide or reveal the active device.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from scipy.signal import lfilter
from scipy.special import ndtr

from .estimators import SamplePairs
from .profiles import InvalidInputError, LoadProfile, make_rng

N_DEVICES = 4
ALGORITHMS = ("A", "B", "C", "D")


@dataclass(frozen=True, eq=False)
class DeviceSchedule:
    """Active device id (1..4) per reading."""

    devices: np.ndarray
    freq: int

    def __post_init__(self):
        devices = np.array(self.devices, dtype=np.int64)
        if devices.min() < 1 or devices.max() > N_DEVICES:
            raise InvalidInputError("device ids must lie in 1..4")
        devices.setflags(write=False)
        object.__setattr__(self, "devices", devices)

    def __len__(self):
        return self.devices.size

    @classmethod
    def daily(cls, T: int, f: int, offset: int = 0) -> DeviceSchedule:
        """Each day split into four equal consecutive blocks, device d in block d."""
        if f % N_DEVICES:
            raise InvalidInputError(f"freq must be divisible by {N_DEVICES}, got {f}")
        block = f // N_DEVICES
        t = np.arange(T)
        return cls(((t + offset) % f) // block + 1, f)


@dataclass(frozen=True)
class RangeSwapMap:
    """Permutation of the unit power bands.

    ``perm[d-1]`` is the band the grid load uses while device ``d`` is
    active. With ``mirror`` the position inside the band is reflected.
    """

    perm: tuple = (1, 2, 3, 4)
    mirror: bool = False

    def __post_init__(self):
        if sorted(self.perm) != list(range(1, N_DEVICES + 1)):
            raise InvalidInputError(f"{self.perm} is not a permutation of 1..4")
        object.__setattr__(self, "perm", tuple(int(p) for p in self.perm))

    @property
    def is_identity(self) -> bool:
        return self.perm == (1, 2, 3, 4) and not self.mirror


# C keeps the bands of devices 1 and 3 and swaps 2 and 4. D is C's mirror
# image (grid load 4 - y_C): the cyclic band order 1->4->3->2->1 with the
# in-band position reflected, so no device keeps its band.
DEFAULT_MAPS = {
    "B": RangeSwapMap(),
    "C": RangeSwapMap((1, 4, 3, 2)),
    "D": RangeSwapMap((4, 1, 2, 3), mirror=True),
}


def _uniform_ar(rng, T: int, phi: float) -> np.ndarray:
    """Uniform(0, 1) marginals with AR(1) dependence (Gaussian copula)."""
    z = lfilter([np.sqrt(1.0 - phi * phi)], [1.0, -phi], rng.normal(size=T))
    return ndtr(z)


def gen_user_load(
    T: int, f: int, seed, offset: int = 0, smoothness: float = 0.0
) -> tuple[LoadProfile, DeviceSchedule]:
    """User load of the four-device day.

    With ``smoothness == 0`` the in-band positions are i.i.d. uniform. A
    positive value is the lag-one autocorrelation of the latent Gaussian
    driving them; marginals stay uniform.
    """
    if not 0.0 <= smoothness < 1.0:
        raise InvalidInputError(f"smoothness must lie in [0, 1), got {smoothness}")
    if f % N_DEVICES:
        raise InvalidInputError(f"freq must be divisible by {N_DEVICES}, got {f}")
    if T < f:
        raise InvalidInputError(f"T={T} shorter than one day (f={f})")
    schedule = DeviceSchedule.daily(T, f, offset)
    rng = make_rng(seed)
    u = _uniform_ar(rng, T, smoothness) if smoothness > 0 else rng.random(T)
    values = schedule.devices - 1 + u
    return LoadProfile(values, freq=f, features=schedule.devices), schedule


def apply_algorithm(
    x: LoadProfile, schedule: DeviceSchedule, algo: str, maps=None, seed=0
) -> LoadProfile:
    """Grid load produced by algorithm A, B, C or D.

    All algorithms share one uniform draw per reading, so B, C and D differ
    only by the band map (their histograms are bin permutations of each other).
    """
    if len(schedule) != len(x):
        raise InvalidInputError("schedule does not match the profile length")
    algo = str(algo).upper()
    if algo not in ALGORITHMS:
        raise InvalidInputError(f"unknown algorithm {algo!r}")
    u = make_rng(seed).random(len(x))
    if algo == "A":
        values = N_DEVICES * u
    else:
        swap = {**DEFAULT_MAPS, **(maps or {})}[algo]
        band = np.asarray(swap.perm)[schedule.devices - 1]
        values = band - 1 + ((1.0 - u) if swap.mirror else u)
    return x.replace(values)


def mim_features(schedule: DeviceSchedule, shift: int) -> np.ndarray:
    """Device ids delayed cyclically by ``shift`` readings."""
    shift = int(shift)
    if not 0 <= shift < len(schedule):
        raise InvalidInputError(f"shift must lie in [0, T), got {shift}")
    return np.roll(schedule.devices, shift)


@dataclass(frozen=True)
class KnownMiSpec:
    """Cell-channel sample with closed-form MI.

    Cell ``i`` is uniform on ``1..m``; with probability ``1 - eps`` the
    partner cell equals ``i``, otherwise it is drawn uniformly.
    """

    m: int
    eps: float
    n: int

    def __post_init__(self):
        if self.m < 2:
            raise InvalidInputError(f"m must be >= 2, got {self.m}")
        if not 0.0 <= self.eps <= 1.0:
            raise InvalidInputError(f"eps must lie in [0, 1], got {self.eps}")
        if self.n < 10 * self.m**2:
            raise InvalidInputError(f"n={self.n} below 10*m^2={10 * self.m**2}")

    @property
    def true_mi(self) -> float:
        """MI in bits: diagonal cells carry conditional mass ``1 - eps + eps/m``."""
        m, eps = self.m, self.eps
        diag = 1.0 - eps + eps / m
        off = eps / m
        mi = diag * np.log2(m * diag)
        if off > 0:
            mi += (m - 1) * off * np.log2(m * off)
        return float(max(mi, 0.0))


def gen_known_mi_pair(spec: KnownMiSpec, seed) -> tuple[SamplePairs, float]:
    rng = make_rng(seed)
    i = rng.integers(0, spec.m, spec.n)
    keep = rng.random(spec.n) < 1.0 - spec.eps
    j = np.where(keep, i, rng.integers(0, spec.m, spec.n))
    xs = i + rng.random(spec.n)
    ys = j + rng.random(spec.n)
    return SamplePairs(xs, ys), spec.true_mi


def known_mi_suite(n_pairs: int = 100, seed=0, ms=(2, 4, 8), n_range=(1_000, 10_000)):
    """Specs spanning cell counts, mixing weights and log-uniform sample sizes."""
    rng = make_rng(seed)
    specs = []
    for r in range(n_pairs):
        m = ms[r % len(ms)]
        eps = float(rng.uniform(0.0, 1.0))
        n = int(np.exp(rng.uniform(np.log(n_range[0]), np.log(n_range[1]))))
        specs.append(KnownMiSpec(m, eps, max(n, 10 * m * m)))
    return specs


HOUSEHOLD_SMOOTHNESS = 0.9
HOUSEHOLD_JITTER = 3  # readings either side of midnight


def household(
    seed, days: int = 28, freq: int = 48, id: str = "", smoothness: float = HOUSEHOLD_SMOOTHNESS
) -> LoadProfile:
    """One synthetic household built on the four-device day.

    Households share the device order but differ in when the day starts
    (a few readings of jitter), in how wide each device's power band is and
    in overall scale. Device power is autocorrelated within a block and sits
    on a slowly varying base load, with occasional short spikes on top.
    """
    rng = make_rng(seed)
    T = days * freq
    offset = int(rng.integers(-HOUSEHOLD_JITTER, HOUSEHOLD_JITTER + 1)) % freq
    device_load, schedule = gen_user_load(T, freq, rng.integers(2**63), offset, smoothness)
    d = schedule.devices - 1
    position = device_load.values - d
    widths = rng.uniform(0.3, 1.5, N_DEVICES)
    lows = np.concatenate([[0.0], np.cumsum(widths)[:-1]])
    scale = rng.uniform(0.5, 2.0)
    base = rng.uniform(0.05, 0.4) * scale
    base_noise = rng.uniform(0.02, 0.3) * scale * _uniform_ar(rng, T, 0.95)
    spike_rate = rng.uniform(0.0, 0.05)
    spikes = (rng.random(T) < spike_rate) * rng.uniform(2.0, 6.0, T) * scale
    values = scale * (lows[d] + widths[d] * position) + base + base_noise + spikes
    return LoadProfile(values, freq=freq, id=id, features=schedule.devices)


def household_set(n_profiles: int = 50, seed=20240101, days: int = 28, freq: int = 48):
    return [household((seed, i), days, freq, id=f"h{i:03d}") for i in range(n_profiles)]
