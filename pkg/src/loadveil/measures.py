"""Registry of the 25 smart-meter privacy measures.

Every measure is a function ``PM(x, y, theta)`` of the user load ``x`` and the
grid load ``y``. Each has a fixed orientation; ``PrivacyScore.oriented_value``
flips the sign where needed so that greater always means more private.
Measures whose exact original formula could not be recovered are flagged
``reconstructed`` in the catalog.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil
from types import MappingProxyType
from typing import Callable, Mapping

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.metrics import normalized_mutual_info_score
from sklearn.neighbors import NearestNeighbors

from .estimators import (
    BinSpec,
    bin_indices,
    entropy_from_counts,
    hist_conditional_entropy,
    hist_entropy,
    hist_k_divergence,
    hist_kl,
    hist_mi,
    hist_tvd,
    knn_mi,
    symbol_mi,
)
from .profiles import InvalidInputError, LoadProfile, as_values
from .transforms import haar_threshold

HIGHER = "higher-is-more-private"
LOWER = "lower-is-more-private"

MEASURE_IDS = (
    "CS", "dCS", "R2", "dR2", "Rp", "CE", "dCE", "dERz", "dERnz", "dFMed", "dFMr",
    "dFM", "K", "KL", "dKL", "LV", "MIs", "MIi", "MIm", "dMIb", "dMIs", "dMIi",
    "RUr", "RUw", "TVD",
)  # fmt: skip


class MissingHyperparameterError(InvalidInputError):
    pass


class DegenerateInputError(InvalidInputError):
    """The measure is undefined for this input (e.g. a zero denominator)."""


@dataclass(frozen=True)
class MeasureDef:
    id: str
    orientation: str
    func: Callable
    defaults: Mapping = field(default_factory=dict)
    formula: str = ""
    reconstructed: bool = False
    uses_differences: bool = False


@dataclass(frozen=True)
class PrivacyScore:
    value: float
    id: str
    oriented_value: float
    info: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class MeasureSpec:
    """A measure id plus hyperparameter overrides.

    ``definition`` may be supplied for measures outside the registry (test
    doubles, wrappers); otherwise it is looked up by ``id``.
    """

    id: str
    params: Mapping = field(default_factory=dict)
    definition: MeasureDef | None = None

    def __post_init__(self):
        if self.definition is None:
            if self.id not in REGISTRY:
                raise InvalidInputError(f"unknown measure {self.id!r}")
            object.__setattr__(self, "definition", REGISTRY[self.id])
        unknown = set(self.params) - set(self.definition.defaults)
        if unknown:
            raise InvalidInputError(
                f"unknown hyperparameter(s) for {self.id}: {sorted(unknown)}"
            )
        object.__setattr__(self, "params", MappingProxyType(dict(self.params)))

    @property
    def orientation(self) -> str:
        return self.definition.orientation

    @property
    def theta(self) -> dict:
        return {**self.definition.defaults, **self.params}

    def __hash__(self):
        return hash((self.id, tuple(sorted((k, repr(v)) for k, v in self.params.items()))))


def custom_measure(name: str, func: Callable, orientation: str = HIGHER, **defaults) -> MeasureSpec:
    """Wrap ``func(x_values, y_values, **theta) -> float`` as a measure."""
    if orientation not in (HIGHER, LOWER):
        raise InvalidInputError(f"bad orientation {orientation!r}")
    return MeasureSpec(name, definition=MeasureDef(name, orientation, func, defaults))


def negated(spec: MeasureSpec) -> MeasureSpec:
    """Same measure with its value negated and orientation kept."""
    base = as_spec(spec)
    d = base.definition

    def func(x, y, **theta):
        return -d.func(x, y, **theta)

    return MeasureSpec(f"-{base.id}", base.params, MeasureDef(f"-{d.id}", d.orientation, func, d.defaults))


def as_spec(measure) -> MeasureSpec:
    if isinstance(measure, MeasureSpec):
        return measure
    return MeasureSpec(str(measure))


def oriented(value: float, orientation: str) -> float:
    return value if orientation == HIGHER else -value


def evaluate(spec, x, y, **params) -> PrivacyScore:
    """Score the substitution of user load ``x`` by grid load ``y``."""
    spec = as_spec(spec)
    if params:
        spec = MeasureSpec(spec.id, {**spec.params, **params}, spec.definition)
    d = spec.definition
    xv, yv = as_values(x), as_values(y)
    if xv.shape != yv.shape:
        raise InvalidInputError(f"length mismatch: {xv.size} vs {yv.size}")
    if d.uses_differences and xv.size < 3:
        raise InvalidInputError(f"{spec.id} needs at least 3 readings")
    theta = spec.theta
    if isinstance(x, LoadProfile):
        if "features" in d.defaults and theta.get("features") is None:
            theta["features"] = x.features
        if "freq" in d.defaults and theta.get("freq") is None:
            theta["freq"] = x.freq
    info = {}
    result = d.func(xv, yv, **theta)
    if isinstance(result, tuple):
        result, info = result
    value = float(result)
    return PrivacyScore(value, spec.id, oriented(value, d.orientation), MappingProxyType(info))


# ---------------------------------------------------------------- helpers


def _binspec(bins, bin_range):
    return BinSpec(bins, bin_range)


def _diff(v):
    return np.diff(v)


def _pearson_sq(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = np.sqrt(np.dot(a, a) * np.dot(b, b))
    if den == 0:
        return 0.0
    r = np.dot(a, b) / den
    return float(min(r * r, 1.0))


def _aligned_r2(a, b, align) -> float:
    best = _pearson_sq(a, b)
    for delta in range(1, int(align) + 1):
        if delta >= a.size - 1:
            break
        best = max(best, _pearson_sq(a[:-delta], b[delta:]), _pearson_sq(a[delta:], b[:-delta]))
    return best


def _tau(dx, tau, tau_rel):
    return float(tau) if tau is not None else tau_rel * float(np.max(np.abs(dx)))


# ---------------------------------------------------------------- families


def mi_family(variant, x, y, bins=20, bin_range=None, base=2.0, estimator="hist",
              n_neighbors=2, features=None, freq=None, window=2, tau=None, tau_rel=0.05):  # fmt: skip
    """Mutual-information variants on levels, segments, windows or differences."""
    if variant in ("MIi", "dMIi"):
        if variant == "dMIi":
            x, y = _diff(x), _diff(y)
        if estimator == "knn":
            return knn_mi(x, y, n_neighbors) / np.log(base)
        if estimator != "hist":
            raise InvalidInputError(f"unknown estimator {estimator!r}")
        return hist_mi(x, y, _binspec(bins, bin_range), base)
    if variant == "MIm":
        labels = _segment_labels(features, freq, x.size)
        spec = _binspec(bins, bin_range)
        ix = bin_indices(x, spec.h, spec.axis_range(0))
        iy = bin_indices(y, spec.h, spec.axis_range(1))
        total = 0.0
        for lab in np.unique(labels):
            sel = labels == lab
            total += sel.mean() * symbol_mi(ix[sel], iy[sel], base)
        return total
    if variant == "MIs":
        hs = int(ceil(np.sqrt(bins)))
        sx = _window_symbols(bin_indices(x, hs, _axis(bin_range, 0)), hs, window)
        sy = _window_symbols(bin_indices(y, hs, _axis(bin_range, 1)), hs, window)
        return symbol_mi(sx, sy, base)
    dx, dy = _diff(x), _diff(y)
    if variant == "dMIb":
        t = _tau(dx, tau, tau_rel)
        return symbol_mi(np.abs(dx) > t, np.abs(dy) > t, base)
    if variant == "dMIs":
        return symbol_mi(np.sign(dx), np.sign(dy), base)
    raise InvalidInputError(f"unknown MI variant {variant!r}")


def _axis(bin_range, axis):
    return None if bin_range is None else BinSpec(2, bin_range).axis_range(axis)


def _window_symbols(idx, h, window):
    n = idx.size - window + 1
    sym = np.zeros(n, dtype=np.int64)
    for w in range(window):
        sym = sym * h + idx[w : w + n]
    return sym


def _segment_labels(features, freq, T):
    if features is None:
        raise MissingHyperparameterError("MIm needs a 'features' vector")
    if isinstance(features, str):
        if features != "quarter-day" or not freq:
            raise InvalidInputError(f"unknown features spec {features!r}")
        block = max(freq // 4, 1)
        return (np.arange(T) % freq) // block
    labels = np.asarray(features)
    if labels.size != T:
        raise InvalidInputError(f"features has length {labels.size}, expected {T}")
    return labels


def r2_family(variant, x, y, align=0, k_reg=5):
    """Squared correlation (levels or differences) or nearest-neighbour R^2."""
    if variant == "R2":
        return _aligned_r2(x, y, align)
    if variant == "dR2":
        return _aligned_r2(_diff(x), _diff(y), align)
    if variant == "Rp":
        var = np.var(x)
        if var == 0 or np.ptp(y) == 0:
            return 0.0
        k = min(int(k_reg), x.size - 1)
        nn = NearestNeighbors(n_neighbors=k + 1).fit(y.reshape(-1, 1))
        _, idx = nn.kneighbors(y.reshape(-1, 1))
        own = np.arange(x.size)[:, None]
        # leave-one-out: drop the query point itself (or the farthest on ties)
        is_self = idx == own
        keep = ~is_self
        keep[~is_self.any(axis=1), -1] = False
        pred = np.where(keep, x[idx], 0.0).sum(axis=1) / k
        return float(np.clip(1.0 - np.mean((x - pred) ** 2) / var, 0.0, 1.0))
    raise InvalidInputError(f"unknown R2 variant {variant!r}")


def ce_family(variant, x, y, bins=20, bin_range=None, base=np.e):
    if variant == "dCE":
        x, y = _diff(x), _diff(y)
    return hist_conditional_entropy(x, y, _binspec(bins, bin_range), base)


def divergence_family(variant, x, y, bins=20, bin_range=None, base=2.0):
    spec = _binspec(bins, bin_range)
    if variant == "KL":
        return hist_kl(x, y, spec, base)
    if variant == "dKL":
        return hist_kl(_diff(x), _diff(y), spec, base)
    if variant == "K":
        return hist_k_divergence(x, y, spec, base)
    if variant == "TVD":
        return hist_tvd(x, y, spec)
    raise InvalidInputError(f"unknown divergence variant {variant!r}")


def entropy_ratio(variant, x, y, bins=20):
    """``H(dy) / H(dx)``; the nz variant drops zero steps from both series."""
    dx, dy = _diff(x), _diff(y)
    if variant == "dERnz":
        dx, dy = dx[dx != 0], dy[dy != 0]
    hx = _safe_entropy(dx, bins)
    if hx == 0:
        raise DegenerateInputError("user-load differences have zero entropy")
    return _safe_entropy(dy, bins) / hx


def _safe_entropy(values, bins):
    if values.size < 2:
        return 0.0
    return hist_entropy(values, bins)


def feature_mass(variant, x, y, tau=None, tau_rel=0.05):
    """Edge statistics; an edge is a step with ``|diff| > tau``."""
    dx, dy = _diff(x), _diff(y)
    t = _tau(dx, tau, tau_rel)
    ex, ey = np.abs(dx) > t, np.abs(dy) > t
    if not ex.any():
        raise DegenerateInputError("user load has no edges above the threshold")
    if variant == "dFMr":
        return ey.sum() / ex.sum()
    if variant == "dFMed":
        hit = ey & (np.sign(dx) == np.sign(dy))
        return float(np.mean(~hit[ex]))
    if variant == "dFM":
        mass = np.abs(dy[ey]).sum() / np.abs(dx[ex]).sum()
        return 1.0 - min(1.0, float(mass))
    raise InvalidInputError(f"unknown feature-mass variant {variant!r}")


def kmeans_1d(values, n_clusters=8, max_iter=50):
    """Lloyd's algorithm on scalars with quantile seeding (no randomness).

    Returns ``(labels, n_clusters_used)``; labels are ordered by centre.
    """
    values = np.asarray(values, dtype=float)
    distinct = np.unique(values)
    c = min(int(n_clusters), distinct.size)
    if c == distinct.size:
        centers = distinct.copy()
    else:
        centers = np.unique(np.quantile(values, (np.arange(c) + 0.5) / c))
    labels = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(centers.size):
            members = values[labels == j]
            if members.size:
                centers[j] = members.mean()
    order = np.argsort(centers, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[labels], centers.size


def cluster_similarity(variant, x, y, clusters=8, max_iter=50):
    if variant == "dCS":
        x, y = _diff(x), _diff(y)
    lx, cx = kmeans_1d(x, clusters, max_iter)
    ly, cy = kmeans_1d(y, clusters, max_iter)
    nmi = normalized_mutual_info_score(lx, ly)
    return 1.0 - float(nmi), {"clusters_x": cx, "clusters_y": cy}


def load_variance(x, y):
    return float(np.var(y))


def removed_uncertainty(variant, x, y, bins=20, wavelet_rate=0.5):
    """``1 - H(x - x_hat) / H(x)`` with the residual binned at x's bin width."""
    if variant == "RUr":
        vy = np.var(y)
        if vy == 0:
            x_hat = np.full_like(x, x.mean())
        else:
            slope = np.mean((x - x.mean()) * (y - y.mean())) / vy
            x_hat = x.mean() + slope * (y - y.mean())
    elif variant == "RUw":
        x_hat = haar_threshold(y, wavelet_rate)
    else:
        raise InvalidInputError(f"unknown RU variant {variant!r}")
    hx = hist_entropy(x, bins)
    if hx == 0:
        raise DegenerateInputError("user load has zero entropy")
    width = np.ptp(x) / bins
    resid = x - x_hat
    idx = np.floor((resid - resid.min()) / width).astype(np.int64)
    h_res = entropy_from_counts(np.bincount(idx))
    return min(1.0 - h_res / hx, 1.0)


# ---------------------------------------------------------------- registry

_HIST = {"bins": 20, "bin_range": None}


def _family(func, variant):
    def measure(x, y, **theta):
        return func(variant, x, y, **theta)

    measure.__name__ = f"{func.__name__}_{variant}"
    return measure


_MI_LEVEL = {**_HIST, "base": 2.0, "estimator": "hist", "n_neighbors": 2}


def _build_registry():
    rows = [
        ("CS", HIGHER, _family(cluster_similarity, "CS"), {"clusters": 8, "max_iter": 50},
         "1 - NMI(kmeans(x), kmeans(y))", True, False),
        ("dCS", HIGHER, _family(cluster_similarity, "dCS"), {"clusters": 8, "max_iter": 50},
         "1 - NMI(kmeans(dx), kmeans(dy))", True, True),
        ("R2", LOWER, _family(r2_family, "R2"), {"align": 0},
         "corr(x, y)^2", False, False),
        ("dR2", LOWER, _family(r2_family, "dR2"), {"align": 0},
         "corr(dx, dy)^2", False, True),
        ("Rp", LOWER, _family(r2_family, "Rp"), {"k_reg": 5},
         "1 - E[(x - knn_regress(x | y))^2] / Var(x)", True, False),
        ("CE", HIGHER, _family(ce_family, "CE"), {**_HIST, "base": np.e},
         "H(x | y)", False, False),
        ("dCE", HIGHER, _family(ce_family, "dCE"), {**_HIST, "base": np.e},
         "H(dx | dy)", False, True),
        ("dERz", LOWER, _family(entropy_ratio, "dERz"), {"bins": 20},
         "H(dy) / H(dx)", True, True),
        ("dERnz", LOWER, _family(entropy_ratio, "dERnz"), {"bins": 20},
         "H(dy != 0) / H(dx != 0)", True, True),
        ("dFMed", HIGHER, _family(feature_mass, "dFMed"), {"tau": None, "tau_rel": 0.05},
         "share of x edges without a same-sign y edge", True, True),
        ("dFMr", HIGHER, _family(feature_mass, "dFMr"), {"tau": None, "tau_rel": 0.05},
         "#edges(dy) / #edges(dx)", True, True),
        ("dFM", HIGHER, _family(feature_mass, "dFM"), {"tau": None, "tau_rel": 0.05},
         "1 - min(1, edge mass(dy) / edge mass(dx))", True, True),
        ("K", HIGHER, _family(divergence_family, "K"), {**_HIST, "base": 2.0},
         "KL(p_x || (p_x + p_y) / 2)", False, False),
        ("KL", HIGHER, _family(divergence_family, "KL"), {**_HIST, "base": 2.0},
         "KL(p_x || p_y), smoothed", False, False),
        ("dKL", HIGHER, _family(divergence_family, "dKL"), {**_HIST, "base": 2.0},
         "KL(p_dx || p_dy), smoothed", False, True),
        ("LV", LOWER, lambda x, y: load_variance(x, y), {},
         "Var(y)", False, False),
        ("MIs", LOWER, _family(mi_family, "MIs"), {**_HIST, "base": 2.0, "window": 2},
         "I((x_t, x_t+1); (y_t, y_t+1)), ceil(sqrt(h)) bins per axis", True, False),
        ("MIi", LOWER, _family(mi_family, "MIi"), dict(_MI_LEVEL),
         "I(x; y)", False, False),
        ("MIm", LOWER, _family(mi_family, "MIm"),
         {**_HIST, "base": 2.0, "features": None, "freq": None},
         "sum_f p(f) I(x; y | features = f)", False, False),
        ("dMIb", LOWER, _family(mi_family, "dMIb"), {"base": 2.0, "tau": None, "tau_rel": 0.05},
         "I(|dx| > tau; |dy| > tau)", True, True),
        ("dMIs", LOWER, _family(mi_family, "dMIs"), {"base": 2.0},
         "I(sign dx; sign dy)", True, True),
        ("dMIi", LOWER, _family(mi_family, "dMIi"), dict(_MI_LEVEL),
         "I(dx; dy)", False, True),
        ("RUr", LOWER, _family(removed_uncertainty, "RUr"), {"bins": 20},
         "1 - H(x - linreg(x | y)) / H(x)", True, False),
        ("RUw", LOWER, _family(removed_uncertainty, "RUw"), {"bins": 20, "wavelet_rate": 0.5},
         "1 - H(x - haar_denoise(y)) / H(x)", True, False),
        ("TVD", HIGHER, _family(divergence_family, "TVD"), dict(_HIST),
         "0.5 * sum |p_x - p_y|", False, False),
    ]
    registry = {}
    for mid, orient, func, defaults, formula, recon, diff in rows:
        registry[mid] = MeasureDef(mid, orient, func, MappingProxyType(defaults), formula, recon, diff)
    return MappingProxyType(registry)


REGISTRY = _build_registry()


def catalog() -> list[dict]:
    """Machine-readable measure table: id, orientation, defaults, formula."""
    out = []
    for mid in MEASURE_IDS:
        d = REGISTRY[mid]
        out.append(
            {
                "id": mid,
                "orientation": d.orientation,
                "theta": {k: _jsonable(v) for k, v in d.defaults.items()},
                "formula": d.formula,
                "reconstructed": d.reconstructed,
                "differences": d.uses_differences,
            }
        )
    return out


def _jsonable(v):
    if isinstance(v, float) and v == np.e:
        return "e"
    return v


class PrivacyMeasure(BaseEstimator):
    """Estimator-style handle on one registered measure.

    Only hyperparameters the chosen measure accepts are forwarded; the rest
    are ignored so one object can be re-targeted with ``set_params``.

    >>> PrivacyMeasure("TVD").score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    0.0
    """

    def __init__(self, measure="MIi", bins=20, bin_range=None, base=None, estimator="hist",
                 n_neighbors=2, clusters=8, tau=None, align=0, window=2, features=None,
                 k_reg=5, wavelet_rate=0.5):  # fmt: skip
        self.measure = measure
        self.bins = bins
        self.bin_range = bin_range
        self.base = base
        self.estimator = estimator
        self.n_neighbors = n_neighbors
        self.clusters = clusters
        self.tau = tau
        self.align = align
        self.window = window
        self.features = features
        self.k_reg = k_reg
        self.wavelet_rate = wavelet_rate

    @property
    def spec(self) -> MeasureSpec:
        d = REGISTRY.get(self.measure)
        if d is None:
            raise InvalidInputError(f"unknown measure {self.measure!r}")
        params = {
            k: v
            for k, v in self.get_params().items()
            if k in d.defaults and not (k == "base" and v is None)
        }
        return MeasureSpec(self.measure, params)

    @property
    def orientation(self) -> str:
        return self.spec.orientation

    def evaluate(self, x, y) -> PrivacyScore:
        return evaluate(self.spec, _profile(x), _profile(y))

    def score(self, x, y) -> float:
        return self.evaluate(x, y).value

    def oriented_score(self, x, y) -> float:
        return self.evaluate(x, y).oriented_value


def _profile(v):
    if isinstance(v, LoadProfile):
        return v
    return np.asarray(v, dtype=float)
