"""Requirement battery, consistency matrix, synthetic scenarios, estimator bench.

All comparisons use oriented values (greater = more private). Random
streams are addressed by ``(seed, experiment, profile, grid index)``, so
results do not depend on how work is scheduled across workers.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator

from . import synth
from .estimators import BinSpec, MutualInfoEstimator
from .measures import HIGHER, MeasureSpec, as_spec, custom_measure, evaluate
from .profiles import InvalidInputError, LoadProfile
from .stats import spearman, spearman_pvalue
from .transforms import (
    COMPRESSION_GRID,
    INTERPOLATION_GRID,
    NOISE_GRID,
    add_noise,
    best_privacy,
    interpolate,
    wavelet_compress,
)

PASS_BAND = (0.9, 1.1)
BP_ALPHA = 0.1
COLUMNS = ("AN", "IN", "C", "SY", "BP1", "BP2", "LP")
PROBES = ("AN", "IN", "C")
_STREAM = {"AN": 1, "BP": 2, "SYNTH_X": 3, "SYNTH_Y": 4, "KNOWN_MI": 5}


def resolve_jobs(n_jobs=None) -> int:
    """Worker count: ``n_jobs`` (-1 for all cores), capped by LOADVEIL_THREADS.

    Without either, work runs serially.
    """
    cap = os.environ.get("LOADVEIL_THREADS")
    cap = int(cap) if cap else None
    if cap is not None and cap == -1:
        cap = os.cpu_count() or 1
    if n_jobs is None:
        n_jobs = cap or 1
    elif n_jobs == -1:
        n_jobs = os.cpu_count() or 1
    if cap is not None:
        n_jobs = min(int(n_jobs), cap)
    return max(1, int(n_jobs))


def _map(func, args_list, n_jobs=None):
    n_jobs = resolve_jobs(n_jobs)
    if n_jobs == 1:
        return [func(*args) for args in args_list]
    return Parallel(n_jobs=n_jobs)(delayed(func)(*args) for args in args_list)


@dataclass(frozen=True, eq=False)
class ProfileSet:
    """``N >= 2`` user loads of equal length and shared frequency."""

    profiles: tuple

    def __post_init__(self):
        profiles = tuple(self.profiles)
        if len(profiles) < 2:
            raise InvalidInputError(f"need at least 2 profiles, got {len(profiles)}")
        if len({len(p) for p in profiles}) != 1:
            raise InvalidInputError("profiles must have equal lengths")
        if len({p.freq for p in profiles}) != 1:
            raise InvalidInputError("profiles must share one frequency")
        object.__setattr__(self, "profiles", profiles)

    @classmethod
    def from_array(cls, X, freq: int = 1, ids=None) -> ProfileSet:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ids = ids or [f"p{i:03d}" for i in range(X.shape[0])]
        return cls(tuple(LoadProfile(row, freq, pid) for row, pid in zip(X, ids)))

    def __len__(self):
        return len(self.profiles)

    def __iter__(self):
        return iter(self.profiles)

    def __getitem__(self, i):
        return self.profiles[i]

    @property
    def T(self) -> int:
        return len(self.profiles[0])

    @property
    def freq(self) -> int:
        return self.profiles[0].freq


def as_profile_set(profiles) -> ProfileSet:
    if isinstance(profiles, ProfileSet):
        return profiles
    if isinstance(profiles, np.ndarray):
        return ProfileSet.from_array(profiles)
    return ProfileSet(tuple(profiles))


@dataclass(frozen=True)
class Grids:
    noise: tuple = NOISE_GRID
    interpolation: tuple = INTERPOLATION_GRID
    compression: tuple = COMPRESSION_GRID

    def for_probe(self, probe):
        return {"AN": self.noise, "BP": self.noise, "IN": self.interpolation, "C": self.compression}[probe]


def perturbation_magnitude() -> MeasureSpec:
    """Self-test measure: mean absolute change, higher is more private."""
    return custom_measure("MAD", lambda x, y: float(np.mean(np.abs(x - y))), HIGHER)


def noise_amplitude(x: LoadProfile, multiple: float) -> float:
    s = float(np.std(x.values))
    return multiple * s if s > 0 else multiple


def apply_probe(x: LoadProfile, probe: str, k, seed) -> LoadProfile:
    if probe == "AN":
        return add_noise(x, noise_amplitude(x, k), seed)
    if probe == "BP":
        return best_privacy(x, noise_amplitude(x, k), seed)
    if probe == "IN":
        return interpolate(x, k)
    if probe == "C":
        return wavelet_compress(x, k)
    raise InvalidInputError(f"unknown probe {probe!r}")


def _oriented(spec, x, y) -> float:
    try:
        v = evaluate(spec, x, y).oriented_value
    except (InvalidInputError, FloatingPointError, ZeroDivisionError):
        return np.nan
    return v if np.isfinite(v) else np.nan


def probe_scores(specs, x: LoadProfile, probe: str, grid, seed, index: int) -> np.ndarray:
    """Oriented scores, shape ``(len(specs), len(grid))``; NaN marks failures."""
    out = np.full((len(specs), len(grid)), np.nan)
    for g, k in enumerate(grid):
        try:
            y = apply_probe(x, probe, k, (seed, _STREAM.get(probe, 0), index, g))
        except InvalidInputError:
            continue
        for s, spec in enumerate(specs):
            out[s, g] = _oriented(spec, x, y)
    return out


def pair_scores(specs, profiles: ProfileSet, i: int) -> np.ndarray:
    """Row ``i`` of the cross-profile matrix: ``PM(x^i, x^j)`` for every j."""
    out = np.full((len(specs), len(profiles)), np.nan)
    x = profiles[i]
    for j, y in enumerate(profiles):
        if j != i:
            for s, spec in enumerate(specs):
                out[s, j] = _oriented(spec, x, y)
    return out


def pair_score_matrices(specs, profiles, n_jobs=None) -> np.ndarray:
    """Oriented ``PM(x^i, x^j)``, shape ``(n_specs, N, N)``; NaN diagonal."""
    profiles = as_profile_set(profiles)
    specs = [as_spec(s) for s in specs]
    rows = _map(pair_scores, [(specs, profiles, i) for i in range(len(profiles))], n_jobs)
    return np.stack(rows, axis=1)


def mean_rank_correlation(scores: np.ndarray, grid) -> tuple[float, np.ndarray, int]:
    """Mean Spearman rho between each row of ``scores`` and ``grid``.

    Rows with a missing score are skipped; returns ``(mean, rhos, skipped)``.
    """
    rhos = []
    skipped = 0
    for row in np.atleast_2d(scores):
        if np.any(np.isnan(row)):
            skipped += 1
            continue
        rhos.append(spearman(row, grid))
    rhos = np.array(rhos)
    return (float(rhos.mean()) if rhos.size else np.nan), rhos, skipped


@dataclass(frozen=True)
class MonotonicityResult:
    mean_rho: float
    rhos: np.ndarray
    scores: np.ndarray
    skipped: int


def run_monotonicity(spec, profiles, probe: str, grid=None, seed=0, n_jobs=None) -> MonotonicityResult:
    if probe not in PROBES:
        raise InvalidInputError(f"unknown probe {probe!r}")
    profiles = as_profile_set(profiles)
    grid = tuple(grid if grid is not None else Grids().for_probe(probe))
    if len(grid) < 4:
        raise InvalidInputError("probe grid needs at least 4 values")
    spec = as_spec(spec)
    rows = _map(
        probe_scores,
        [([spec], profiles[i], probe, grid, seed, i) for i in range(len(profiles))],
        n_jobs,
    )
    scores = np.vstack([r[0] for r in rows])
    mean, rhos, skipped = mean_rank_correlation(scores, grid)
    return MonotonicityResult(mean, rhos, scores, skipped)


def symmetry_ratios(matrix: np.ndarray) -> np.ndarray:
    """``sym_k``: spread over the user-load argument divided by spread over
    the grid-load argument, for each profile k. NaN marks a zero denominator."""
    n = matrix.shape[0]
    out = np.full(n, np.nan)
    for k in range(n):
        others = np.arange(n) != k
        col = matrix[others, k]  # PM(x^i, x^k): user load varies
        row = matrix[k, others]  # PM(x^k, x^j): grid load varies
        col, row = col[~np.isnan(col)], row[~np.isnan(row)]
        if col.size < 2 or row.size < 2:
            continue
        # ptp is exactly zero for a constant row; std can leave a 1e-16 residue
        if np.ptp(row) > 0:
            out[k] = (np.std(col) if np.ptp(col) > 0 else 0.0) / np.std(row)
    return out


@dataclass(frozen=True)
class SymmetryResult:
    mean_sym: float
    ratios: np.ndarray
    degenerate: int

    @property
    def is_degenerate(self) -> bool:
        return bool(np.all(np.isnan(self.ratios)))


def run_symmetry(spec, profiles, n_jobs=None, matrix=None) -> SymmetryResult:
    profiles = as_profile_set(profiles)
    if len(profiles) < 3:
        raise InvalidInputError("symmetry needs at least 3 profiles")
    if matrix is None:
        matrix = pair_score_matrices([spec], profiles, n_jobs)[0]
    ratios = symmetry_ratios(matrix)
    valid = ratios[~np.isnan(ratios)]
    return SymmetryResult(
        float(valid.mean()) if valid.size else np.nan, ratios, int(np.isnan(ratios).sum())
    )


def best_privacy_shares(best: np.ndarray, mono: np.ndarray, grid) -> tuple[float, float, int]:
    """BP1 and BP2 from per-profile best-privacy and monotonicity scores."""
    pvals, shares = [], []
    skipped = 0
    for b, m in zip(np.atleast_2d(best), np.atleast_2d(mono)):
        if np.any(np.isnan(b)):
            skipped += 1
            continue
        pvals.append(1.0 if spearman_pvalue(b, grid) >= BP_ALPHA else 0.0)
        m = m[~np.isnan(m)]
        if m.size:
            shares.append(float(np.mean(m < b.min())))
    bp1 = float(np.mean(pvals)) if pvals else np.nan
    bp2 = float(np.mean(shares)) if shares else np.nan
    return bp1, bp2, skipped


@dataclass(frozen=True)
class BestPrivacyResult:
    bp1: float
    bp2: float
    scores: np.ndarray
    skipped: int


def run_best_privacy(spec, profiles, grid=None, seed=0, mono_scores=None, grids=None, n_jobs=None):
    """BP1: share of profiles whose best-privacy scores do not depend on the
    amplitude (p >= 0.1). BP2: share of monotonicity scores strictly less
    private than every best-privacy score."""
    profiles = as_profile_set(profiles)
    grids = grids or Grids()
    grid = tuple(grid if grid is not None else grids.noise)
    if len(grid) < 4:
        raise InvalidInputError("probe grid needs at least 4 values")
    spec = as_spec(spec)
    best = np.vstack(
        [r[0] for r in _map(
            probe_scores,
            [([spec], profiles[i], "BP", grid, seed, i) for i in range(len(profiles))],
            n_jobs,
        )]
    )  # fmt: skip
    if mono_scores is None:
        mono_scores = np.hstack(
            [run_monotonicity(spec, profiles, p, grids.for_probe(p), seed, n_jobs).scores for p in PROBES]
        )
    bp1, bp2, skipped = best_privacy_shares(best, mono_scores, grid)
    return BestPrivacyResult(bp1, bp2, best, skipped)


def worst_privacy_share(self_scores, collected) -> float:
    """Mean share of collected scores strictly more private than ``PM(x, x)``."""
    shares = []
    for s, c in zip(self_scores, collected):
        c = np.asarray(c, dtype=float)
        c = c[~np.isnan(c)]
        if np.isnan(s) or not c.size:
            continue
        shares.append(float(np.mean(c > s)))
    return float(np.mean(shares)) if shares else np.nan


def run_worst_privacy(spec, profiles, collected) -> float:
    profiles = as_profile_set(profiles)
    spec = as_spec(spec)
    self_scores = [_oriented(spec, x, x) for x in profiles]
    return worst_privacy_share(self_scores, collected)


@dataclass(frozen=True)
class RequirementRow:
    measure: str
    values: dict
    skipped: dict = field(default_factory=dict)

    def passes(self, column: str) -> bool:
        v = self.values[column]
        return bool(np.isfinite(v) and PASS_BAND[0] <= v <= PASS_BAND[1])

    @property
    def n_passed(self) -> int:
        return sum(self.passes(c) for c in COLUMNS)


@dataclass(frozen=True)
class RequirementReport:
    rows: tuple
    n_profiles: int

    def __getitem__(self, measure) -> RequirementRow:
        for r in self.rows:
            if r.measure == measure:
                return r
        raise KeyError(measure)

    def value(self, measure, column) -> float:
        return self[measure].values[column]


def _profile_battery(specs, profiles, i, grids, seed):
    x = profiles[i]
    out = {p: probe_scores(specs, x, p, grids.for_probe(p), seed, i) for p in (*PROBES, "BP")}
    out["SY"] = pair_scores(specs, profiles, i)
    out["self"] = np.array([_oriented(s, x, x) for s in specs])
    return out


def requirement_report(specs, profiles, grids=None, seed=0, n_jobs=None) -> RequirementReport:
    """Run AN, IN, C, SY, BP1, BP2 and LP for every measure on ``profiles``."""
    profiles = as_profile_set(profiles)
    if len(profiles) < 3:
        raise InvalidInputError("the battery needs at least 3 profiles")
    grids = grids or Grids()
    specs = [as_spec(s) for s in specs]
    per_profile = _map(
        _profile_battery, [(specs, profiles, i, grids, seed) for i in range(len(profiles))], n_jobs
    )
    rows = []
    for s, spec in enumerate(specs):
        block = {key: np.stack([r[key][s] for r in per_profile]) for key in (*PROBES, "BP", "SY")}
        self_scores = np.array([r["self"][s] for r in per_profile])
        values, skipped = {}, {}
        for p in PROBES:
            values[p], _, skipped[p] = mean_rank_correlation(block[p], grids.for_probe(p))
        sym = run_symmetry(spec, profiles, matrix=block["SY"])
        values["SY"], skipped["SY"] = sym.mean_sym, sym.degenerate
        mono = np.hstack([block[p] for p in PROBES])
        values["BP1"], values["BP2"], skipped["BP"] = best_privacy_shares(block["BP"], mono, grids.noise)
        collected = np.hstack([mono, block["BP"], block["SY"]])
        values["LP"] = worst_privacy_share(self_scores, collected)
        rows.append(RequirementRow(spec.id, values, skipped))
    return RequirementReport(tuple(rows), len(profiles))


@dataclass(frozen=True)
class ConsistencyMatrix:
    ids: tuple
    matrix: np.ndarray
    skipped: np.ndarray

    def __getitem__(self, pair) -> float:
        a, b = pair
        return float(self.matrix[self.ids.index(a), self.ids.index(b)])


def consistency_from_scores(ids, scores: np.ndarray) -> ConsistencyMatrix:
    """Mean over rows i of Spearman rho between two measures' ``PM(x^i, .)``."""
    m, n, _ = scores.shape
    mat = np.eye(m)
    skipped = np.zeros((m, m), dtype=int)
    for a in range(m):
        for b in range(a + 1, m):
            rhos = []
            for i in range(n):
                keep = np.arange(n) != i
                u, v = scores[a, i, keep], scores[b, i, keep]
                ok = ~(np.isnan(u) | np.isnan(v))
                u, v = u[ok], v[ok]
                if u.size < 3 or np.ptp(u) == 0 or np.ptp(v) == 0:
                    skipped[a, b] += 1
                    continue
                rhos.append(spearman(u, v))
            mat[a, b] = mat[b, a] = np.mean(rhos) if rhos else np.nan
            skipped[b, a] = skipped[a, b]
    return ConsistencyMatrix(tuple(ids), mat, skipped)


def consistency_matrix(specs, profiles, n_jobs=None) -> ConsistencyMatrix:
    profiles = as_profile_set(profiles)
    if len(profiles) < 3:
        raise InvalidInputError("consistency needs at least 3 profiles")
    specs = [as_spec(s) for s in specs]
    return consistency_from_scores([s.id for s in specs], pair_score_matrices(specs, profiles, n_jobs))


class RequirementBattery(BaseEstimator):
    """Estimator-style front end: ``fit(profiles)`` sets ``report_``."""

    def __init__(self, measures=("MIi",), noise_grid=NOISE_GRID, interpolation_grid=INTERPOLATION_GRID,
                 compression_grid=COMPRESSION_GRID, random_state=0, n_jobs=None):  # fmt: skip
        self.measures = measures
        self.noise_grid = noise_grid
        self.interpolation_grid = interpolation_grid
        self.compression_grid = compression_grid
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        grids = Grids(tuple(self.noise_grid), tuple(self.interpolation_grid), tuple(self.compression_grid))
        self.report_ = requirement_report(
            self.measures, as_profile_set(X), grids, self.random_state, self.n_jobs
        )
        return self


# ------------------------------------------------------------ synthetic scenarios

SCENARIO_MEASURES = ("R2", "MIi", "MIm", "dR2", "CE")
SYNTH_RANGE = (0.0, 4.0)


def scenario_spec(measure, bin_range=SYNTH_RANGE, **params) -> MeasureSpec:
    """Registered measure with the fixed synthetic bin range where it applies."""
    spec = as_spec(measure)
    if bin_range is not None and "bin_range" in spec.definition.defaults:
        params = {"bin_range": bin_range, **params}
    return MeasureSpec(spec.id, {**spec.params, **params}, spec.definition)


def leak_value(spec, x, y) -> float:
    """Score with higher meaning less private (the negated oriented value)."""
    return -evaluate(spec, x, y).oriented_value


def _synthetic_pair(T, f, seed, algo, maps=None):
    x, schedule = synth.gen_user_load(T, f, (seed, _STREAM["SYNTH_X"]))
    y = synth.apply_algorithm(x, schedule, algo, maps, (seed, _STREAM["SYNTH_Y"]))
    return x, y, schedule


@dataclass(frozen=True)
class ScenarioResult:
    """Leak-oriented values, shape ``(n_seeds, n_rows, n_columns)``."""

    rows: tuple
    columns: tuple
    per_seed: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return self.per_seed.mean(axis=0)

    def value(self, row, column) -> float:
        return float(self.mean[self.rows.index(row), self.columns.index(column)])


def synth_eval(T=6400, f=200, seeds=range(10), algos=synth.ALGORITHMS, measures=SCENARIO_MEASURES,
               maps=None, bin_range=SYNTH_RANGE) -> ScenarioResult:  # fmt: skip
    specs = [scenario_spec(m, bin_range) for m in measures]
    seeds = list(seeds)
    out = np.empty((len(seeds), len(algos), len(specs)))
    for s, seed in enumerate(seeds):
        for a, algo in enumerate(algos):
            x, y, _ = _synthetic_pair(T, f, seed, algo, maps)
            out[s, a] = [leak_value(spec, x, y) for spec in specs]
    return ScenarioResult(tuple(algos), tuple(s.id for s in specs), out)


def freq_sweep(freqs=(4, 8, 20, 40, 100, 200, 400, 800), T=6400, seeds=range(10), measure="dR2",
               algo="B", bin_range=SYNTH_RANGE) -> ScenarioResult:  # fmt: skip
    spec = scenario_spec(measure, bin_range)
    seeds = list(seeds)
    out = np.empty((len(seeds), 1, len(freqs)))
    for s, seed in enumerate(seeds):
        for c, f in enumerate(freqs):
            x, y, _ = _synthetic_pair(T, f, seed, algo)
            out[s, 0, c] = leak_value(spec, x, y)
    return ScenarioResult((spec.id,), tuple(freqs), out)


def mim_shift(shifts=(0, 1, 2, 4, 8, 16, 25), T=6400, f=200, seeds=range(10), algo="B",
              bin_range=SYNTH_RANGE) -> ScenarioResult:  # fmt: skip
    seeds = list(seeds)
    out = np.empty((len(seeds), 1, len(shifts)))
    for s, seed in enumerate(seeds):
        x, y, schedule = _synthetic_pair(T, f, seed, algo)
        for c, shift in enumerate(shifts):
            spec = scenario_spec("MIm", bin_range, features=synth.mim_features(schedule, shift))
            out[s, 0, c] = leak_value(spec, x, y)
    return ScenarioResult(("MIm",), tuple(shifts), out)


# ------------------------------------------------------------ estimator bench


@dataclass(frozen=True)
class BenchResult:
    labels: tuple
    errors: np.ndarray  # |estimate - true| in bits, shape (n_pairs, n_configs)
    true_mi: np.ndarray

    @property
    def median(self) -> np.ndarray:
        return np.median(self.errors, axis=0)

    @property
    def sd(self) -> np.ndarray:
        return np.std(self.errors, axis=0, ddof=1)

    def stat(self, label, which="median") -> float:
        return float(getattr(self, which)[self.labels.index(label)])


def _bench_one(spec, index, seed, estimators):
    pairs, truth = synth.gen_known_mi_pair(spec, (seed, _STREAM["KNOWN_MI"], index))
    errs = [abs(est.fit(pairs.xs, pairs.ys).mi_ - truth) for est in estimators]
    return np.array(errs), truth


def estimator_bench(specs=None, hist_bins=(10, 20, 40), knn_k=(1, 2, 4), seed=0, n_jobs=None,
                    bin_range=None) -> BenchResult:  # fmt: skip
    """Absolute MI error (bits) of each estimator configuration on known-MI pairs."""
    specs = list(specs) if specs is not None else synth.known_mi_suite(100, seed)
    if len(specs) < 30:
        raise InvalidInputError(f"need at least 30 known-MI pairs, got {len(specs)}")
    estimators = [MutualInfoEstimator("knn", n_neighbors=k) for k in knn_k] + [
        MutualInfoEstimator("hist", bins=BinSpec(h, bin_range)) for h in hist_bins
    ]
    rows = _map(_bench_one, [(s, i, seed, estimators) for i, s in enumerate(specs)], n_jobs)
    errors = np.vstack([r[0] for r in rows])
    truth = np.array([r[1] for r in rows])
    return BenchResult(tuple(e.label for e in estimators), errors, truth)
