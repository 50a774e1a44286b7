"""Experiment configuration, execution and acceptance-band checks.

A config is a flat ``key = value`` text file; ``#`` starts a comment and
lists are comma separated. Measure hyperparameters are set with keys of the
form ``measure.<ID>.<param>``::

    suites = requirements, consistency
    profiles = synth:household50
    measures = MIi, CE, R2, dR2, MIm, TVD
    measure.MIi.bins = 40
    seed = 1
    formats = csv, json
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, harness, synth
from .io import read_profiles
from .measures import MEASURE_IDS, REGISTRY, MeasureSpec
from .profiles import InvalidInputError
from .reports import (
    ReportBundle,
    bench_table,
    consistency_table,
    requirements_table,
    scenario_table,
)
from .transforms import COMPRESSION_GRID, INTERPOLATION_GRID, NOISE_GRID

SUITES = ("requirements", "consistency", "synth-eval", "freq-sweep", "mim-shift", "estimator-bench")
_SUITE_ALIASES = {"secret-scenario": "synth-eval"}
SYNTH_PREFIX = "synth:household"
HOUSEHOLD_SEED = 20240101


def parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    for cast in (int, float):
        try:
            return cast(t)
        except ValueError:
            pass
    return t


def _parse_list(text, cast=str) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(cast(v) for v in text)
    return tuple(cast(v.strip()) for v in str(text).split(",") if v.strip())


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines the numbers a run produces.

    ``out``, ``formats`` and the worker count do not; they are excluded from
    :attr:`config_hash`.
    """

    suites: tuple = ("requirements",)
    seed: int | None = None
    profiles: str = "synth:household50"
    profile_format: str | None = None
    freq: int | None = None
    measures: tuple = MEASURE_IDS
    params: dict = field(default_factory=dict)  # measure id -> {param: value}
    noise_grid: tuple = NOISE_GRID
    interpolation_grid: tuple = INTERPOLATION_GRID
    compression_grid: tuple = COMPRESSION_GRID
    # synthetic scenarios
    T: int = 6400
    f: int = 200
    n_seeds: int = 10
    algos: tuple = synth.ALGORITHMS
    scenario_measures: tuple = harness.SCENARIO_MEASURES
    sweep_measure: str = "dR2"
    freqs: tuple = (4, 8, 20, 40, 100, 200, 400, 800)
    shifts: tuple = (0, 1, 2, 4, 8, 16, 25)
    # estimator bench
    n_pairs: int = 100
    hist_bins: tuple = (10, 20, 40)
    knn_k: tuple = (1, 2, 4)
    # output
    out: str | None = None
    formats: tuple = ("csv",)

    def __post_init__(self):
        if self.seed is None:
            raise InvalidInputError("a master seed is required")
        suites = tuple(_SUITE_ALIASES.get(s, s) for s in self.suites)
        for s in suites:
            if s not in SUITES:
                raise InvalidInputError(f"unknown suite {s!r}; expected one of {SUITES}")
        object.__setattr__(self, "suites", suites)
        for mid in (*self.measures, *self.params, *self.scenario_measures, self.sweep_measure):
            if mid not in REGISTRY:
                raise InvalidInputError(f"unknown measure {mid!r}")
        for mid, overrides in self.params.items():
            MeasureSpec(mid, dict(overrides))  # rejects unknown hyperparameters
        if self.algos:
            for a in self.algos:
                if a not in synth.ALGORITHMS:
                    raise InvalidInputError(f"unknown algorithm {a!r}")

    # -------------------------------------------------------------- parsing

    @classmethod
    def from_mapping(cls, raw: dict) -> ExperimentConfig:
        """Build from string values as found in a config file."""
        kw, params = {}, {}
        casts = {
            "suites": _parse_list, "measures": _parse_list, "algos": _parse_list,
            "scenario_measures": _parse_list, "formats": _parse_list,
            "noise_grid": lambda v: _parse_list(v, float),
            "interpolation_grid": lambda v: _parse_list(v, int),
            "compression_grid": lambda v: _parse_list(v, float),
            "freqs": lambda v: _parse_list(v, int), "shifts": lambda v: _parse_list(v, int),
            "hist_bins": lambda v: _parse_list(v, int), "knn_k": lambda v: _parse_list(v, int),
            "seed": int, "freq": int, "T": int, "f": int, "n_seeds": int, "n_pairs": int,
            "profiles": str, "profile_format": str, "sweep_measure": str, "out": str,
        }  # fmt: skip
        for key, value in raw.items():
            if key.startswith("measure."):
                _, mid, param = key.split(".", 2)
                params.setdefault(mid, {})[param] = parse_scalar(value) if isinstance(value, str) else value
            elif key in casts:
                kw[key] = casts[key](value) if isinstance(value, str) else value
            else:
                raise InvalidInputError(f"unknown config key {key!r}")
        if params:
            kw["params"] = params
        return cls(**kw)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str  # measure ids are case sensitive
        try:
            parser.read_string("[run]\n" + Path(path).read_text(encoding="utf-8"), source=str(path))
        except configparser.Error as exc:
            raise InvalidInputError(f"{path}: {exc}") from None
        return cls.from_mapping(dict(parser["run"]))

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    # -------------------------------------------------------------- identity

    def _hashable(self) -> dict:
        d = asdict(self)
        for key in ("out", "formats"):
            d.pop(key)
        path = Path(self.profiles)
        if not self.profiles.startswith(SYNTH_PREFIX) and path.is_file():
            d["profiles_sha256"] = hashlib.sha256(path.read_bytes()).hexdigest()
        d["version"] = __version__
        return d

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self._hashable(), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def scenario_seeds(self) -> range:
        return range(self.seed, self.seed + self.n_seeds)

    def spec(self, measure) -> MeasureSpec:
        return MeasureSpec(measure, dict(self.params.get(measure, {})))


def load_profile_source(source: str, format=None, freq=None) -> harness.ProfileSet:
    """``synth:household<N>`` for the bundled synthetic set, else a CSV path."""
    if source.startswith(SYNTH_PREFIX):
        n = source[len(SYNTH_PREFIX):] or "50"
        if not n.isdigit() or int(n) < 3:
            raise InvalidInputError(f"bad synthetic profile source {source!r}")
        return harness.ProfileSet(tuple(synth.household_set(int(n), HOUSEHOLD_SEED)))
    return read_profiles(source, format, freq)


def run(config: ExperimentConfig, n_jobs=None) -> ReportBundle:
    """Execute every configured suite and collect the resulting tables."""
    tables = []
    ctx = {"seed": config.seed, "config_hash": config.config_hash}
    profiles = None
    if {"requirements", "consistency"} & set(config.suites):
        profiles = load_profile_source(config.profiles, config.profile_format, config.freq)
        ctx_p = {**ctx, "profiles": config.profiles}
    for suite in config.suites:
        if suite == "requirements":
            grids = harness.Grids(config.noise_grid, config.interpolation_grid, config.compression_grid)
            specs = [config.spec(m) for m in config.measures]
            report = harness.requirement_report(specs, profiles, grids, config.seed, n_jobs)
            tables.append(requirements_table(report, ctx_p))
        elif suite == "consistency":
            specs = [config.spec(m) for m in config.measures]
            cm = harness.consistency_matrix(specs, profiles, n_jobs)
            tables.append(consistency_table(cm, ctx_p, len(profiles)))
        elif suite == "synth-eval":
            res = harness.synth_eval(config.T, config.f, config.scenario_seeds, config.algos, config.scenario_measures)
            tables.append(scenario_table(res, "synth_eval", "algorithm", {**ctx, "T": config.T, "f": config.f}))
        elif suite == "freq-sweep":
            res = harness.freq_sweep(config.freqs, config.T, config.scenario_seeds, config.sweep_measure)
            tables.append(scenario_table(res, "freq_sweep", "measure", {**ctx, "T": config.T, "algorithm": "B"}))
        elif suite == "mim-shift":
            res = harness.mim_shift(config.shifts, config.T, config.f, config.scenario_seeds)
            tables.append(scenario_table(res, "mim_shift", "measure", {**ctx, "T": config.T, "f": config.f}))
        elif suite == "estimator-bench":
            specs = synth.known_mi_suite(config.n_pairs, config.seed)
            bench = harness.estimator_bench(specs, config.hist_bins, config.knn_k, config.seed, n_jobs)
            tables.append(bench_table(bench, ctx))
    metadata = {"seed": config.seed, "config_hash": config.config_hash, "version": __version__,
                "suites": list(config.suites), "tables": [t.name for t in tables]}  # fmt: skip
    return ReportBundle(tuple(tables), metadata)


# ------------------------------------------------------------ band checks


@dataclass(frozen=True)
class Check:
    table: str
    label: str
    passed: bool


def _finite(v) -> bool:
    return bool(np.isfinite(v))


ANCHORED = ("MIi", "CE", "R2", "dR2", "MIm")


def _check_requirements(t):
    """Properties the anchored measures must show; other cells are reported only.

    The per-cell pass band is informational: several established measures
    fail columns by design (CE is asymmetric, TVD depends on the amplitude).
    """
    for m in (r for r in ANCHORED if r in t.rows):
        for c in (*harness.PROBES, "LP"):
            v = t.cell(m, c)
            yield Check(t.name, f"{m} {c} >= 0.9", _finite(v) and v >= 0.9)
    if "CE" in t.rows:
        v = t.cell("CE", "SY")
        yield Check(t.name, "CE SY > 1.1", _finite(v) and v > 1.1)
    if "TVD" in t.rows:
        yield Check(t.name, "TVD LP = 1", t.cell("TVD", "LP") == 1.0)


def _check_consistency(t):
    if "MIi" in t.rows and "CE" in t.rows:
        yield Check(t.name, "(MIi, CE) >= 0.99", t.cell("MIi", "CE") >= 0.99)


def _check_synth_eval(t):
    """Reference values hold at T=6400, f=200; the ordering holds for any setting."""
    rows, cols = set(t.rows), set(t.columns)
    if set("ABCD") <= rows:
        for m in ({"R2", "dR2"} & cols):
            a, b, c, d = (t.cell(r, m) for r in "ABCD")
            yield Check(t.name, f"{m}: A <= D <= C <= B", a <= d + 1e-12 and d <= c + 1e-12 and c <= b + 1e-12)
    if t.context.get("T") != 6400 or t.context.get("f") != 200:
        return
    anchors = {
        ("B", "R2"): lambda v: abs(v - 0.88) <= 0.02,
        ("A", "R2"): lambda v: v <= 0.01,
        ("A", "MIi"): lambda v: v <= 0.06,
        ("B", "MIi"): lambda v: abs(v - 2.0) <= 0.02,
        ("C", "MIi"): lambda v: abs(v - 2.0) <= 0.02,
        ("D", "MIi"): lambda v: abs(v - 2.0) <= 0.02,
        ("A", "CE"): lambda v: abs(abs(v) - 2.97) <= 0.05,
        ("B", "CE"): lambda v: abs(abs(v) - 1.61) <= 0.03,
        ("A", "dR2"): lambda v: v <= 0.01,
        ("B", "dR2"): lambda v: abs(v - 0.07) <= 0.02,
    }
    for (r, m), ok in anchors.items():
        if r in rows and m in cols:
            yield Check(t.name, f"{m}({r}) anchor", bool(ok(t.cell(r, m))))


def _check_freq_sweep(t):
    row = t.rows[0]
    freqs = [int(c) for c in t.columns]
    vals = [t.cell(row, c) for c in t.columns]
    if row != "dR2":
        return
    yield Check(t.name, "dR2 strictly decreasing in f", all(b < a for a, b in zip(vals, vals[1:])))
    if 4 in freqs:
        yield Check(t.name, "dR2(f=4) = 0.9 +/- 0.05", abs(vals[freqs.index(4)] - 0.9) <= 0.05)
    if 800 in freqs:
        yield Check(t.name, "dR2(f=800) <= 0.02", vals[freqs.index(800)] <= 0.02)


def _check_mim_shift(t):
    shifts = [int(c) for c in t.columns]
    vals = [t.cell("MIm", c) for c in t.columns]
    yield Check(t.name, "MIm non-decreasing in shift", all(b >= a for a, b in zip(vals, vals[1:])))
    if 0 in shifts:
        yield Check(t.name, "MIm(shift=0) <= 0.03", vals[shifts.index(0)] <= 0.03)
    if 25 in shifts:
        yield Check(t.name, "MIm(shift=25) >= 0.8", vals[shifts.index(25)] >= 0.8)


def _check_bench(t):
    for label in t.rows:
        if label.startswith("k="):
            yield Check(t.name, f"{label} median error <= 0.1 bits", t.cell(label, "median_abs_error") <= 0.1)
    if "h=10" in t.rows and "k=2" in t.rows:
        h10, k2 = t.cell("h=10", "median_abs_error"), t.cell("k=2", "median_abs_error")
        yield Check(t.name, "h=10 median error > k=2 median error", h10 > k2)


_CHECKS = {
    "requirements": _check_requirements,
    "consistency": _check_consistency,
    "synth_eval": _check_synth_eval,
    "freq_sweep": _check_freq_sweep,
    "mim_shift": _check_mim_shift,
    "estimator_bench": _check_bench,
}


def band_checks(bundle: ReportBundle) -> list[Check]:
    """Acceptance-band checks for every table in ``bundle``."""
    out = []
    for t in bundle.tables:
        out.extend(_CHECKS[t.name](t))
    return out
