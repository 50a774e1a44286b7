"""Command-line entry point: ``loadveil <command> [options]``.

Exit codes: 0 on success, 1 on any error (including bad arguments), 2 when
``--check`` is given and a reported value falls outside its acceptance band.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness, synth
from .experiment import ExperimentConfig, parse_scalar, band_checks, run
from .io import FORMATS, read_profile_list, write_profiles
from .measures import MeasureSpec, _jsonable, catalog, evaluate
from .profiles import InvalidInputError
from .reports import REPORT_FORMATS, ReportBundle, Table, write_reports

EXIT_OK, EXIT_ERROR, EXIT_BAND = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with 1 so that 2 only ever means a band failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _param_overrides(items, default_measure=None) -> dict:
    """``["MIi.bins=40", "h=10"]`` -> ``{"MIi": {"bins": 40}, default: {"h": 10}}``."""
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise InvalidInputError(f"expected key=value, got {item!r}")
        mid, dot, param = key.rpartition(".")
        if not dot:
            if default_measure is None:
                raise InvalidInputError(f"parameter {item!r} needs a measure prefix, e.g. MIi.bins=40")
            mid, param = default_measure, key
        out.setdefault(mid, {})[param] = parse_scalar(value)
    return out


def _common(p, profiles=False, measures=False):
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument("--out", help="directory for report files; tables print to stdout either way")
    p.add_argument("--formats", type=_names, default=("csv",),
                   help=f"comma-separated subset of {','.join(REPORT_FORMATS)} (default: csv)")  # fmt: skip
    p.add_argument("--threads", type=int, help="worker processes (-1 for all cores); LOADVEIL_THREADS caps it")
    p.add_argument("--check", action="store_true", help="exit 2 if any value is outside its acceptance band")
    p.add_argument("--quiet", action="store_true", help="do not print tables")
    if profiles:
        p.add_argument("--profiles", default="synth:household50",
                       help="CSV path or synth:household<N> (default: synth:household50)")  # fmt: skip
        p.add_argument("--format", dest="profile_format", choices=FORMATS, help="profile file layout (default: sniff)")
        p.add_argument("--freq", type=int, help="readings per day, overrides the file header")
    if measures:
        p.add_argument("--measures", type=_names, help="comma-separated measure ids (default: all)")
        p.add_argument("--param", action="append", metavar="ID.NAME=VALUE", help="hyperparameter override")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loadveil", description="Privacy measures for load hiding and their test battery.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("list-measures", help="show the registered measures")
    p.add_argument("--json", action="store_true", help="emit json instead of a table")

    p = sub.add_parser("measure", help="score grid loads against user loads")
    p.add_argument("--measure", required=True, help="measure id")
    p.add_argument("--x", required=True, help="CSV with user loads")
    p.add_argument("--y", required=True, help="CSV with grid loads (one per user load, or one for all)")
    p.add_argument("--format", dest="profile_format", choices=FORMATS)
    p.add_argument("--freq", type=int)
    p.add_argument("--param", action="append", metavar="NAME=VALUE")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("requirements", help="run the requirement battery (AN, IN, C, SY, BP1, BP2, LP)")
    _common(p, profiles=True, measures=True)
    p.add_argument("--noise-grid", type=_floats)
    p.add_argument("--interpolation-grid", type=_ints)
    p.add_argument("--compression-grid", type=_floats)

    p = sub.add_parser("consistency", help="pairwise consistency of measures")
    _common(p, profiles=True, measures=True)

    p = sub.add_parser("synth-eval", help="measures on algorithms A-D with the appliance-usage secret")
    _common(p)
    p.add_argument("--algo", default="all", help="'all' or comma-separated subset of A,B,C,D")
    p.add_argument("--T", type=int, default=6400)
    p.add_argument("--f", type=int, default=200)
    p.add_argument("--n-seeds", type=int, default=10)
    p.add_argument("--measures", type=_names)

    p = sub.add_parser("freq-sweep", help="one measure on algorithm B across daily frequencies")
    _common(p)
    p.add_argument("--measure", default="dR2")
    p.add_argument("--f", type=_ints, default=(4, 8, 20, 40, 100, 200, 400, 800))
    p.add_argument("--T", type=int, default=6400)
    p.add_argument("--n-seeds", type=int, default=10)

    p = sub.add_parser("mim-shift", help="MIm on algorithm B with delayed device features")
    _common(p)
    p.add_argument("--shifts", type=_ints, default=(0, 1, 2, 4, 8, 16, 25))
    p.add_argument("--T", type=int, default=6400)
    p.add_argument("--f", type=int, default=200)
    p.add_argument("--n-seeds", type=int, default=10)

    p = sub.add_parser("estimator-bench", help="MI estimator error on known-MI samples")
    _common(p)
    p.add_argument("--pairs", type=int, default=100)
    p.add_argument("--hist-bins", type=_ints, default=(10, 20, 40))
    p.add_argument("--knn-k", type=_ints, default=(1, 2, 4))

    p = sub.add_parser("synth", help="write synthetic profiles to CSV")
    p.add_argument("kind", choices=("households", "scenario"))
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--format", dest="profile_format", choices=FORMATS, default="wide-csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=50, help="households: number of profiles")
    p.add_argument("--days", type=int, default=28, help="households: days per profile")
    p.add_argument("--T", type=int, default=6400, help="scenario: readings")
    p.add_argument("--f", type=int, default=200, help="scenario: readings per day")
    p.add_argument("--algo", default="B", help="scenario: grid-load algorithm")

    p = sub.add_parser("run", help="run the suites named in a config file")
    p.add_argument("config", help="flat key=value config file")
    p.add_argument("--seed", type=int, help="override the config's seed")
    p.add_argument("--out", help="override the config's output directory")
    p.add_argument("--formats", type=_names)
    p.add_argument("--threads", type=int)
    p.add_argument("--check", action="store_true")
    p.add_argument("--quiet", action="store_true")
    return parser


# ------------------------------------------------------------ commands


def _emit(bundle: ReportBundle, args, out=None, formats=None) -> int:
    out = out if out is not None else getattr(args, "out", None)
    if not args.quiet:
        for t in bundle.tables:
            print(t.to_markdown())
    if out:
        write_reports(bundle, out, formats or args.formats)
    if args.check:
        failed = [c for c in band_checks(bundle) if not c.passed]
        for c in failed:
            print(f"FAIL {c.table}: {c.label}", file=sys.stderr)
        return EXIT_BAND if failed else EXIT_OK
    return EXIT_OK


def _config_from_args(args, suite, **extra) -> ExperimentConfig:
    kw = {"suites": (suite,), "seed": args.seed, "formats": args.formats, **extra}
    if getattr(args, "profiles", None):
        kw.update(profiles=args.profiles, profile_format=args.profile_format, freq=args.freq)
    if getattr(args, "measures", None) and suite in ("requirements", "consistency"):
        kw["measures"] = args.measures
    if getattr(args, "param", None):
        kw["params"] = _param_overrides(args.param)
    return ExperimentConfig(**kw)


def cmd_list_measures(args) -> int:
    rows = catalog()
    if args.json:
        print(json.dumps(rows, indent=2, default=_jsonable))
        return EXIT_OK
    width = max(len(r["id"]) for r in rows)
    for r in rows:
        flags = " (differences)" if r["differences"] else ""
        print(f"{r['id']:<{width}}  {r['orientation']:<24} {r['formula']}{flags}")
    return EXIT_OK


def cmd_measure(args) -> int:
    xs = read_profile_list(args.x, args.profile_format, args.freq)
    ys = read_profile_list(args.y, args.profile_format, args.freq)
    if len(ys) not in (1, len(xs)):
        raise InvalidInputError(f"{len(xs)} user loads but {len(ys)} grid loads")
    if len(ys) == 1:
        ys = ys * len(xs)
    spec = MeasureSpec(args.measure, _param_overrides(args.param, args.measure).get(args.measure, {}))
    values = []
    for x, y in zip(xs, ys):
        try:
            s = evaluate(spec, x, y)
            values.append((s.value, s.oriented_value))
        except InvalidInputError as exc:
            print(f"{x.id}: {exc}", file=sys.stderr)
            values.append((np.nan, np.nan))
    table = Table(f"measure_{spec.id}", "profile", [x.id for x in xs], ("value", "oriented"), values,
                  {"measure": spec.id, "orientation": spec.orientation})  # fmt: skip
    print(table.render("json") if args.json else table.to_markdown())
    return EXIT_OK


def cmd_requirements(args) -> int:
    extra = {k: v for k, v in (("noise_grid", args.noise_grid), ("interpolation_grid", args.interpolation_grid),
                               ("compression_grid", args.compression_grid)) if v}  # fmt: skip
    return _emit(run(_config_from_args(args, "requirements", **extra), args.threads), args)


def cmd_consistency(args) -> int:
    return _emit(run(_config_from_args(args, "consistency"), args.threads), args)


def cmd_synth_eval(args) -> int:
    algos = synth.ALGORITHMS if args.algo.lower() == "all" else tuple(a.upper() for a in _names(args.algo))
    extra = {"T": args.T, "f": args.f, "n_seeds": args.n_seeds, "algos": algos}
    if args.measures:
        extra["scenario_measures"] = args.measures
    return _emit(run(_config_from_args(args, "synth-eval", **extra), args.threads), args)


def cmd_freq_sweep(args) -> int:
    extra = {"T": args.T, "freqs": args.f, "n_seeds": args.n_seeds, "sweep_measure": args.measure}
    return _emit(run(_config_from_args(args, "freq-sweep", **extra), args.threads), args)


def cmd_mim_shift(args) -> int:
    extra = {"T": args.T, "f": args.f, "n_seeds": args.n_seeds, "shifts": args.shifts}
    return _emit(run(_config_from_args(args, "mim-shift", **extra), args.threads), args)


def cmd_estimator_bench(args) -> int:
    extra = {"n_pairs": args.pairs, "hist_bins": args.hist_bins, "knn_k": args.knn_k}
    return _emit(run(_config_from_args(args, "estimator-bench", **extra), args.threads), args)


def cmd_synth(args) -> int:
    if args.kind == "households":
        profiles = synth.household_set(args.n, args.seed, args.days)
    else:
        x, y, _ = harness._synthetic_pair(args.T, args.f, args.seed, args.algo.upper())
        profiles = [x.replace(x.values, id="user"), y.replace(y.values, id=f"grid_{args.algo.upper()}")]
    path = write_profiles(profiles, args.out, args.profile_format)
    print(f"wrote {len(profiles)} profiles to {path}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config).with_overrides(seed=args.seed, out=args.out, formats=args.formats)
    return _emit(run(config, args.threads), args, out=config.out, formats=config.formats)


COMMANDS = {
    "list-measures": cmd_list_measures,
    "measure": cmd_measure,
    "requirements": cmd_requirements,
    "consistency": cmd_consistency,
    "synth-eval": cmd_synth_eval,
    "freq-sweep": cmd_freq_sweep,
    "mim-shift": cmd_mim_shift,
    "estimator-bench": cmd_estimator_bench,
    "synth": cmd_synth,
    "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (InvalidInputError, OSError, KeyError) as exc:
        print(f"loadveil: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
