"""Report tables and their csv, markdown and json renderings.

Human-readable formats round to 6 significant digits; json keeps full
precision. Any NaN or infinity is written as the marker ``degenerate``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .harness import COLUMNS
from .io import atomic_write_text
from .profiles import InvalidInputError

DEGENERATE = "degenerate"
REPORT_FORMATS = ("csv", "markdown", "json")
_EXT = {"csv": "csv", "markdown": "md", "json": "json"}


def format_number(value, digits: int = 6) -> str:
    v = float(value)
    if not np.isfinite(v):
        return DEGENERATE
    return f"{v:.{digits}g}"


def _json_number(value):
    v = float(value)
    return v if np.isfinite(v) else DEGENERATE


@dataclass(frozen=True, eq=False)
class Table:
    """A labelled 2-D block of numbers.

    ``context`` records where the numbers came from (experiment name,
    profile count, seeds...) and is written alongside every rendering.
    """

    name: str
    row_label: str
    rows: tuple
    columns: tuple
    values: np.ndarray
    context: dict = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.rows), len(self.columns)):
            raise InvalidInputError(
                f"table {self.name!r}: values {values.shape} do not match "
                f"{len(self.rows)} rows x {len(self.columns)} columns"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "rows", tuple(str(r) for r in self.rows))
        object.__setattr__(self, "columns", tuple(str(c) for c in self.columns))

    def cell(self, row, column) -> float:
        return float(self.values[self.rows.index(str(row)), self.columns.index(str(column))])

    def _context_lines(self):
        return [f"{k}={self.context[k]}" for k in sorted(self.context)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for line in self._context_lines():
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.row_label, *self.columns])
        for r, row in enumerate(self.rows):
            writer.writerow([row, *(format_number(v) for v in self.values[r])])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = [f"### {self.name}", ""]
        if self.context:
            lines += ["; ".join(self._context_lines()), ""]
        lines.append("| " + " | ".join([self.row_label, *self.columns]) + " |")
        lines.append("|" + "---|" * (len(self.columns) + 1))
        for r, row in enumerate(self.rows):
            lines.append("| " + " | ".join([row, *(format_number(v) for v in self.values[r])]) + " |")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "context": self.context,
            "row_label": self.row_label,
            "rows": list(self.rows),
            "columns": list(self.columns),
            "values": [[_json_number(v) for v in row] for row in self.values],
        }

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "markdown":
            return self.to_markdown()
        if fmt == "json":
            return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        raise InvalidInputError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")


@dataclass(frozen=True, eq=False)
class ReportBundle:
    """Tables from one run plus the metadata needed to reproduce them."""

    tables: tuple
    metadata: dict

    def __getitem__(self, name) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def names(self) -> tuple:
        return tuple(t.name for t in self.tables)


def write_reports(bundle: ReportBundle, directory, formats=("csv",)) -> list[Path]:
    """One file per table and format, plus ``metadata.json``. Returns the paths."""
    formats = tuple(formats)
    for fmt in formats:
        if fmt not in REPORT_FORMATS:
            raise InvalidInputError(f"unknown report format {fmt!r}; expected one of {REPORT_FORMATS}")
    directory = Path(directory)
    written = []
    for table in bundle.tables:
        for fmt in formats:
            written.append(atomic_write_text(directory / f"{table.name}.{_EXT[fmt]}", table.render(fmt)))
    meta = json.dumps(bundle.metadata, indent=2, sort_keys=True) + "\n"
    written.append(atomic_write_text(directory / "metadata.json", meta))
    return written


# ------------------------------------------------------------ converters


def requirements_table(report, context=None) -> Table:
    values = [[row.values[c] for c in COLUMNS] + [row.n_passed] for row in report.rows]
    ctx = {"experiment": "requirements", "n_profiles": report.n_profiles, **(context or {})}
    return Table("requirements", "measure", [r.measure for r in report.rows], (*COLUMNS, "passed"), values, ctx)


def consistency_table(matrix, context=None, n_profiles=None) -> Table:
    ctx = {"experiment": "consistency", **(context or {})}
    if n_profiles is not None:
        ctx["n_profiles"] = n_profiles
    return Table("consistency", "measure", matrix.ids, matrix.ids, matrix.matrix, ctx)


def scenario_table(result, name, row_label="algorithm", context=None) -> Table:
    ctx = {"experiment": name, "n_seeds": result.per_seed.shape[0], **(context or {})}
    return Table(name, row_label, result.rows, result.columns, result.mean, ctx)


def bench_table(bench, context=None) -> Table:
    ctx = {"experiment": "estimator-bench", "n_pairs": bench.errors.shape[0], "unit": "bits", **(context or {})}
    values = np.column_stack([bench.median, bench.sd])
    return Table("estimator_bench", "estimator", bench.labels, ("median_abs_error", "sd_abs_error"), values, ctx)
