"""CSV ingestion and persistence of load profiles.

Two layouts are understood:

``long-csv``
    One reading per row, ``profile_id,index,value``. A header row with those
    names is optional.
``wide-csv``
    One profile per column. The first row holds the profile ids.

Either file may start with comment lines; ``# freq=<int>`` declares the
number of readings per day. Readings must be finite and non-negative.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from collections import defaultdict
from pathlib import Path

import numpy as np

from .harness import ProfileSet
from .profiles import InvalidInputError, LoadProfile

FORMATS = ("long-csv", "wide-csv")
LONG_HEADER = ("profile_id", "index", "value")


class ProfileFormatError(InvalidInputError):
    """Malformed profile file; ``row`` is the 1-based line number, if known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"line {row}: {message}" if row is not None else message)


def atomic_write_text(path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _parse_reading(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ProfileFormatError(f"not a number: {text!r}", line) from None
    if not np.isfinite(value):
        raise ProfileFormatError(f"non-finite reading {text!r}", line)
    if value < 0:
        raise ProfileFormatError(f"negative reading {text!r}", line)
    return value


def _split_comments(lines):
    """Leading ``#`` lines -> (freq or None, remaining (line_no, text) pairs)."""
    freq = None
    body = []
    for no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            key, _, val = stripped.lstrip("#").partition("=")
            if key.strip() == "freq":
                try:
                    freq = int(val)
                except ValueError:
                    raise ProfileFormatError(f"bad freq declaration {stripped!r}", no) from None
            continue
        body.append((no, line))
    return freq, body


def _rows(body):
    for no, line in body:
        yield no, next(csv.reader([line]))


def sniff_format(path) -> str:
    """``long-csv`` if the first data row is the long header or has 3 fields
    with an integer index, else ``wide-csv``."""
    with open(path, encoding="utf-8") as fh:
        _, body = _split_comments(fh)
    if not body:
        raise ProfileFormatError(f"{path}: no data")
    (_, first), *_ = _rows(body[:1])
    if tuple(c.strip() for c in first) == LONG_HEADER:
        return "long-csv"
    if len(first) == 3 and len(body) > 1:
        (_, second), *_ = _rows(body[1:2])
        if len(second) == 3 and second[1].strip().lstrip("-").isdigit():
            return "long-csv"
    return "wide-csv"


def _read_long(body):
    series = defaultdict(dict)  # insertion order is file order
    for no, fields in _rows(body):
        fields = [f.strip() for f in fields]
        if tuple(fields) == LONG_HEADER:
            continue
        if len(fields) != 3:
            raise ProfileFormatError(f"expected 3 fields, got {len(fields)}", no)
        pid, idx, value = fields
        try:
            t = int(idx)
        except ValueError:
            raise ProfileFormatError(f"index is not an integer: {idx!r}", no) from None
        if t < 0:
            raise ProfileFormatError(f"negative index {t}", no)
        if t in series[pid]:
            raise ProfileFormatError(f"duplicate index {t} for profile {pid!r}", no)
        series[pid][t] = _parse_reading(value, no)
    out = []
    for pid, readings in series.items():
        T = len(readings)
        if sorted(readings) != list(range(T)):
            raise ProfileFormatError(f"profile {pid!r}: indices are not 0..{T - 1}")
        out.append((pid, np.array([readings[t] for t in range(T)])))
    return out


def _read_wide(body):
    rows = list(_rows(body))
    if len(rows) < 2:
        raise ProfileFormatError("wide-csv needs a header row and at least one data row")
    _, header = rows[0]
    ids = [h.strip() for h in header]
    if len(set(ids)) != len(ids):
        raise ProfileFormatError("duplicate profile ids in header", rows[0][0])
    data = np.empty((len(rows) - 1, len(ids)))
    for r, (no, fields) in enumerate(rows[1:]):
        if len(fields) != len(ids) or any(not f.strip() for f in fields):
            raise ProfileFormatError(f"ragged row: {len(fields)} fields for {len(ids)} profiles", no)
        data[r] = [_parse_reading(f, no) for f in fields]
    return [(pid, data[:, c]) for c, pid in enumerate(ids)]


def read_profile_list(path, format: str | None = None, freq: int | None = None) -> list[LoadProfile]:
    """Load every profile in a CSV file, in file order.

    ``format`` is ``"long-csv"``, ``"wide-csv"`` or None to sniff it. An
    explicit ``freq`` overrides the file's ``# freq=`` header; with neither,
    freq is 1.
    """
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"no such profile file: {path}")
    fmt = format or sniff_format(path)
    if fmt not in FORMATS:
        raise InvalidInputError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    with open(path, encoding="utf-8") as fh:
        declared, body = _split_comments(fh)
    series = _read_long(body) if fmt == "long-csv" else _read_wide(body)
    f = int(freq or declared or 1)
    lengths = {pid: v.size for pid, v in series}
    if len(set(lengths.values())) > 1:
        raise ProfileFormatError(f"profiles have different lengths: {lengths}")
    return [LoadProfile(v, freq=f, id=pid) for pid, v in series]


def read_profiles(path, format: str | None = None, freq: int | None = None) -> ProfileSet:
    """Load a ProfileSet (at least two equal-length profiles) from a CSV file."""
    return ProfileSet(tuple(read_profile_list(path, format, freq)))


def _fmt(value: float) -> str:
    return repr(float(value))


def profiles_to_csv(profiles, format: str = "wide-csv") -> str:
    profiles = list(profiles)
    if format not in FORMATS:
        raise InvalidInputError(f"unknown format {format!r}; expected one of {FORMATS}")
    ids = [p.id or f"p{i}" for i, p in enumerate(profiles)]
    buf = io.StringIO()
    buf.write(f"# freq={profiles[0].freq}\n")
    writer = csv.writer(buf, lineterminator="\n")
    if format == "long-csv":
        writer.writerow(LONG_HEADER)
        for pid, p in zip(ids, profiles):
            writer.writerows((pid, t, _fmt(v)) for t, v in enumerate(p.values))
    else:
        writer.writerow(ids)
        writer.writerows([_fmt(v) for v in row] for row in np.column_stack([p.values for p in profiles]))
    return buf.getvalue()


def write_profiles(profiles, path, format: str = "wide-csv") -> Path:
    """Persist profiles losslessly (shortest round-trip float repr)."""
    return atomic_write_text(path, profiles_to_csv(profiles, format))
