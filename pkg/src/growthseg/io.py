"""CSV and JSON file formats.

Panel CSV: header ``year,<source1>,<source2>,...``, one row per year with
strictly increasing gap-free years, empty cells meaning missing, UTF-8, LF
line endings. Level-series CSV (the economic-data export format): two
columns ``DATE,<SERIES_ID>`` where dates are ``YYYY`` or ``YYYY-01-01`` and
missing markers ("." or empty) are tolerated at the head/tail only.
Reports are JSON with a ``schema_version`` field; plot data is long-form
CSV with one row per (year, source).
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateYearError,
    EmptyInputError,
    GapInYearsError,
    InteriorMissingError,
    ParseError,
)
from .series import CUMULATIVE, KINDS, RAW_ANNUAL, AnnualSeries, Panel

SCHEMA_VERSION = 1


def _parse_year(text: str, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"bad year {text!r}", line) from None


def _parse_cell(text: str, line: int, kind: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad number {text!r}", line) from None
    if kind in (RAW_ANNUAL, CUMULATIVE) and value < 0:
        raise ParseError(f"negative value {value}", line)
    return value


def read_panel_csv(path, kind: str = RAW_ANNUAL) -> Panel:
    path = Path(path)
    if kind not in KINDS:
        raise ParseError(f"unknown panel kind {kind!r}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip().lower() != "year":
            raise ParseError("header must be year,<source>,...", 1)
        sources = tuple(h.strip() for h in header[1:])
        years: list[int] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} columns, got {len(row)}", lineno
                )
            year = _parse_year(row[0], lineno)
            if years:
                if year == years[-1]:
                    raise DuplicateYearError(f"year {year} repeated", lineno)
                if year != years[-1] + 1:
                    raise GapInYearsError(
                        f"year {year} does not follow {years[-1]}", lineno
                    )
            years.append(year)
            rows.append([_parse_cell(c, lineno, kind) for c in row[1:]])
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return Panel(years[0], years[-1], sources, np.array(rows), kind)


def write_panel_csv(panel: Panel, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["year", *panel.sources])
        for year, row in zip(panel.years, panel.values):
            writer.writerow(
                [int(year)] + ["" if math.isnan(v) else repr(float(v)) for v in row]
            )


_MISSING_MARKERS = {"", "."}


def read_fred_csv(path) -> AnnualSeries:
    """Annual level series (e.g. nominal GDP in millions) from a DATE,VALUE export."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: empty file") from None
        if len(header) != 2:
            raise ParseError("expected two columns DATE,<SERIES_ID>", 1)
        series_id = header[1].strip()
        entries: list[tuple[int, float]] = []  # (year, value or nan)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", lineno)
            date = row[0].strip()
            year_text = date.split("-")[0] if "-" in date else date
            year = _parse_year(year_text, lineno)
            raw = row[1].strip()
            value = math.nan if raw in _MISSING_MARKERS else _parse_cell(raw, lineno, CUMULATIVE)
            if entries and year != entries[-1][0] + 1:
                if year == entries[-1][0]:
                    raise DuplicateYearError(f"year {year} repeated", lineno)
                raise GapInYearsError(f"year {year} does not follow {entries[-1][0]}", lineno)
            entries.append((year, value))
    if not entries:
        raise EmptyInputError(f"{path}: no data rows")
    values = np.array([v for _, v in entries])
    present = np.flatnonzero(~np.isnan(values))
    if present.size == 0:
        raise EmptyInputError(f"{path}: all values missing")
    lo, hi = int(present[0]), int(present[-1])
    window = values[lo : hi + 1]
    if np.isnan(window).any():
        bad = lo + int(np.flatnonzero(np.isnan(window))[0])
        raise InteriorMissingError(
            f"missing value inside the series at year {entries[bad][0]}"
        )
    return AnnualSeries(series_id or "level", entries[lo][0], window, CUMULATIVE)


# --- reports -------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return None if math.isnan(f) else f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def write_report_json(report: dict, path) -> None:
    report = dict(report)
    report.setdefault("schema_version", SCHEMA_VERSION)
    Path(path).write_text(
        json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_report_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_plot_csv(report: dict, path) -> None:
    """Long-form per-(year, source) rows for external plotting tools."""
    curves = report["curves"]
    years = report["years"]
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["year", "source", "observed", "fitted", "lower", "upper", "imputed_flag"]
        )
        for source, data in curves.items():
            for i, year in enumerate(years):
                def cell(key):
                    v = data[key][i]
                    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else v

                writer.writerow(
                    [
                        int(year),
                        source,
                        cell("observed"),
                        cell("fitted"),
                        cell("lower"),
                        cell("upper"),
                        int(bool(data["imputed"][i])),
                    ]
                )
