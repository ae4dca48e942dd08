"""Annual series and multi-source panels.

All values are indexed by integer calendar years with no gaps. A series is
one source's column; a panel is several sources aligned on a common year
range, with missing cells kept explicit (``NaN``) so that a missing year is
never confused with a zero count.

Three kinds of values move through the pipeline:

* ``raw_annual``     -- per-year magnitudes, >= 0
* ``cumulative``     -- running totals (or an already-level series such as
                        GDP), non-decreasing with a positive first value
* ``log_cumulative`` -- natural log of cumulative values, finite

Everything here is immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    KindMismatchError,
    LeadingZeroError,
    NegativeOffsetError,
    NonPositiveValueError,
    TooShortError,
)

RAW_ANNUAL = "raw_annual"
CUMULATIVE = "cumulative"
LOG_CUMULATIVE = "log_cumulative"
KINDS = (RAW_ANNUAL, CUMULATIVE, LOG_CUMULATIVE)

DEFAULT_HEAD_TRIM = 5


def _frozen(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class AnnualSeries:
    """One source's year-indexed values; year of entry i is start_year + i."""

    source_id: str
    start_year: int
    values: np.ndarray
    kind: str = RAW_ANNUAL

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        v = self.values
        if v.ndim != 1 or v.size == 0:
            raise EmptyInputError(f"{self.source_id}: series needs at least one value")
        if self.kind not in KINDS:
            raise KindMismatchError(f"unknown kind {self.kind!r}")
        if self.kind == RAW_ANNUAL:
            if np.any(np.isnan(v)) or np.any(v < 0):
                raise NonPositiveValueError(
                    f"{self.source_id}: raw annual values must be >= 0"
                )
        elif self.kind == CUMULATIVE:
            if np.any(np.isnan(v)) or v[0] <= 0:
                raise LeadingZeroError(
                    f"{self.source_id}: cumulative series must start above 0"
                )
            # monotonicity is guaranteed for running sums by construction but
            # not required here: level series (e.g. nominal GDP) share this
            # kind and genuinely dip; the log only needs positivity
            if np.any(v <= 0):
                raise NonPositiveValueError(
                    f"{self.source_id}: cumulative-kind values must be > 0"
                )
        else:
            if not np.all(np.isfinite(v)):
                raise NonPositiveValueError(
                    f"{self.source_id}: log values must be finite"
                )

    def __len__(self) -> int:
        return self.values.size

    @property
    def end_year(self) -> int:
        return self.start_year + len(self) - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + len(self))


@dataclass(frozen=True)
class Panel:
    """Year-aligned matrix of sources; missing cells are NaN, never 0.

    ``values`` has shape (n_years, n_sources) covering
    ``first_year..last_year`` inclusive.
    """

    first_year: int
    last_year: int
    sources: tuple[str, ...]
    values: np.ndarray
    kind: str = RAW_ANNUAL

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "values", _frozen(self.values))
        n_years = self.last_year - self.first_year + 1
        if not self.sources:
            raise EmptyInputError("panel needs at least one source")
        if self.values.shape != (n_years, len(self.sources)):
            raise KindMismatchError(
                f"values shape {self.values.shape} does not match "
                f"{n_years} years x {len(self.sources)} sources"
            )
        if self.kind not in KINDS:
            raise KindMismatchError(f"unknown kind {self.kind!r}")
        present = ~np.isnan(self.values)
        if not present[0].any() or not present[-1].any():
            raise EmptyInputError(
                "panel must have at least one value in its first and last year"
            )

    @property
    def n_years(self) -> int:
        return self.values.shape[0]

    @property
    def n_sources(self) -> int:
        return self.values.shape[1]

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.first_year, self.last_year + 1)

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.values)

    def is_complete(self) -> bool:
        return not np.isnan(self.values).any()

    def column(self, source_id: str) -> np.ndarray:
        return self.values[:, self._index(source_id)]

    def _index(self, source_id: str) -> int:
        try:
            return self.sources.index(source_id)
        except ValueError:
            raise KeyError(f"unknown source {source_id!r}") from None

    def extract(self, source_id: str) -> AnnualSeries:
        """Recover one source as a contiguous series.

        Leading/trailing missing years (outside the source's coverage) are
        dropped; interior missing cells are an error because a series has no
        way to represent them.
        """
        col = self.column(source_id)
        present = np.flatnonzero(~np.isnan(col))
        if present.size == 0:
            raise EmptyInputError(f"{source_id}: no observed values")
        lo, hi = present[0], present[-1]
        window = col[lo : hi + 1]
        if np.isnan(window).any():
            raise KindMismatchError(
                f"{source_id}: interior missing years cannot form a series"
            )
        return AnnualSeries(source_id, self.first_year + int(lo), window, self.kind)

    def with_values(self, values: np.ndarray) -> "Panel":
        """Same shape/sources/range, new cell values (used by imputation)."""
        return Panel(self.first_year, self.last_year, self.sources, values, self.kind)


# --- transforms -------------------------------------------------------------


def cumulate(s: AnnualSeries) -> AnnualSeries:
    """Running sum of annual counts.

    The first cumulative value must be positive (its log is needed
    downstream); trim leading zero years first, e.g. with
    :func:`trim_leading_zeros`.
    """
    if s.kind != RAW_ANNUAL:
        raise KindMismatchError(f"cumulate expects raw_annual, got {s.kind}")
    out = np.cumsum(s.values)
    if out[0] == 0:
        raise LeadingZeroError(
            f"{s.source_id}: first cumulative value is 0; trim leading zero years"
        )
    return AnnualSeries(s.source_id, s.start_year, out, CUMULATIVE)


def log_transform(s: AnnualSeries) -> AnnualSeries:
    """Natural log of a cumulative (or level) series."""
    if s.kind != CUMULATIVE:
        raise KindMismatchError(f"log_transform expects cumulative, got {s.kind}")
    if np.any(s.values <= 0):
        raise NonPositiveValueError(f"{s.source_id}: all values must be > 0")
    return AnnualSeries(s.source_id, s.start_year, np.log(s.values), LOG_CUMULATIVE)


def truncate_head(s: AnnualSeries, n: int = DEFAULT_HEAD_TRIM) -> AnnualSeries:
    """Drop the first ``n`` years; the start year advances accordingly."""
    if n < 0:
        raise TooShortError("cannot truncate a negative number of years")
    if n >= len(s):
        raise TooShortError(
            f"{s.source_id}: cannot drop {n} of {len(s)} entries"
        )
    if n == 0:
        return s
    return AnnualSeries(s.source_id, s.start_year + n, s.values[n:], s.kind)


def trim_leading_zeros(s: AnnualSeries) -> AnnualSeries:
    """Drop leading years whose running total would still be zero."""
    if s.kind != RAW_ANNUAL:
        raise KindMismatchError("trim_leading_zeros expects raw_annual")
    nonzero = np.flatnonzero(s.values > 0)
    if nonzero.size == 0:
        raise EmptyInputError(f"{s.source_id}: series is all zeros")
    return truncate_head(s, int(nonzero[0]))


def align(series: Sequence[AnnualSeries]) -> Panel:
    """Assemble series into a panel over the union of their year ranges.

    Source order is preserved; cells outside a source's coverage are missing.
    """
    series = list(series)
    if not series:
        raise EmptyInputError("align needs at least one series")
    kinds = {s.kind for s in series}
    if len(kinds) > 1:
        raise KindMismatchError(f"series kinds differ: {sorted(kinds)}")
    first = min(s.start_year for s in series)
    last = max(s.end_year for s in series)
    values = np.full((last - first + 1, len(series)), np.nan)
    for j, s in enumerate(series):
        lo = s.start_year - first
        values[lo : lo + len(s), j] = s.values
    return Panel(first, last, tuple(s.source_id for s in series), values, kinds.pop())


def time_index(year: int, t0: int) -> int:
    """Offset of ``year`` from the anchor year ``t0``."""
    if year < t0:
        raise NegativeOffsetError(f"year {year} precedes anchor {t0}")
    return year - t0


def to_log_cumulative(s: AnnualSeries, head_trim: int = DEFAULT_HEAD_TRIM) -> AnnualSeries:
    """Standard preprocessing for one source.

    raw_annual: trim leading zero years, cumulate, drop the first
    ``head_trim`` years, take logs. cumulative (level series such as GDP):
    drop head years and take logs directly. log_cumulative passes through
    untouched (head_trim still applies).
    """
    if s.kind == RAW_ANNUAL:
        s = cumulate(trim_leading_zeros(s))
    if s.kind == CUMULATIVE:
        if head_trim:
            s = truncate_head(s, head_trim)
        return log_transform(s)
    if head_trim:
        s = truncate_head(s, head_trim)
    return s


def panel_to_log_cumulative(panel: Panel, head_trim: int = DEFAULT_HEAD_TRIM) -> Panel:
    """Apply :func:`to_log_cumulative` source by source and re-align."""
    if panel.kind == LOG_CUMULATIVE and head_trim == 0:
        return panel
    return align([to_log_cumulative(panel.extract(sid), head_trim) for sid in panel.sources])
