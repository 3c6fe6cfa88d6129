"""CSV ingestion for weekly count tables, covariates, and taxonomy.

All tables share one layout: a ``date`` column of ISO dates at weekly
cadence followed by one column per series.  Empty cells and the literal
``NA`` (any case) mean missing.  Gaps in the weekly calendar are
materialised as fully masked rows so that downstream time indexing advances
exactly one step per week; parse errors name the offending row and column.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

_WEEK = dt.timedelta(days=7)


def _is_missing_token(token: str) -> bool:
    token = token.strip()
    return token == "" or token.lower() == "na"


@dataclass
class SeriesTable:
    """A weekly-grid table of values with an explicit missingness mask.

    ``values[i, j]`` is meaningful only where ``missing_mask[i, j]`` is
    False; masked cells may hold any placeholder and must never influence a
    computed statistic.
    """

    timestamps: list = field(repr=False)
    columns: list
    values: np.ndarray = field(repr=False)
    missing_mask: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.missing_mask = np.asarray(self.missing_mask, dtype=bool)
        n, m = self.values.shape
        if self.missing_mask.shape != (n, m):
            raise ValueError("mask shape does not match values")
        if len(self.timestamps) != n:
            raise ValueError("timestamp count does not match row count")
        if len(self.columns) != m:
            raise ValueError("column count does not match value columns")
        if len(set(self.columns)) != m:
            raise ValueError("duplicate column names")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if not b > a:
                raise ValueError("timestamps must be strictly increasing")
        present = self.values[~self.missing_mask]
        if present.size and not np.all(np.isfinite(present)):
            raise ValueError("present values must be finite")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    def fully_masked_rows(self) -> np.ndarray:
        return self.missing_mask.all(axis=1)

    def select(self, names: list[str]) -> "SeriesTable":
        missing = [n for n in names if n not in self.columns]
        if missing:
            raise KeyError(f"unknown columns: {missing}")
        idx = [self.columns.index(n) for n in names]
        return SeriesTable(
            timestamps=list(self.timestamps),
            columns=list(names),
            values=self.values[:, idx].copy(),
            missing_mask=self.missing_mask[:, idx].copy(),
        )


def _parse_date(token: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(token.strip())
    except ValueError as exc:
        raise ValueError(f"row {row}: malformed date {token!r}") from exc


def _read_raw(path) -> tuple[list[str], list[dt.date], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty file") from None
        if not header or header[0].strip() != "date":
            raise ValueError("first header column must be 'date'")
        columns = [c.strip() for c in header[1:]]
        if not columns:
            raise ValueError("no series columns")
        if len(set(columns)) != len(columns):
            raise ValueError("duplicate column names in header")
        dates: list[dt.date] = []
        cells: list[list[str]] = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns) + 1:
                raise ValueError(
                    f"row {i}: expected {len(columns) + 1} fields, got {len(row)}"
                )
            date = _parse_date(row[0], i)
            if dates:
                if date == dates[-1]:
                    raise ValueError(f"row {i}: duplicate timestamp {date}")
                if date < dates[-1]:
                    raise ValueError(f"row {i}: timestamps must increase ({date})")
            dates.append(date)
            cells.append(row[1:])
    if not dates:
        raise ValueError("no data rows")
    return columns, dates, cells


def _expand_weekly(
    columns: list[str], dates: list[dt.date], parsed: np.ndarray, mask: np.ndarray
) -> SeriesTable:
    """Insert one fully masked row per missing calendar week."""
    out_dates: list[dt.date] = [dates[0]]
    out_rows = [0]
    inserted = 0
    for i in range(1, len(dates)):
        delta = (dates[i] - dates[i - 1]).days
        if delta % 7 != 0:
            raise ValueError(
                f"non-weekly spacing between {dates[i - 1]} and {dates[i]}"
            )
        for w in range(1, delta // 7):
            out_dates.append(dates[i - 1] + w * _WEEK)
            out_rows.append(-1)
            inserted += 1
        out_dates.append(dates[i])
        out_rows.append(i)
    if inserted:
        log.info("inserted %d masked row(s) for missing calendar weeks", inserted)
    n, m = len(out_dates), len(columns)
    values = np.full((n, m), np.nan)
    out_mask = np.ones((n, m), dtype=bool)
    for r, src in enumerate(out_rows):
        if src >= 0:
            values[r] = parsed[src]
            out_mask[r] = mask[src]
    values[out_mask] = np.nan
    return SeriesTable(out_dates, columns, values, out_mask)


def load_counts(path) -> SeriesTable:
    """Load a weekly count table: non-negative integer cells or missing."""
    columns, dates, cells = _read_raw(path)
    n, m = len(dates), len(columns)
    parsed = np.full((n, m), np.nan)
    mask = np.zeros((n, m), dtype=bool)
    for i, row in enumerate(cells):
        for j, token in enumerate(row):
            if _is_missing_token(token):
                mask[i, j] = True
                continue
            try:
                value = int(token.strip())
            except ValueError:
                raise ValueError(
                    f"row {i + 2}, column {columns[j]!r}: not an integer count: {token!r}"
                ) from None
            if value < 0:
                raise ValueError(
                    f"row {i + 2}, column {columns[j]!r}: negative count {value}"
                )
            parsed[i, j] = float(value)
    return _expand_weekly(columns, dates, parsed, mask)


def load_covariates(path, names: list[str] | None = None) -> SeriesTable:
    """Load a weekly real-valued table, optionally restricted to ``names``."""
    columns, dates, cells = _read_raw(path)
    n, m = len(dates), len(columns)
    parsed = np.full((n, m), np.nan)
    mask = np.zeros((n, m), dtype=bool)
    for i, row in enumerate(cells):
        for j, token in enumerate(row):
            if _is_missing_token(token):
                mask[i, j] = True
                continue
            try:
                value = float(token)
            except ValueError:
                raise ValueError(
                    f"row {i + 2}, column {columns[j]!r}: not a number: {token!r}"
                ) from None
            if not np.isfinite(value):
                raise ValueError(
                    f"row {i + 2}, column {columns[j]!r}: non-finite value"
                )
            parsed[i, j] = value
    table = _expand_weekly(columns, dates, parsed, mask)
    if names is not None:
        table = table.select(list(names))
    return table


def _format_cell(value: float, as_int: bool) -> str:
    if as_int and float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _write(table: SeriesTable, path, *, as_int: bool, skip_masked_rows: bool) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(table.columns))
        fully = table.fully_masked_rows()
        for i, date in enumerate(table.timestamps):
            if skip_masked_rows and fully[i]:
                continue
            row = [date.isoformat()]
            for j in range(table.n_cols):
                if table.missing_mask[i, j]:
                    row.append("")
                else:
                    row.append(_format_cell(table.values[i, j], as_int))
            writer.writerow(row)


def write_counts(table: SeriesTable, path) -> None:
    """Write a count table, omitting the materialised gap rows.

    Loading the result reproduces the original table, so fully masked rows
    (the inserted calendar gaps) round-trip through their absence.
    """
    _write(table, path, as_int=True, skip_masked_rows=True)


def write_table(table: SeriesTable, path) -> None:
    """Write a real-valued table including fully masked rows (empty cells)."""
    _write(table, path, as_int=False, skip_masked_rows=False)


@dataclass
class CovariateSpec:
    """Record of the square-root standardisation applied to raw covariates."""

    names: list
    means: np.ndarray
    sds: np.ndarray
    transform: str = "sqrt-standardise"

    def inverse(self, values: np.ndarray) -> np.ndarray:
        """Map transformed values back to the raw scale."""
        root = np.asarray(values) * self.sds + self.means
        return root**2


def transform_covariates(raw: SeriesTable) -> tuple[SeriesTable, CovariateSpec]:
    """Square-root then standardise each column by its population moments.

    Masked cells stay masked.  Raises on negative inputs (the square root
    is taken first) and on zero-variance columns.
    """
    n, m = raw.values.shape
    out = np.full((n, m), np.nan)
    means = np.empty(m)
    sds = np.empty(m)
    for j, name in enumerate(raw.columns):
        present = ~raw.missing_mask[:, j]
        vals = raw.values[present, j]
        if vals.size == 0:
            raise ValueError(f"column {name!r}: no observed values")
        if np.any(vals < 0):
            i = int(np.flatnonzero(present)[np.argmax(vals < 0)])
            raise ValueError(
                f"column {name!r}, row {i + 1}: negative value, square-root "
                "transform needs non-negative inputs"
            )
        root = np.sqrt(vals)
        means[j] = root.mean()
        sds[j] = root.std()  # population sd, matching the unit-variance target
        if sds[j] == 0.0:
            raise ValueError(f"column {name!r}: zero variance after square root")
        out[present, j] = (root - means[j]) / sds[j]
    table = SeriesTable(
        timestamps=list(raw.timestamps),
        columns=list(raw.columns),
        values=out,
        missing_mask=raw.missing_mask.copy(),
    )
    spec = CovariateSpec(names=list(raw.columns), means=means, sds=sds)
    return table, spec


_TAXONOMY_RANKS = ("kingdom", "phylum", "class", "order", "family", "genus")


def load_taxonomy(path) -> dict:
    """Load the taxonomy table as a map from series id to rank labels."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [c.strip() for c in next(reader)]
        if header[0] != "otu_id" or tuple(header[1:]) != _TAXONOMY_RANKS:
            raise ValueError(
                "taxonomy header must be otu_id," + ",".join(_TAXONOMY_RANKS)
            )
        out: dict[str, dict[str, str]] = {}
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"row {i}: expected {len(header)} fields")
            otu = row[0].strip()
            if otu in out:
                raise ValueError(f"row {i}: duplicate id {otu!r}")
            out[otu] = {
                rank: ("" if _is_missing_token(tok) else tok.strip())
                for rank, tok in zip(_TAXONOMY_RANKS, row[1:])
            }
    return out
