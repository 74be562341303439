"""Typed, column-oriented datasets parsed from CSV or JSONLines bytes.

Numeric columns are stored as read-only ``float64`` arrays with ``NaN`` for
missing cells; categorical columns as read-only object arrays with ``None``
for missing cells.  List-valued JSONLines cells become tuples inside a
categorical column.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateFacet,
    EmptyDataset,
    MalformedRow,
    MissingCell,
    MissingColumn,
    MixedSchema,
    NonNumericThreshold,
)

_NUMERIC_TOKEN = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")


class ColumnKind(str, enum.Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


def is_numeric_token(token: str) -> bool:
    if not _NUMERIC_TOKEN.match(token):
        return False
    return math.isfinite(float(token))


def format_number(value: float) -> str:
    """Shortest text that parses back to ``value``; integral values lose the '.0'."""
    if value.is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    values: np.ndarray

    def missing_mask(self) -> np.ndarray:
        if self.kind is ColumnKind.NUMERIC:
            return np.isnan(self.values)
        return np.array([v is None for v in self.values], dtype=bool)

    def __len__(self) -> int:
        return len(self.values)


def make_column(name: str, cells: Sequence[Any], kind: ColumnKind | None = None) -> Column:
    """Build a column from raw cells (strings, numbers, None or lists).

    Without ``kind`` the kind is inferred: numeric iff every non-missing cell
    is a finite real (a number, or a string that parses as one).
    """
    if kind is None:
        kind = ColumnKind.NUMERIC if all(_is_real(c) for c in cells if c is not None) else ColumnKind.CATEGORICAL
    if kind is ColumnKind.NUMERIC:
        out = np.empty(len(cells), dtype=np.float64)
        for i, c in enumerate(cells):
            if c is None:
                out[i] = np.nan
            elif not _is_real(c):
                raise ValueError(f"column {name!r}: cell {c!r} is not a finite real")
            else:
                out[i] = float(c)
    else:
        out = np.empty(len(cells), dtype=object)
        for i, c in enumerate(cells):
            if isinstance(c, list):
                c = tuple(c)
            elif isinstance(c, float):
                c = format_number(c)
            elif isinstance(c, int) and not isinstance(c, bool):
                c = str(c)
            out[i] = c
    return Column(name, kind, _freeze(out))


def _is_real(cell: Any) -> bool:
    if isinstance(cell, bool):
        return False
    if isinstance(cell, (int, float)):
        return math.isfinite(cell)
    if isinstance(cell, str):
        return is_numeric_token(cell)
    return False


@dataclass(frozen=True)
class TabularDataset:
    columns: tuple[Column, ...]
    header_present: bool = True
    # headerless file whose column names came from configuration
    names_given: bool = False
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if any(not n for n in names):
            raise ValueError("column names must be nonempty")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in {names}")
        lengths = {len(c) for c in self.columns}
        if len(lengths) > 1:
            raise ValueError("columns have unequal lengths")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    @property
    def row_count(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def column(self, name: str) -> Column:
        try:
            return self.columns[self._index[name]]
        except KeyError:
            raise MissingColumn(f"no column named {name!r}") from None

    def resolve(self, ref: str | int) -> str:
        """Turn a column reference into a column name.

        Datasets with a header (or configured names) are addressed by name,
        headerless ones by 0-based position; mixing the two is rejected.
        """
        by_name = self.header_present or self.names_given
        if isinstance(ref, bool):
            raise MissingColumn(f"invalid column reference {ref!r}")
        if isinstance(ref, int):
            if by_name:
                raise MissingColumn(f"dataset has a header; address column {ref} by name")
            if not 0 <= ref < len(self.columns):
                raise MissingColumn(f"column index {ref} out of range")
            return self.columns[ref].name
        if not by_name:
            raise MissingColumn(f"dataset has no header; address {ref!r} by index")
        if ref not in self._index:
            raise MissingColumn(f"no column named {ref!r}")
        return ref

    def take(self, rows: np.ndarray | Sequence[int]) -> "TabularDataset":
        rows = np.asarray(rows, dtype=np.intp)
        cols = tuple(Column(c.name, c.kind, _freeze(c.values[rows].copy())) for c in self.columns)
        return TabularDataset(cols, self.header_present, self.names_given)

    def select(self, names: Iterable[str]) -> "TabularDataset":
        return TabularDataset(tuple(self.column(n) for n in names), self.header_present, self.names_given)

    def retype(self, name: str, kind: ColumnKind) -> "TabularDataset":
        col = self.column(name)
        if col.kind is kind:
            return self
        if kind is ColumnKind.CATEGORICAL:
            cells = [None if np.isnan(v) else format_number(float(v)) for v in col.values]
        else:
            cells = list(col.values)
        new = make_column(name, cells, kind)
        cols = tuple(new if c.name == name else c for c in self.columns)
        return TabularDataset(cols, self.header_present, self.names_given)

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        """Row-major feature matrix: float64 if every column is numeric, else object."""
        cols = [self.column(n) for n in names]
        if all(c.kind is ColumnKind.NUMERIC for c in cols):
            if not cols:
                return np.empty((self.row_count, 0))
            return np.column_stack([c.values for c in cols]).astype(np.float64)
        out = np.empty((self.row_count, len(cols)), dtype=object)
        for j, c in enumerate(cols):
            out[:, j] = c.values if c.kind is ColumnKind.CATEGORICAL else c.values.astype(object)
        return out

    def kinds(self, names: Sequence[str] | None = None) -> list[ColumnKind]:
        return [self.column(n).kind for n in (names or self.names)]


# ---------------------------------------------------------------- parsing

def parse_dataset(
    data: bytes,
    format: str = "csv",
    header_hint: bool | None = None,
    headers: Sequence[str] | None = None,
) -> TabularDataset:
    """Parse CSV or JSONLines bytes into a :class:`TabularDataset`.

    ``headers`` names the columns of a headerless CSV file; passing it
    implies ``header_hint=False``.
    """
    fmt = _normalize_format(format)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedRow(data.count(b"\n", 0, e.start) + 1, "not valid UTF-8") from None
    if text.startswith("﻿"):
        text = text[1:]
    if fmt == "csv":
        return _parse_csv(text, header_hint, headers)
    return _parse_jsonlines(text)


def _normalize_format(fmt: str) -> str:
    f = fmt.lower()
    if f in ("csv", "text/csv"):
        return "csv"
    if f in ("jsonlines", "application/jsonlines", "jsonl"):
        return "jsonlines"
    raise ValueError(f"unsupported dataset format {fmt!r}")


def _parse_csv(text: str, header_hint: bool | None, headers: Sequence[str] | None) -> TabularDataset:
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=",", quotechar='"', strict=True)
    rows: list[list[str]] = []
    lines: list[int] = []
    try:
        for row in reader:
            if not row:
                continue
            rows.append(row)
            lines.append(reader.line_num)
    except csv.Error as e:
        raise MalformedRow(reader.line_num, str(e)) from None
    if not rows:
        raise EmptyDataset("no rows")
    width = len(rows[0])
    for row, line in zip(rows, lines):
        if len(row) != width:
            raise MalformedRow(line, f"expected {width} fields, found {len(row)}")

    if headers is not None:
        has_header = False
    elif header_hint is None:
        has_header = _looks_like_header(rows)
    else:
        has_header = header_hint
    if has_header:
        names = [h.strip() for h in rows[0]]
        body = rows[1:]
    else:
        names = list(headers) if headers is not None else [f"col{j}" for j in range(width)]
        if len(names) != width:
            raise MalformedRow(lines[0], f"{len(names)} headers supplied for {width} fields")
        body = rows
    if not body:
        raise EmptyDataset("header row only")
    cols = []
    for j, name in enumerate(names):
        cells = [r[j] if r[j] != "" else None for r in body]
        cols.append(make_column(name, cells))
    return TabularDataset(tuple(cols), header_present=has_header, names_given=headers is not None)


def _looks_like_header(rows: list[list[str]]) -> bool:
    if len(rows) < 2:
        return False
    first, rest = rows[0], rows[1:]
    for j, token in enumerate(first):
        if is_numeric_token(token):
            continue
        below = [r[j] for r in rest if r[j] != ""]
        if below and all(is_numeric_token(t) for t in below):
            return True
    return False


def _parse_jsonlines(text: str) -> TabularDataset:
    records: list[dict] = []
    keys: list[str] | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise MalformedRow(lineno, f"invalid JSON: {e.msg}") from None
        if not isinstance(rec, dict):
            raise MalformedRow(lineno, "expected a JSON object")
        for k, v in rec.items():
            if isinstance(v, dict) or (isinstance(v, list) and any(isinstance(x, (dict, list)) for x in v)):
                raise MalformedRow(lineno, f"field {k!r} is not flat")
        if keys is None:
            keys = list(rec)
        elif set(rec) != set(keys):
            raise MixedSchema(lineno, f"keys {sorted(rec)} differ from {sorted(keys)}")
        records.append(rec)
    if not records:
        raise EmptyDataset("no records")
    cols = []
    for k in keys:
        cells = [r[k] for r in records]
        numeric = all(
            isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c)
            for c in cells if c is not None
        )
        cols.append(make_column(k, cells, ColumnKind.NUMERIC if numeric else ColumnKind.CATEGORICAL))
    return TabularDataset(tuple(cols), header_present=True)


def to_csv(ds: TabularDataset) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if ds.header_present:
        w.writerow(ds.names)
    for i in range(ds.row_count):
        w.writerow([_cell_text(c, i) for c in ds.columns])
    return buf.getvalue().encode("utf-8")


def _cell_text(col: Column, i: int) -> str:
    v = col.values[i]
    if col.kind is ColumnKind.NUMERIC:
        return "" if np.isnan(v) else format_number(float(v))
    if v is None:
        return ""
    if isinstance(v, tuple):
        return json.dumps(list(v))
    return str(v)


# ---------------------------------------------------------------- outcomes and groups

@dataclass(frozen=True)
class OutcomeSpec:
    label_column: str | int
    positive_values: tuple | None = None
    threshold: float | None = None

    def __post_init__(self):
        if (self.positive_values is None) == (self.threshold is None):
            raise ValueError("exactly one of positive_values / threshold must be set")
        if self.positive_values is not None and len(self.positive_values) == 0:
            raise ValueError("positive_values must be nonempty")

    @classmethod
    def from_config(cls, label: str | int, values_or_threshold) -> "OutcomeSpec":
        if isinstance(values_or_threshold, (list, tuple)):
            return cls(label, positive_values=tuple(values_or_threshold))
        return cls(label, threshold=float(values_or_threshold))


@dataclass(frozen=True)
class FacetSpec:
    facet_column: str | int
    disadvantaged_values: tuple | None = None
    threshold: float | None = None
    # numeric facets: True means value <= threshold puts a row in group d
    at_or_below: bool = True

    def __post_init__(self):
        if (self.disadvantaged_values is None) == (self.threshold is None):
            raise ValueError("exactly one of disadvantaged_values / threshold must be set")

    @classmethod
    def from_config(cls, ref: str | int, value_or_threshold, at_or_below: bool = True) -> "FacetSpec":
        if isinstance(value_or_threshold, (list, tuple)):
            return cls(ref, disadvantaged_values=tuple(value_or_threshold))
        return cls(ref, threshold=float(value_or_threshold), at_or_below=at_or_below)


def member_mask(col: Column, values: Iterable) -> np.ndarray:
    """Rows whose cell equals one of ``values`` (numbers compare numerically)."""
    values = list(values)
    if col.kind is ColumnKind.NUMERIC:
        targets = [float(v) for v in values if _is_real(v)]
        return np.isin(col.values, np.array(targets, dtype=np.float64))
    targets = set()
    for v in values:
        if isinstance(v, float):
            v = format_number(v)
        elif isinstance(v, int) and not isinstance(v, bool):
            v = str(v)
        targets.add(v)
    return np.array([c in targets for c in col.values], dtype=bool)


def binarize_labels(ds: TabularDataset, spec: OutcomeSpec) -> np.ndarray:
    col = ds.column(ds.resolve(spec.label_column))
    missing = col.missing_mask()
    if missing.any():
        raise MissingCell(f"label column {col.name!r} has a missing cell at row {int(np.argmax(missing))}")
    if spec.threshold is not None:
        if col.kind is not ColumnKind.NUMERIC:
            raise NonNumericThreshold(f"label column {col.name!r} is not numeric")
        return (col.values > spec.threshold).astype(np.int8)
    return member_mask(col, spec.positive_values).astype(np.int8)


def partition_groups(ds: TabularDataset, spec: FacetSpec) -> np.ndarray:
    """Boolean vector, True for rows in the disadvantaged group d."""
    col = ds.column(ds.resolve(spec.facet_column))
    missing = col.missing_mask()
    if missing.any():
        raise MissingCell(f"facet column {col.name!r} has a missing cell at row {int(np.argmax(missing))}")
    if spec.threshold is not None:
        if col.kind is not ColumnKind.NUMERIC:
            raise NonNumericThreshold(f"facet column {col.name!r} is not numeric")
        is_d = col.values <= spec.threshold if spec.at_or_below else col.values > spec.threshold
    else:
        is_d = member_mask(col, spec.disadvantaged_values)
    if is_d.all() or not is_d.any():
        which = "a" if is_d.all() else "d"
        raise DegenerateFacet(f"facet {col.name!r}: group {which} is empty")
    return is_d
