"""Immutable tabular dataset with declared bounds and exact query answers.

A dataset is frozen once loaded. That matters beyond hygiene: partial noise
reuse recovers the old noise as (old answer - current true answer), which is
only the original noise while the true answer has not moved. Replacing the
data means starting a new ledger epoch, never mutating in place.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

from .queries import Predicate, QueryDescriptor, QueryKind, Schema, validate_descriptor


class DatasetError(ValueError):
    """Problem loading or querying a dataset."""


class EmptySelectionError(DatasetError):
    """MEAN over zero matching rows has no value."""


@dataclass(frozen=True)
class Dataset:
    schema: Schema
    rows: tuple[tuple[float, ...], ...]

    @property
    def n(self) -> int:
        return len(self.rows)


def load_csv(path: str | Path, schema: Schema) -> Dataset:
    """Load a comma-separated file whose header matches the schema exactly.

    Values are validated against each column's declared [lo, hi]; a single
    bad cell rejects the whole file, naming its line and column. Line
    numbers count from 1 with the header on line 1.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file, expected a header row") from None
        if tuple(h.strip() for h in header) != schema.names:
            raise DatasetError(
                f"{path}: header {header} does not match schema columns {list(schema.names)}"
            )
        rows: list[tuple[float, ...]] = []
        for lineno, cells in enumerate(reader, start=2):
            if not cells:
                continue
            if len(cells) != len(schema.columns):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(schema.columns)} cells, got {len(cells)}"
                )
            parsed = []
            for col, cell in zip(schema.columns, cells):
                try:
                    value = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {col.name!r}"
                    ) from None
                if not math.isfinite(value) or not col.lo <= value <= col.hi:
                    raise DatasetError(
                        f"{path}:{lineno}: value {value} in column {col.name!r} "
                        f"outside bounds [{col.lo}, {col.hi}]"
                    )
                parsed.append(value)
            rows.append(tuple(parsed))
    return Dataset(schema=schema, rows=tuple(rows))


def _matching_rows(ds: Dataset, predicate: Predicate | None) -> list[tuple[float, ...]]:
    if predicate is None:
        return list(ds.rows)
    col = ds.schema.index_of(predicate.column)
    return [row for row in ds.rows if predicate.matches(row[col])]


def evaluate(desc: QueryDescriptor, ds: Dataset) -> float:
    """Exact (noise-free) answer; deterministic and side-effect free."""
    validate_descriptor(desc, ds.schema)
    rows = _matching_rows(ds, desc.predicate)
    if desc.kind is QueryKind.COUNT:
        return float(len(rows))
    assert desc.column is not None
    col = ds.schema.index_of(desc.column)
    values = [row[col] for row in rows]
    if desc.kind is QueryKind.SUM:
        return math.fsum(values)
    if not values:
        raise EmptySelectionError(f"MEAN over zero matching rows: {desc.render()}")
    return math.fsum(values) / len(values)
