"""Query descriptors, column schemas, and their canonical byte encoding.

The canonical encoding defined here is the identity used everywhere
downstream: the SHA-256 digest of an encoded descriptor is the query key
that reuse matching and ledger history are indexed by. Two descriptors get
the same key iff their encodings are byte-identical, so the encoding is
deliberately rigid: fixed field order, length-prefixed UTF-8 strings,
IEEE-754 big-endian doubles, one presence byte per optional field.

Privacy parameters are *not* part of the key: the same question asked at a
different (epsilon, delta) must land on the same history bucket.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Any


class QueryKind(str, Enum):
    COUNT = "COUNT"
    SUM = "SUM"
    MEAN = "MEAN"


COMPARATORS = ("<", "<=", "=", ">=", ">")


class UnknownColumnError(ValueError):
    """A descriptor references a column the schema does not declare."""


class UnsupportedQueryError(ValueError):
    """The query kind or comparator is not one the engine supports."""


@dataclass(frozen=True)
class ColumnSpec:
    """A numeric column with declared inclusive bounds."""

    name: str
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("column name must be non-empty")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"bounds for column {self.name!r} must be finite")
        if self.lo > self.hi:
            raise ValueError(
                f"column {self.name!r} has lo={self.lo} > hi={self.hi}"
            )


@dataclass(frozen=True)
class Schema:
    """Ordered set of bounded numeric columns."""

    columns: tuple[ColumnSpec, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate column names in schema: {names}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownColumnError(f"unknown column {name!r}; schema has {self.names}")

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise UnknownColumnError(f"unknown column {name!r}; schema has {self.names}")

    def to_dict(self) -> list[dict[str, Any]]:
        return [{"name": c.name, "lo": c.lo, "hi": c.hi} for c in self.columns]

    @classmethod
    def from_dict(cls, cols: list[dict[str, Any]]) -> Schema:
        return cls(
            tuple(
                ColumnSpec(name=c["name"], lo=float(c["lo"]), hi=float(c["hi"]))
                for c in cols
            )
        )


@dataclass(frozen=True)
class Predicate:
    """Single-column comparison filter, e.g. ``age > 30``."""

    column: str
    comparator: str
    constant: float

    def __post_init__(self) -> None:
        if self.comparator not in COMPARATORS:
            raise UnsupportedQueryError(
                f"comparator {self.comparator!r} not in {COMPARATORS}"
            )
        c = float(self.constant)
        if not math.isfinite(c):
            raise ValueError(f"predicate constant must be finite, got {c}")
        # +0.0 normalization: -0.0 and 0.0 must produce the same key bytes
        object.__setattr__(self, "constant", c + 0.0)

    def matches(self, value: float) -> bool:
        if self.comparator == "<":
            return value < self.constant
        if self.comparator == "<=":
            return value <= self.constant
        if self.comparator == "=":
            return value == self.constant
        if self.comparator == ">=":
            return value >= self.constant
        return value > self.constant


@dataclass(frozen=True)
class QueryDescriptor:
    """What is being asked: kind, target column, optional row filter.

    COUNT ranges over whole rows and takes no column; SUM and MEAN require
    one. The descriptor carries no privacy parameters on purpose (see module
    docstring).
    """

    kind: QueryKind
    column: str | None = None
    predicate: Predicate | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.kind, QueryKind):
            object.__setattr__(self, "kind", QueryKind(self.kind))
        if self.kind is QueryKind.COUNT:
            if self.column is not None:
                raise UnsupportedQueryError("COUNT takes no target column")
        elif self.column is None:
            raise UnsupportedQueryError(f"{self.kind.value} requires a target column")

    def render(self) -> str:
        """Human-readable form, e.g. ``SUM(salary) WHERE age > 30``."""
        target = "*" if self.column is None else self.column
        text = f"{self.kind.value}({target})"
        if self.predicate is not None:
            p = self.predicate
            text += f" WHERE {p.column} {p.comparator} {p.constant:g}"
        return text

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "column": self.column}
        if self.predicate is None:
            d["predicate"] = None
        else:
            d["predicate"] = {
                "column": self.predicate.column,
                "comparator": self.predicate.comparator,
                "constant": self.predicate.constant,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> QueryDescriptor:
        pred = d.get("predicate")
        return cls(
            kind=QueryKind(d["kind"]),
            column=d.get("column"),
            predicate=None
            if pred is None
            else Predicate(
                column=pred["column"],
                comparator=pred["comparator"],
                constant=float(pred["constant"]),
            ),
        )


def validate_descriptor(desc: QueryDescriptor, schema: Schema) -> None:
    """Raise if the descriptor references anything the schema lacks."""
    if desc.column is not None:
        schema.column(desc.column)
    if desc.predicate is not None:
        schema.column(desc.predicate.column)


def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def _enc_f64(x: float) -> bytes:
    return struct.pack(">d", x)


def _enc_opt(payload: bytes | None) -> bytes:
    return b"\x00" if payload is None else b"\x01" + payload


def canonical_bytes(desc: QueryDescriptor) -> bytes:
    """Canonical encoding of a descriptor (see module docstring)."""
    pred = desc.predicate
    pred_bytes = None
    if pred is not None:
        pred_bytes = _enc_str(pred.column) + _enc_str(pred.comparator) + _enc_f64(pred.constant)
    return (
        _enc_str(desc.kind.value)
        + _enc_opt(None if desc.column is None else _enc_str(desc.column))
        + _enc_opt(pred_bytes)
    )


def canonical_key(desc: QueryDescriptor) -> bytes:
    """32-byte digest identifying the query for reuse and history lookups."""
    return hashlib.sha256(canonical_bytes(desc)).digest()
