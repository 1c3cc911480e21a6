"""Typed tables: schema definition, CSV ingestion/emission, validation.

Tables are immutable after construction and safe to share across threads.
The on-disk format is RFC-4180 CSV with a header row plus a JSON schema
sidecar ({columns: [{name, kind, domain?, min?, max?}]}).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ArtifactIOError, ValidationError

NUMERICAL = "numerical"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # NUMERICAL or CATEGORICAL
    domain: tuple[str, ...] | None = None  # categorical only
    min: float | None = None  # numerical only, optional
    max: float | None = None


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if any(not n for n in names):
            raise ValidationError("column names must be non-empty")
        if len(set(names)) != len(names):
            raise ValidationError("column names must be unique")
        for c in self.columns:
            if c.kind not in (NUMERICAL, CATEGORICAL):
                raise ValidationError(f"unknown column kind {c.kind!r}")
            if c.kind == CATEGORICAL:
                if not c.domain:
                    raise ValidationError(f"categorical column {c.name!r} has empty domain")
                if len(set(c.domain)) != len(c.domain):
                    raise ValidationError(f"categorical domain of {c.name!r} has duplicates")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def numerical_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == NUMERICAL]

    def categorical_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.columns) if c.kind == CATEGORICAL]

    def to_json_obj(self) -> dict:
        cols = []
        for c in self.columns:
            obj: dict = {"name": c.name, "kind": c.kind}
            if c.kind == CATEGORICAL:
                obj["domain"] = list(c.domain)
            else:
                if c.min is not None:
                    obj["min"] = c.min
                if c.max is not None:
                    obj["max"] = c.max
            cols.append(obj)
        return {"columns": cols}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "TableSchema":
        cols = []
        for c in obj["columns"]:
            cols.append(
                Column(
                    name=c["name"],
                    kind=c["kind"],
                    domain=tuple(c["domain"]) if "domain" in c else None,
                    min=c.get("min"),
                    max=c.get("max"),
                )
            )
        return cls(columns=tuple(cols))


def save_schema(schema: TableSchema, path: str | Path) -> None:
    try:
        Path(path).write_text(json.dumps(schema.to_json_obj(), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactIOError(f"cannot write schema {path}: {e}") from e


def load_schema(path: str | Path) -> TableSchema:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ArtifactIOError(f"cannot read schema {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ValidationError(f"schema file {path} is not valid JSON: {e}") from e
    return TableSchema.from_json_obj(obj)


@dataclass(frozen=True)
class Table:
    schema: TableSchema
    rows: tuple[tuple, ...] = field(default=())

    def __post_init__(self):
        ncols = len(self.schema.columns)
        domains = {
            i: set(c.domain) for i, c in enumerate(self.schema.columns) if c.kind == CATEGORICAL
        }
        for ridx, row in enumerate(self.rows):
            if len(row) != ncols:
                raise ValidationError(f"row {ridx} has {len(row)} cells, expected {ncols}")
            for cidx, cell in enumerate(row):
                col = self.schema.columns[cidx]
                if col.kind == NUMERICAL:
                    if not isinstance(cell, (int, float)) or isinstance(cell, bool) or not math.isfinite(cell):
                        raise ValidationError(
                            f"row {ridx}, column {col.name!r}: non-finite or non-numeric cell {cell!r}"
                        )
                else:
                    if cell not in domains[cidx]:
                        raise ValidationError(
                            f"row {ridx}, column {col.name!r}: value {cell!r} not in domain"
                        )

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        idx = self.schema.names.index(name)
        return [r[idx] for r in self.rows]


def _format_cell(cell) -> str:
    if isinstance(cell, str):
        return cell
    # repr of a float is the shortest string that round-trips exactly
    return repr(float(cell))


def save_table(table: Table, path: str | Path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(table.schema.names)
            for row in table.rows:
                writer.writerow([_format_cell(c) for c in row])
    except OSError as e:
        raise ArtifactIOError(f"cannot write table {path}: {e}") from e


def load_table(path: str | Path, schema: TableSchema) -> Table:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty file") from None
            raw_rows = list(reader)
    except OSError as e:
        raise ArtifactIOError(f"cannot read table {path}: {e}") from e
    if header != schema.names:
        raise ValidationError(
            f"{path}: header {header} does not match schema columns {schema.names}"
        )
    kinds = [c.kind for c in schema.columns]
    rows = []
    for ridx, raw in enumerate(raw_rows):
        if len(raw) != len(kinds):
            raise ValidationError(f"{path}: row {ridx} has {len(raw)} cells")
        cells = []
        for cell, kind, col in zip(raw, kinds, schema.columns):
            if kind == NUMERICAL:
                if cell == "":
                    raise ValidationError(f"{path}: row {ridx}, column {col.name!r}: missing value")
                try:
                    cells.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: row {ridx}, column {col.name!r}: non-numeric cell {cell!r}"
                    ) from None
            else:
                cells.append(cell)
        rows.append(tuple(cells))
    return Table(schema=schema, rows=tuple(rows))


def infer_schema(path: str | Path, categorical_threshold: int = 20) -> TableSchema:
    """Infer a schema from a headered CSV.

    A column is categorical iff it has at most ``categorical_threshold``
    distinct string values or any value fails to parse as a number.
    Categorical domains are sorted lexicographically.
    """
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: empty file") from None
            raw_rows = list(reader)
    except OSError as e:
        raise ArtifactIOError(f"cannot read {path}: {e}") from e
    if not header:
        raise ValidationError(f"{path}: header row missing")
    cols = []
    for cidx, name in enumerate(header):
        values = []
        for ridx, raw in enumerate(raw_rows):
            if len(raw) != len(header):
                raise ValidationError(f"{path}: row {ridx} has {len(raw)} cells")
            values.append(raw[cidx])
        all_numeric = True
        for v in values:
            try:
                float(v)
            except ValueError:
                all_numeric = False
                break
        distinct = sorted(set(values))
        if not all_numeric or len(distinct) <= categorical_threshold:
            cols.append(Column(name=name, kind=CATEGORICAL, domain=tuple(distinct)))
        else:
            nums = [float(v) for v in values]
            cols.append(Column(name=name, kind=NUMERICAL, min=min(nums), max=max(nums)))
    return TableSchema(columns=tuple(cols))
