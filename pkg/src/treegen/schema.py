"""Mixed-type tabular data model.

A table is described by a :class:`TableSchema` (ordered variables, each
continuous / integer / categorical / binary) and held as a :class:`Dataset`:
one numpy column per variable, with NaN (numeric) or -1 (categorical id)
marking missing cells.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError

NA_TOKENS = frozenset({"", "na", "nan"})


class VariableKind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    CATEGORICAL = "categorical"
    BINARY = "binary"

    @property
    def is_numeric(self) -> bool:
        return self in (VariableKind.CONTINUOUS, VariableKind.INTEGER)

    @property
    def is_categorical(self) -> bool:
        return self in (VariableKind.CATEGORICAL, VariableKind.BINARY)


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VariableKind
    categories: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind.is_categorical:
            if not self.categories:
                raise ValidationError(f"variable {self.name!r}: categorical needs categories")
            if len(set(self.categories)) != len(self.categories):
                raise ValidationError(f"variable {self.name!r}: duplicate categories")
            if self.kind is VariableKind.BINARY and len(self.categories) != 2:
                raise ValidationError(f"variable {self.name!r}: binary needs exactly 2 categories")
        elif self.categories is not None:
            raise ValidationError(f"variable {self.name!r}: {self.kind.value} takes no categories")

    @property
    def n_categories(self) -> int:
        return len(self.categories) if self.categories else 0


@dataclass(frozen=True)
class TableSchema:
    variables: tuple[Variable, ...]
    outcome_index: Optional[int] = None

    def __post_init__(self):
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ValidationError("variable names must be unique")
        if self.outcome_index is not None and not 0 <= self.outcome_index < len(self.variables):
            raise ValidationError(f"outcome_index {self.outcome_index} out of range")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    @property
    def outcome(self) -> Optional[Variable]:
        return None if self.outcome_index is None else self.variables[self.outcome_index]

    @property
    def outcome_is_label(self) -> bool:
        """True when the outcome variable is categorical/binary (enables label conditioning)."""
        out = self.outcome
        return out is not None and out.kind.is_categorical

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"no variable named {name!r}") from None

    def with_outcome(self, name: Optional[str]) -> "TableSchema":
        idx = None if name is None else self.index_of(name)
        return replace(self, outcome_index=idx)


@dataclass
class Dataset:
    """n_rows x n_vars table; numeric columns are float64 with NaN for missing,
    categorical columns are int64 category ids with -1 for missing."""

    schema: TableSchema
    columns: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if len(self.columns) != self.schema.n_vars:
            raise ValidationError("column count does not match schema")
        n = None
        cols = []
        for var, col in zip(self.schema.variables, self.columns):
            col = np.asarray(col)
            if var.kind.is_numeric:
                col = col.astype(np.float64, copy=False)
            else:
                col = col.astype(np.int64, copy=False)
                valid = (col == -1) | ((col >= 0) & (col < var.n_categories))
                if not valid.all():
                    raise ValidationError(f"variable {var.name!r}: category id out of vocabulary")
            if n is None:
                n = col.shape[0]
            elif col.shape[0] != n:
                raise ValidationError("ragged columns")
            cols.append(col)
        if not n:
            raise ValidationError("dataset needs at least one row")
        self.columns = cols

    @property
    def n_rows(self) -> int:
        return self.columns[0].shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.schema.index_of(name)]

    def missing_mask(self) -> np.ndarray:
        """Boolean (n_rows, n_vars) array, True where a cell is missing."""
        out = np.zeros((self.n_rows, self.schema.n_vars), dtype=bool)
        for j, (var, col) in enumerate(zip(self.schema.variables, self.columns)):
            out[:, j] = np.isnan(col) if var.kind.is_numeric else (col == -1)
        return out

    def is_complete(self) -> bool:
        return not self.missing_mask().any()

    def take_rows(self, idx: np.ndarray) -> "Dataset":
        return Dataset(self.schema, [c[idx] for c in self.columns])

    def copy(self) -> "Dataset":
        return Dataset(self.schema, [c.copy() for c in self.columns])

    def equals(self, other: "Dataset") -> bool:
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for var, a, b in zip(self.schema.variables, self.columns, other.columns):
            if var.kind.is_numeric:
                same = (a == b) | (np.isnan(a) & np.isnan(b))
            else:
                same = a == b
            if not same.all():
                return False
        return True


def is_na_token(text: str) -> bool:
    return text.strip().lower() in NA_TOKENS


def _parse_float(text: str) -> Optional[float]:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Read a UTF-8 comma-separated file; first row is the header."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise ValidationError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
    return header, body


def infer_schema(header: Sequence[str], cells: Sequence[Sequence[str]],
                 outcome: Optional[str] = None) -> TableSchema:
    """Infer variable kinds from raw text cells.

    A column is categorical when any non-missing cell is non-numeric text,
    integer when every numeric cell is integral, continuous otherwise; a
    2-category categorical becomes binary. Category vocabularies are sorted.
    """
    if not cells:
        raise ValidationError("empty table")
    variables = []
    for j, name in enumerate(header):
        texts = [row[j] for row in cells if not is_na_token(row[j])]
        if not texts:
            raise ValidationError(f"column {name!r} has no non-missing cells")
        values = [_parse_float(t) for t in texts]
        if any(v is None for v in values):
            vocab = tuple(sorted(set(texts)))
            kind = VariableKind.BINARY if len(vocab) == 2 else VariableKind.CATEGORICAL
            variables.append(Variable(name, kind, vocab))
        elif all(float(v).is_integer() for v in values):
            variables.append(Variable(name, VariableKind.INTEGER))
        else:
            variables.append(Variable(name, VariableKind.CONTINUOUS))
    schema = TableSchema(tuple(variables))
    if outcome is not None:
        schema = schema.with_outcome(outcome)
    return schema


def dataset_from_text(schema: TableSchema, cells: Sequence[Sequence[str]]) -> Dataset:
    """Parse text cells against a schema (NA tokens become missing)."""
    n = len(cells)
    columns = []
    for j, var in enumerate(schema.variables):
        if var.kind.is_numeric:
            col = np.full(n, np.nan)
            for i, row in enumerate(cells):
                if not is_na_token(row[j]):
                    v = _parse_float(row[j])
                    if v is None:
                        raise ValidationError(f"variable {var.name!r}, row {i + 1}: not numeric: {row[j]!r}")
                    col[i] = v
        else:
            lookup = {c: k for k, c in enumerate(var.categories)}
            col = np.full(n, -1, dtype=np.int64)
            for i, row in enumerate(cells):
                if not is_na_token(row[j]):
                    try:
                        col[i] = lookup[row[j]]
                    except KeyError:
                        raise ValidationError(
                            f"variable {var.name!r}, row {i + 1}: category {row[j]!r} not in vocabulary"
                        ) from None
        columns.append(col)
    return Dataset(schema, columns)


def load_dataset(path, schema: Optional[TableSchema] = None,
                 outcome: Optional[str] = None) -> Dataset:
    header, cells = read_csv(path)
    if schema is None:
        schema = infer_schema(header, cells, outcome=outcome)
    else:
        if schema.names != list(header):
            raise ValidationError(f"{path}: header does not match schema variables")
        if outcome is not None:
            schema = schema.with_outcome(outcome)
    return dataset_from_text(schema, cells)


def format_cell(var: Variable, value) -> str:
    if var.kind.is_categorical:
        return "NA" if value == -1 else var.categories[int(value)]
    if np.isnan(value):
        return "NA"
    if var.kind is VariableKind.INTEGER:
        return str(int(round(float(value))))
    return repr(float(value))


def write_csv(path, data: Dataset, text_override: Optional[dict[tuple[int, int], str]] = None):
    """Write a dataset as CSV; text_override maps (row, var) to a verbatim cell."""
    text_override = text_override or {}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data.schema.names)
        for i in range(data.n_rows):
            row = []
            for j, var in enumerate(data.schema.variables):
                cell = text_override.get((i, j))
                row.append(cell if cell is not None else format_cell(var, data.columns[j][i]))
            w.writerow(row)


def parse_schema_file(path) -> tuple[TableSchema, Optional[str]]:
    """Parse the JSON schema sidecar.

    Grammar: {"outcome": name-or-null,
              "variables": [{"name": str, "kind": str, "categories": [str, ...]?}, ...]}
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid schema file: {exc}") from None
    if not isinstance(doc, dict) or "variables" not in doc:
        raise ValidationError(f"{path}: schema file needs a 'variables' list")
    variables = []
    for entry in doc["variables"]:
        try:
            kind = VariableKind(entry["kind"])
        except (KeyError, ValueError):
            raise ValidationError(f"{path}: bad variable entry {entry!r}") from None
        cats = entry.get("categories")
        variables.append(Variable(entry["name"], kind, tuple(cats) if cats else None))
    schema = TableSchema(tuple(variables))
    outcome = doc.get("outcome")
    if outcome is not None:
        schema = schema.with_outcome(outcome)
    return schema, outcome
