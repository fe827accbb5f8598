"""Reversible encoding between raw tables and dense numeric matrices.

Numeric variables are min-max mapped to [-1, 1]; a K-category variable
becomes K-1 dummy columns with the first category as the all-zeros
reference. Missing cells become NaN in every encoded column they span.
Decoding clips numerics back into the fitted range, rounds integers, and
snaps each dummy block to the nearest category vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .schema import Dataset, TableSchema, VariableKind


@dataclass(frozen=True)
class NumericRange:
    lo: float
    hi: float

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi


@dataclass(frozen=True)
class Encoder:
    """Fitted transform state: one NumericRange per numeric variable (None for
    categorical), plus the dummy-column span of every variable."""

    schema: TableSchema
    ranges: tuple[Optional[NumericRange], ...]
    widths: tuple[int, ...]

    @property
    def encoded_width(self) -> int:
        return sum(self.widths)

    def var_span(self, var_idx: int, exclude: frozenset[int] = frozenset()) -> tuple[int, int]:
        """(start, stop) of a variable's columns in a matrix built without `exclude`."""
        if var_idx in exclude:
            raise ValidationError(f"variable {var_idx} excluded from this matrix")
        start = sum(w for k, w in enumerate(self.widths) if k < var_idx and k not in exclude)
        return start, start + self.widths[var_idx]

    def width_without(self, exclude: frozenset[int]) -> int:
        return sum(w for k, w in enumerate(self.widths) if k not in exclude)

    def column_map(self, exclude: frozenset[int] = frozenset()) -> list[tuple[int, Optional[int]]]:
        """Encoded column -> (variable index, category index or None)."""
        out = []
        for k, var in enumerate(self.schema.variables):
            if k in exclude:
                continue
            if var.kind.is_numeric:
                out.append((k, None))
            else:
                out.extend((k, c) for c in range(1, var.n_categories))
        return out


def fit_encoder(data: Dataset) -> Encoder:
    """Fit per-variable min/max on non-missing cells; vocabularies come from
    the schema. A constant column gets a degenerate range and encodes to 0."""
    ranges = []
    widths = []
    for var, col in zip(data.schema.variables, data.columns):
        if var.kind.is_numeric:
            finite = col[~np.isnan(col)]
            if finite.size == 0:
                raise ValidationError(f"variable {var.name!r}: no non-missing cells to fit")
            ranges.append(NumericRange(float(finite.min()), float(finite.max())))
            widths.append(1)
        else:
            ranges.append(None)
            widths.append(var.n_categories - 1)
    return Encoder(data.schema, tuple(ranges), tuple(widths))


def encode(enc: Encoder, data: Dataset, exclude: frozenset[int] = frozenset()) -> np.ndarray:
    """Encode a dataset to a float64 matrix (NaN marks missing cells)."""
    if data.schema != enc.schema:
        raise ValidationError("dataset schema does not match encoder")
    n = data.n_rows
    out = np.empty((n, enc.width_without(exclude)), dtype=np.float64)
    pos = 0
    for k, var in enumerate(enc.schema.variables):
        if k in exclude:
            continue
        col = data.columns[k]
        w = enc.widths[k]
        if var.kind.is_numeric:
            rng = enc.ranges[k]
            if rng.degenerate:
                vals = np.where(np.isnan(col), np.nan, 0.0)
            else:
                vals = 2.0 * (col - rng.lo) / (rng.hi - rng.lo) - 1.0
            out[:, pos] = vals
        else:
            block = np.zeros((n, w))
            ids = col
            for c in range(1, var.n_categories):
                block[:, c - 1] = ids == c
            block[ids == -1] = np.nan
            out[:, pos:pos + w] = block
        pos += w
    return out


def decode(enc: Encoder, matrix: np.ndarray, exclude: frozenset[int] = frozenset()) -> list[np.ndarray]:
    """Decode a matrix back to raw columns (one array per non-excluded variable).

    The output is complete: NaN inputs are not expected here, and every value
    is clipped/rounded into the fitted domain.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != enc.width_without(exclude):
        raise ValidationError(
            f"matrix width {matrix.shape[1] if matrix.ndim == 2 else '?'} "
            f"!= encoded width {enc.width_without(exclude)}"
        )
    columns = []
    pos = 0
    for k, var in enumerate(enc.schema.variables):
        if k in exclude:
            continue
        w = enc.widths[k]
        block = matrix[:, pos:pos + w]
        if var.kind.is_numeric:
            rng = enc.ranges[k]
            if rng.degenerate:
                col = np.full(matrix.shape[0], rng.lo)
            else:
                clipped = np.clip(block[:, 0], -1.0, 1.0)
                col = (clipped + 1.0) / 2.0 * (rng.hi - rng.lo) + rng.lo
            if var.kind is VariableKind.INTEGER:
                col = np.round(col)
            columns.append(col)
        else:
            columns.append(nearest_category(block, var.n_categories))
        pos += w
    return columns


def nearest_category(block: np.ndarray, n_categories: int) -> np.ndarray:
    """Snap dummy rows to the category whose dummy vector is closest in
    squared distance; ties break to the lowest category index."""
    n, w = block.shape
    if w != n_categories - 1:
        raise ValidationError("dummy block width mismatch")
    # category 0 is the all-zeros reference; category c has a 1 in column c-1
    d = np.empty((n, n_categories))
    sq = np.square(block).sum(axis=1)
    d[:, 0] = sq
    for c in range(1, n_categories):
        d[:, c] = sq - 2.0 * block[:, c - 1] + 1.0
    return np.argmin(d, axis=1).astype(np.int64)


def decode_dataset(enc: Encoder, matrix: np.ndarray,
                   overrides: Optional[dict[int, np.ndarray]] = None) -> Dataset:
    """Decode a full-width matrix into a Dataset; `overrides` supplies raw
    columns for variables absent from the matrix (e.g. a sampled label)."""
    overrides = overrides or {}
    exclude = frozenset(overrides)
    decoded = decode(enc, matrix, exclude=exclude)
    columns = []
    it = iter(decoded)
    for k in range(enc.schema.n_vars):
        columns.append(overrides[k] if k in exclude else next(it))
    return Dataset(enc.schema, columns)
