"""Incomplete feature matrices: the (values, mask) pair and its basic operations.

The boolean mask is the single source of truth for missingness; whatever
sits in `values` under a masked cell is never read. Masked cells are
canonicalized to NaN purely for display and CSV round trips.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

NA_TOKEN = "NA"


@dataclass(frozen=True)
class ColumnStats:
    """Summary of the observed entries of one column.

    All value fields are None when the column has no observed entry.
    """

    mean: Optional[float]
    min: Optional[float]
    max: Optional[float]
    observed_count: int


class IncompleteMatrix:
    """n x d real matrix paired with a boolean missingness mask (True = missing).

    Immutable after construction; safe to share across threads.
    """

    __slots__ = ("values", "mask", "n", "d")

    def __init__(self, values, mask):
        values = np.array(values, dtype=float)
        mask = np.array(mask, dtype=bool)
        if values.ndim != 2 or mask.ndim != 2:
            raise ValueError("values and mask must be 2-dimensional")
        if values.shape != mask.shape:
            raise ValueError(
                f"shape mismatch: values {values.shape} vs mask {mask.shape}"
            )
        if not np.all(np.isfinite(values[~mask])):
            raise ValueError("non-finite value in an unmasked cell")
        values[mask] = np.nan
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "n", values.shape[0])
        object.__setattr__(self, "d", values.shape[1])

    def __setattr__(self, name, value):
        raise AttributeError("IncompleteMatrix is immutable")

    def __repr__(self):
        n_miss = int(self.mask.sum())
        return f"IncompleteMatrix(n={self.n}, d={self.d}, missing={n_miss})"

    def n_missing(self) -> int:
        return int(self.mask.sum())

    def column_observed(self, j: int) -> np.ndarray:
        """Observed entries of column j, in row order."""
        return self.values[~self.mask[:, j], j]


def make_incomplete(values, mask=None) -> IncompleteMatrix:
    """Validate and build an IncompleteMatrix.

    With mask=None, NaN cells in `values` are taken as missing.
    """
    values = np.asarray(values, dtype=float)
    if mask is None:
        mask = np.isnan(values)
    return IncompleteMatrix(values, mask)


def complete(values) -> IncompleteMatrix:
    """Wrap a fully observed matrix."""
    values = np.asarray(values, dtype=float)
    return IncompleteMatrix(values, np.zeros(values.shape, dtype=bool))


def as_target(y) -> np.ndarray:
    """Validate a target vector: 1-d, finite everywhere (targets are never missing)."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise ValueError("target must be 1-dimensional")
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite entries")
    return y


def observed_stats(m: IncompleteMatrix, j: int) -> ColumnStats:
    """Mean/min/max/count over the observed entries of column j."""
    if not 0 <= j < m.d:
        raise IndexError(f"column {j} out of range for d={m.d}")
    col = m.column_observed(j)
    if col.size == 0:
        return ColumnStats(mean=None, min=None, max=None, observed_count=0)
    return ColumnStats(
        mean=float(col.mean()),
        min=float(col.min()),
        max=float(col.max()),
        observed_count=int(col.size),
    )


def append_mask(m: IncompleteMatrix) -> IncompleteMatrix:
    """Append d fully observed indicator columns (1.0 where masked, else 0.0)."""
    indicators = m.mask.astype(float)
    values = np.hstack([np.where(m.mask, 0.0, m.values), indicators])
    mask = np.hstack([m.mask, np.zeros_like(m.mask)])
    return IncompleteMatrix(values, mask)


def default_column_names(d: int) -> list[str]:
    return [f"x{j + 1}" for j in range(d)]


def write_csv(path, m: IncompleteMatrix, names: Optional[Sequence[str]] = None) -> None:
    """Write the matrix with a header row; missing cells always emit the NA token."""
    if names is None:
        names = default_column_names(m.d)
    if len(names) != m.d:
        raise ValueError("one name per column required")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(m.n):
            cells = [
                NA_TOKEN if m.mask[i, j] else repr(float(m.values[i, j]))
                for j in range(m.d)
            ]
            fh.write(",".join(cells) + "\n")


def read_csv(path) -> tuple[IncompleteMatrix, list[str]]:
    """Read a matrix written by write_csv; `NA` or an empty field marks a missing cell."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n").rstrip("\r") for ln in fh if ln.strip() != ""]
    if not lines:
        raise ValueError(f"empty CSV file: {path}")
    names = lines[0].split(",")
    d = len(names)
    values = np.zeros((len(lines) - 1, d))
    mask = np.zeros((len(lines) - 1, d), dtype=bool)
    for i, line in enumerate(lines[1:]):
        cells = line.split(",")
        if len(cells) != d:
            raise ValueError(f"row {i + 2} has {len(cells)} cells, expected {d}")
        for j, cell in enumerate(cells):
            cell = cell.strip()
            if cell == NA_TOKEN or cell == "":
                mask[i, j] = True
            else:
                values[i, j] = float(cell)
    return IncompleteMatrix(values, mask), names


def write_target_csv(path, y, name: str = "y") -> None:
    y = as_target(y)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(name + "\n")
        for v in y:
            fh.write(repr(float(v)) + "\n")


def read_target_csv(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() != ""]
    if not lines:
        raise ValueError(f"empty CSV file: {path}")
    return as_target([float(v) for v in lines[1:]])
