"""Observation container, design-matrix construction and CSV I/O."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionError, DomainError, ParseError, SchemaError

#: Design terms that are computed from the location alone.
BUILTIN_TERMS = ("intercept", "coord_x", "coord_y", "surface")


@dataclass(frozen=True)
class Location:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"non-finite location ({self.x}, {self.y})")


@dataclass(frozen=True)
class DesignSpec:
    """Which columns make up the covariate matrix.

    ``terms`` entries are ``"intercept"``, ``"coord_x"``, ``"coord_y"``,
    ``"surface"`` or the name of a numeric column in the source file.
    The surface term is evaluated with ``surface`` (any callable mapping an
    ``(n, 2)`` coordinate array to ``n`` values); without one it is read from
    a column called ``surface``.
    """

    terms: tuple[str, ...] = ("intercept",)
    surface: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        terms = tuple(self.terms)
        object.__setattr__(self, "terms", terms)
        if not terms:
            raise SchemaError("design needs at least one term")
        if terms.count("intercept") > 1:
            raise SchemaError("at most one intercept term is allowed")
        if len(set(terms)) != len(terms):
            raise SchemaError(f"duplicate design terms in {terms}")

    @property
    def custom_columns(self) -> tuple[str, ...]:
        cols = [t for t in self.terms if t not in BUILTIN_TERMS]
        if "surface" in self.terms and self.surface is None:
            cols.append("surface")
        return tuple(cols)

    def build(self, coords: np.ndarray, columns: Mapping[str, np.ndarray] | None = None) -> np.ndarray:
        """Covariate matrix for ``coords``; row i depends only on location i."""
        coords = np.asarray(coords, dtype=float)
        columns = columns or {}
        n = coords.shape[0]
        out = np.empty((n, len(self.terms)))
        for j, term in enumerate(self.terms):
            if term == "intercept":
                out[:, j] = 1.0
            elif term == "coord_x":
                out[:, j] = coords[:, 0]
            elif term == "coord_y":
                out[:, j] = coords[:, 1]
            elif term == "surface" and self.surface is not None:
                out[:, j] = self.surface(coords)
            else:
                if term not in columns:
                    raise SchemaError(f"design column {term!r} not found")
                out[:, j] = columns[term]
        return out


@dataclass(frozen=True)
class CsvSchema:
    """Column names for coordinates and the response."""

    x: str = "x"
    y: str = "y"
    value: str = "z"


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpatialDataset:
    """Irregular 2-D observations ``Z(s_i)`` with covariate rows ``x(s_i)``.

    Arrays are stored read-only; the dataset is immutable after construction.
    """

    coords: np.ndarray
    values: np.ndarray
    covariates: np.ndarray
    column_names: tuple[str, ...]
    design: DesignSpec = field(default_factory=DesignSpec)
    schema: CsvSchema = field(default_factory=CsvSchema)

    def __post_init__(self):
        coords = _readonly(self.coords)
        values = _readonly(self.values)
        cov = _readonly(self.covariates)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise DimensionError(f"coords must be (n, 2), got {coords.shape}")
        n = coords.shape[0]
        if n < 1:
            raise DomainError("dataset needs at least one observation")
        if values.shape != (n,):
            raise DimensionError(f"values has shape {values.shape}, expected ({n},)")
        if cov.ndim == 1:
            cov = _readonly(cov.reshape(n, -1))
        if cov.shape[0] != n or cov.shape[1] < 1:
            raise DimensionError(f"covariates has shape {cov.shape}, expected ({n}, p>=1)")
        if len(self.column_names) != cov.shape[1]:
            raise DimensionError("column_names does not match covariate width")
        for name, arr in (("coords", coords), ("values", values), ("covariates", cov)):
            if not np.all(np.isfinite(arr)):
                raise DomainError(f"{name} contains non-finite entries")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @classmethod
    def from_arrays(cls, coords, values, design: DesignSpec | None = None,
                    columns: Mapping[str, np.ndarray] | None = None,
                    schema: CsvSchema | None = None) -> "SpatialDataset":
        design = design or DesignSpec()
        coords = np.asarray(coords, dtype=float)
        X = design.build(coords, columns)
        return cls(coords, values, X, design.terms, design, schema or CsvSchema())

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def locations(self) -> list[Location]:
        return [Location(float(x), float(y)) for x, y in self.coords]

    def duplicate_mask(self) -> np.ndarray:
        """True for every observation whose location occurs more than once."""
        _, inverse, counts = np.unique(self.coords, axis=0, return_inverse=True, return_counts=True)
        return counts[inverse.ravel()] > 1

    def subset(self, idx) -> "SpatialDataset":
        idx = np.asarray(idx)
        return SpatialDataset(self.coords[idx], self.values[idx], self.covariates[idx],
                              self.column_names, self.design, self.schema)

    def with_values(self, values) -> "SpatialDataset":
        return SpatialDataset(self.coords, values, self.covariates, self.column_names,
                              self.design, self.schema)

    def __eq__(self, other):
        if not isinstance(other, SpatialDataset):
            return NotImplemented
        return (self.column_names == other.column_names
                and np.array_equal(self.coords, other.coords)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.covariates, other.covariates))

    __hash__ = None


def _parse_cell(text, row, column):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"row {row}: column {column!r} value {text!r} is not a number",
                         row=row, column=column) from None
    if not math.isfinite(v):
        raise ParseError(f"row {row}: column {column!r} value {text!r} is not finite",
                         row=row, column=column)
    return v


def read_csv(path, schema: CsvSchema | None = None, design: DesignSpec | None = None) -> SpatialDataset:
    """Read a header-row CSV into a :class:`SpatialDataset`.

    Row numbers in error messages are 1-based data rows (the header is row 0).
    Missing or non-finite cells are rejected.
    """
    schema = schema or CsvSchema()
    design = design or DesignSpec()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        needed = [schema.x, schema.y, schema.value, *design.custom_columns]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        pos = {c: header.index(c) for c in needed}
        rows = {c: [] for c in needed}
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not cell.strip() for cell in rec):
                continue
            for c in needed:
                cell = rec[pos[c]] if pos[c] < len(rec) else ""
                rows[c].append(_parse_cell(cell.strip(), r, c))
    if not rows[schema.value]:
        raise DomainError(f"{path}: no data rows")
    coords = np.column_stack([rows[schema.x], rows[schema.y]])
    columns = {c: np.asarray(rows[c]) for c in design.custom_columns}
    return SpatialDataset.from_arrays(coords, np.asarray(rows[schema.value]), design, columns, schema)


def format_real(v: float) -> str:
    """Decimal text with 17 significant digits; parses back to the same double."""
    return format(float(v), ".17g")


def write_csv(dataset: SpatialDataset, path, extra: Mapping[str, Sequence[float]] | None = None) -> None:
    """Write ``dataset`` (plus optional named extra columns) as CSV.

    Coordinates, response and any covariate column that cannot be rebuilt
    from the locations are written, so that ``read_csv`` with the same schema
    and design reproduces the dataset exactly.
    """
    extra = dict(extra or {})
    for name, vec in extra.items():
        if len(vec) != dataset.n:
            raise DimensionError(f"extra column {name!r} has length {len(vec)}, expected {dataset.n}")
    s = dataset.schema
    cols: list[tuple[str, np.ndarray]] = [
        (s.x, dataset.coords[:, 0]), (s.y, dataset.coords[:, 1]), (s.value, dataset.values)]
    for j, name in enumerate(dataset.column_names):
        if name in ("intercept", "coord_x", "coord_y"):
            continue
        cols.append((name, dataset.covariates[:, j]))
    for name, vec in extra.items():
        cols.append((name, np.asarray(vec, dtype=float)))
    names = [c[0] for c in cols]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate output column names {names}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(dataset.n):
            w.writerow([format_real(c[1][i]) for c in cols])
