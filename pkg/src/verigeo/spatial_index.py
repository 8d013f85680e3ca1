"""Square-neighborhood range queries over irregular 2-D point sets.

A neighborhood of half-width ``delta`` around ``s`` is the half-open square
``(s - delta, s + delta]`` taken component-wise.  Points are bucketed on a
uniform grid; a query only visits the cells overlapping the square and then
applies the exact membership test, so results never depend on the cell size.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Location
from .errors import DomainError, ParameterError


@dataclass(frozen=True)
class GridIndex:
    cell_size: float
    origin: tuple[float, float]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    buckets: dict
    coords: np.ndarray

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return (math.floor((x - self.origin[0]) / self.cell_size),
                math.floor((y - self.origin[1]) / self.cell_size))


@dataclass(frozen=True)
class Neighborhood:
    center_index: int | None
    member_indices: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.member_indices)


def _as_coords(locations) -> np.ndarray:
    if len(locations) and isinstance(locations[0], Location):
        coords = np.array([[p.x, p.y] for p in locations], dtype=float)
    else:
        coords = np.asarray(locations, dtype=float).reshape(-1, 2)
    return coords


def build_index(locations, cell_size: float) -> GridIndex:
    """Bucket ``locations`` (Location list or ``(n, 2)`` array) on a grid."""
    if not cell_size > 0:
        raise ParameterError(f"cell_size must be positive, got {cell_size}")
    coords = _as_coords(locations)
    if coords.shape[0] == 0:
        raise ParameterError("cannot index an empty point set")
    if not np.all(np.isfinite(coords)):
        raise DomainError("locations must be finite")
    xmin, ymin = coords.min(axis=0)
    xmax, ymax = coords.max(axis=0)
    index = GridIndex(float(cell_size), (float(xmin), float(ymin)),
                      (float(xmin), float(ymin), float(xmax), float(ymax)),
                      defaultdict(list), coords)
    for i, (x, y) in enumerate(coords.tolist()):
        index.buckets[index.cell_of(x, y)].append(i)
    index.buckets.default_factory = None
    return index


def query_square(index: GridIndex, center, delta: float,
                 center_index: int | None = None) -> Neighborhood:
    """All indexed points in ``(center - delta, center + delta]``."""
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    cx, cy = (center.x, center.y) if isinstance(center, Location) else map(float, center)
    lox, hix, loy, hiy = cx - delta, cx + delta, cy - delta, cy + delta
    i0, j0 = index.cell_of(lox, loy)
    i1, j1 = index.cell_of(hix, hiy)
    xs, ys = index.coords[:, 0], index.coords[:, 1]
    members = []
    # iterate over whichever is smaller: the covered cells or the buckets
    if (i1 - i0 + 1) * (j1 - j0 + 1) <= len(index.buckets):
        keys = ((a, b) for a in range(i0, i1 + 1) for b in range(j0, j1 + 1))
    else:
        keys = (k for k in index.buckets if i0 <= k[0] <= i1 and j0 <= k[1] <= j1)
    for key in keys:
        for j in index.buckets.get(key, ()):
            if lox < xs[j] <= hix and loy < ys[j] <= hiy:
                members.append(j)
    members.sort()
    return Neighborhood(center_index, tuple(members))


def brute_force_square(coords, center, delta: float) -> list[int]:
    """O(n) scan used as a test oracle."""
    coords = _as_coords(coords)
    cx, cy = center
    return [j for j, (x, y) in enumerate(coords.tolist())
            if cx - delta < x <= cx + delta and cy - delta < y <= cy + delta]


def all_neighborhoods(coords, delta: float, include_self: bool = True):
    """CSR neighbor lists ``(indptr, indices)`` of every point's square."""
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")
    coords = _as_coords(coords)
    if coords.shape[0] == 0:
        raise ParameterError("cannot index an empty point set")
    return kernels.square_neighbors(coords, float(delta), bool(include_self))


def chebyshev_nearest(coords, i: int, k: int, include_self: bool = True) -> np.ndarray:
    """Indices of the ``k`` nearest points to point ``i`` in max-norm.

    Ties are broken by index; the result is sorted by index.
    """
    coords = _as_coords(coords)
    d = np.max(np.abs(coords - coords[i]), axis=1)
    order = np.lexsort((np.arange(d.size), d))
    order = order[order != i]
    if include_self:
        order = np.concatenate(([i], order))
    return np.sort(order[:k])
