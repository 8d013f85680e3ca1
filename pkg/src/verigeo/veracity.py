"""Veracity scores from local neighborhood summaries.

For observation i with neighborhood values ``Z_i`` (the observations inside
the square of half-width ``delta`` around s_i) the score is

    V(s_i) = exp(-|Z(s_i) - C(Z_i)| / (alpha + D(Z_i)))

with (C, D) either (median, IQR) or (mean, sd).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .dataset import SpatialDataset
from .errors import DomainError, ParameterError
from .robust_stats import VARIANTS
from .spatial_index import all_neighborhoods, chebyshev_nearest

#: Score given to an observation that deviates from a constant neighborhood.
DEGENERATE_SCORE = float(np.finfo(float).tiny)
TARGET_NEIGHBORS = 20


@dataclass(frozen=True)
class VeracityConfig:
    """Scoring parameters; ``delta=None`` picks :func:`default_delta`."""

    delta: float | None = None
    alpha: float = 0.0
    variant: str = "median_iqr"
    include_self: bool = True
    min_neighbors: int = 5

    def __post_init__(self):
        if self.delta is not None and not self.delta > 0:
            raise ParameterError(f"delta must be positive, got {self.delta}")
        if not self.alpha >= 0:
            raise ParameterError(f"alpha must be non-negative, got {self.alpha}")
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if int(self.min_neighbors) < 1:
            raise ParameterError("min_neighbors must be at least 1")

    def resolved(self, coords) -> "VeracityConfig":
        if self.delta is not None:
            return self
        return replace(self, delta=default_delta(coords))


@dataclass(frozen=True, eq=False)
class VeracityScores:
    scores: np.ndarray
    config: VeracityConfig
    neighbor_counts: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    sparse: np.ndarray  # True where the nearest-neighbor fallback was used
    centers: np.ndarray
    dispersions: np.ndarray

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]


def veracity_function(t: float) -> float:
    """exp(-t) for t >= 0."""
    if not t >= 0:
        raise DomainError(f"veracity function needs t >= 0, got {t}")
    return math.exp(-t)


def default_delta(coords, target: int = TARGET_NEIGHBORS) -> float:
    """Half-width giving about ``target`` points per square on average.

    Solves 4 delta^2 n / area = target with the bounding-box area.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    span = coords.max(axis=0) - coords.min(axis=0)
    area = float(span[0] * span[1])
    if area <= 0:
        # degenerate (collinear or single) point sets: fall back to the extent
        area = float(max(span.max(), 1.0)) ** 2
    return math.sqrt(target * area / (4.0 * n))


def _neighborhoods(coords, cfg: VeracityConfig):
    """Square neighborhoods, with the nearest-neighbor fallback for sparse ones."""
    indptr, indices = all_neighborhoods(coords, cfg.delta, cfg.include_self)
    counts = np.diff(indptr)
    sparse = counts < cfg.min_neighbors
    if sparse.any():
        k = 2 * cfg.min_neighbors
        rows = [indices[indptr[i]:indptr[i + 1]] for i in range(len(counts))]
        for i in np.flatnonzero(sparse):
            rows[i] = chebyshev_nearest(coords, i, k, cfg.include_self)
        counts = np.array([r.size for r in rows], dtype=np.int64)
        indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        indices = (np.concatenate(rows) if counts.sum() else np.empty(0)).astype(np.int64)
    return indptr, indices, counts, sparse


def score_values(values, summary, alpha):
    """Scores from values and per-point (center, dispersion) arrays."""
    center, disp = summary
    dev = np.abs(np.asarray(values, dtype=float) - center)
    scale = alpha + disp
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.exp(-dev / scale)
    degenerate = scale == 0
    v[degenerate] = np.where(dev[degenerate] == 0, 1.0, DEGENERATE_SCORE)
    # exp underflow still has to yield a positive weight
    return np.maximum(v, DEGENERATE_SCORE)


def score_all(dataset: SpatialDataset, config: VeracityConfig | None = None) -> VeracityScores:
    """Veracity score of every observation in ``dataset``."""
    if dataset is None or dataset.n < 1:
        raise DomainError("cannot score an empty dataset")
    cfg = (config or VeracityConfig()).resolved(dataset.coords)
    indptr, indices, counts, sparse = _neighborhoods(dataset.coords, cfg)
    if np.any(counts < 1):
        raise DomainError("an observation has an empty neighborhood (include_self=False on a single point?)")
    variant = kernels.MEDIAN_IQR if cfg.variant == "median_iqr" else kernels.MEAN_SD
    center, disp = kernels.neighborhood_summaries(dataset.values, indptr, indices, variant)
    scores = score_values(dataset.values, (center, disp), cfg.alpha)
    for a in (scores, counts, indptr, indices, sparse, center, disp):
        a.setflags(write=False)
    return VeracityScores(scores, cfg, counts, indptr, indices, sparse, center, disp)
