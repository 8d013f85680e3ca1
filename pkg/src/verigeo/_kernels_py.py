"""Pure-Python/numpy implementations of the hot kernels.

These define the reference semantics; ``_kernels.pyx`` must agree with them.
Neighbor lists use CSR layout: the members of neighborhood ``i`` are
``indices[indptr[i]:indptr[i + 1]]`` in increasing index order.
"""
from __future__ import annotations

import math
from collections import defaultdict

import numpy as np

MEDIAN_IQR = 0
MEAN_SD = 1


def _rank(n, p):
    # type-1 quantile rank, see robust_stats.type1_rank
    k = math.ceil(n * p)
    if k > 1 and (k - 1) / n >= p:
        k -= 1
    return min(max(k, 1), n) - 1


def square_neighbors(coords, delta, include_self=True):
    """CSR neighbor lists of the half-open squares ``(s_i - delta, s_i + delta]``."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    cell = 2.0 * delta
    x0 = float(coords[:, 0].min())
    y0 = float(coords[:, 1].min())
    xs = coords[:, 0].tolist()
    ys = coords[:, 1].tolist()
    buckets = defaultdict(list)
    for j in range(n):
        buckets[(math.floor((xs[j] - x0) / cell), math.floor((ys[j] - y0) / cell))].append(j)
    indptr = [0]
    indices = []
    for i in range(n):
        lox, hix = xs[i] - delta, xs[i] + delta
        loy, hiy = ys[i] - delta, ys[i] + delta
        cx0, cx1 = math.floor((lox - x0) / cell), math.floor((hix - x0) / cell)
        cy0, cy1 = math.floor((loy - y0) / cell), math.floor((hiy - y0) / cell)
        members = []
        for cx in range(cx0, cx1 + 1):
            for cy in range(cy0, cy1 + 1):
                for j in buckets.get((cx, cy), ()):
                    if lox < xs[j] <= hix and loy < ys[j] <= hiy and (include_self or j != i):
                        members.append(j)
        members.sort()
        indices.extend(members)
        indptr.append(len(indices))
    return np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64)


def neighborhood_summaries(values, indptr, indices, variant):
    """Per-neighborhood (center, dispersion); NaN for empty neighborhoods."""
    values = np.asarray(values, dtype=float)
    n = len(indptr) - 1
    center = np.full(n, np.nan)
    disp = np.full(n, np.nan)
    for i in range(n):
        a, b = indptr[i], indptr[i + 1]
        m = b - a
        if m == 0:
            continue
        z = values[indices[a:b]]
        if variant == MEDIAN_IQR:
            z = np.sort(z)
            center[i] = z[_rank(m, 0.5)]
            disp[i] = z[_rank(m, 0.75)] - z[_rank(m, 0.25)]
        else:
            mu = math.fsum(z) / m
            center[i] = mu
            if m > 1:
                disp[i] = math.sqrt(math.fsum((z - mu) ** 2) / (m - 1))
            else:
                disp[i] = 0.0
    return center, disp


def pair_bins(coords, resid, edges):
    """Accumulate pair statistics into distance bins.

    Bin j holds pairs with ``edges[j] < d <= edges[j+1]``; the first bin also
    takes ``d == edges[0]``.  Returns (count, sum_distance, sum_sq_diff,
    sum_sqrt_abs_diff), each of length ``len(edges) - 1``.
    """
    coords = np.asarray(coords, dtype=float)
    resid = np.asarray(resid, dtype=float)
    edges = np.asarray(edges, dtype=float)
    nb = edges.size - 1
    count = np.zeros(nb, dtype=np.int64)
    sd = np.zeros(nb)
    s2 = np.zeros(nb)
    sh = np.zeros(nb)
    n = coords.shape[0]
    for i in range(n - 1):
        dx = coords[i + 1:, 0] - coords[i, 0]
        dy = coords[i + 1:, 1] - coords[i, 1]
        d = np.sqrt(dx * dx + dy * dy)
        b = np.searchsorted(edges, d, side="left") - 1
        b[d == edges[0]] = 0
        ok = (b >= 0) & (b < nb)
        if not ok.any():
            continue
        b = b[ok]
        diff = np.abs(resid[i + 1:][ok] - resid[i])
        count += np.bincount(b, minlength=nb)
        sd += np.bincount(b, weights=d[ok], minlength=nb)
        s2 += np.bincount(b, weights=diff * diff, minlength=nb)
        sh += np.bincount(b, weights=np.sqrt(diff), minlength=nb)
    return count, sd, s2, sh
