# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_kernels_py``.

Semantics are identical to the pure-Python reference; see that module for
the contracts.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, ceil
from libc.stdlib cimport qsort, malloc, free

cnp.import_array()

DEF MEDIAN_IQR = 0


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    return (x > y) - (x < y)


cdef int _cmp_long(const void* a, const void* b) noexcept nogil:
    cdef long long x = (<const long long*>a)[0]
    cdef long long y = (<const long long*>b)[0]
    return (x > y) - (x < y)


cdef inline Py_ssize_t _rank(Py_ssize_t n, double p) noexcept nogil:
    cdef Py_ssize_t k = <Py_ssize_t>ceil(n * p)
    if k > 1 and (<double>(k - 1)) / n >= p:
        k -= 1
    if k < 1:
        k = 1
    if k > n:
        k = n
    return k - 1


cdef inline long long _clamp(long long v, long long lo, long long hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def square_neighbors(coords, double delta, bint include_self=True):
    cdef const double[:, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cdef double x0 = np.min(coords[:, 0]), y0 = np.min(coords[:, 1])
    cdef double x1 = np.max(coords[:, 0]), y1 = np.max(coords[:, 1])
    cdef double cell = 2.0 * delta
    # coarsen huge grids; the exact membership test keeps results unchanged
    while (floor((x1 - x0) / cell) + 1.0) * (floor((y1 - y0) / cell) + 1.0) > 4.0 * n + 16.0:
        cell *= 2.0
    cdef long long ncx = <long long>floor((x1 - x0) / cell) + 1
    cdef long long ncy = <long long>floor((y1 - y0) / cell) + 1
    cdef long long ncell = ncx * ncy
    cdef cnp.int64_t[::1] start = np.zeros(ncell + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] order = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] cid = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] fill
    cdef Py_ssize_t i, j, k, pass_
    cdef long long cx, cy, cx0, cx1, cy0, cy1, key
    cdef double lox, hix, loy, hiy, xj, yj
    for i in range(n):
        cx = _clamp(<long long>floor((c[i, 0] - x0) / cell), 0, ncx - 1)
        cy = _clamp(<long long>floor((c[i, 1] - y0) / cell), 0, ncy - 1)
        cid[i] = cy * ncx + cx
        start[cid[i] + 1] += 1
    for k in range(ncell):
        start[k + 1] += start[k]
    fill = np.array(start[:ncell], dtype=np.int64)
    for i in range(n):
        order[fill[cid[i]]] = i
        fill[cid[i]] += 1

    cdef cnp.int64_t[::1] indptr = np.zeros(n + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] indices = np.empty(0, dtype=np.int64)
    cdef Py_ssize_t pos
    for pass_ in range(2):
        pos = 0
        for i in range(n):
            lox = c[i, 0] - delta
            hix = c[i, 0] + delta
            loy = c[i, 1] - delta
            hiy = c[i, 1] + delta
            cx0 = _clamp(<long long>floor((lox - x0) / cell), 0, ncx - 1)
            cx1 = _clamp(<long long>floor((hix - x0) / cell), 0, ncx - 1)
            cy0 = _clamp(<long long>floor((loy - y0) / cell), 0, ncy - 1)
            cy1 = _clamp(<long long>floor((hiy - y0) / cell), 0, ncy - 1)
            k = pos
            for cy in range(cy0, cy1 + 1):
                for cx in range(cx0, cx1 + 1):
                    key = cy * ncx + cx
                    for j in range(start[key], start[key + 1]):
                        xj = c[order[j], 0]
                        yj = c[order[j], 1]
                        if lox < xj and xj <= hix and loy < yj and yj <= hiy:
                            if include_self or order[j] != i:
                                if pass_ == 1:
                                    indices[pos] = order[j]
                                pos += 1
            if pass_ == 0:
                indptr[i + 1] = pos
            elif pos > k:
                qsort(&indices[k], pos - k, sizeof(cnp.int64_t), _cmp_long)
        if pass_ == 0:
            indices = np.empty(pos, dtype=np.int64)
    return np.asarray(indptr), np.asarray(indices)


def neighborhood_summaries(values, indptr, indices, int variant):
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef const cnp.int64_t[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef const cnp.int64_t[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)
    cdef Py_ssize_t n = ip.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] center_a = np.full(n, np.nan)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] disp_a = np.full(n, np.nan)
    cdef double[::1] center = center_a
    cdef double[::1] disp = disp_a
    cdef Py_ssize_t i, j, m, maxm = 1
    cdef double mu, acc, d
    for i in range(n):
        if ip[i + 1] - ip[i] > maxm:
            maxm = ip[i + 1] - ip[i]
    cdef double* buf = <double*>malloc(maxm * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    try:
        for i in range(n):
            m = ip[i + 1] - ip[i]
            if m == 0:
                continue
            for j in range(m):
                buf[j] = v[ix[ip[i] + j]]
            if variant == MEDIAN_IQR:
                qsort(buf, m, sizeof(double), _cmp_double)
                center[i] = buf[_rank(m, 0.5)]
                disp[i] = buf[_rank(m, 0.75)] - buf[_rank(m, 0.25)]
            else:
                acc = 0.0
                for j in range(m):
                    acc += buf[j]
                mu = acc / m
                center[i] = mu
                if m > 1:
                    acc = 0.0
                    for j in range(m):
                        d = buf[j] - mu
                        acc += d * d
                    disp[i] = sqrt(acc / (m - 1))
                else:
                    disp[i] = 0.0
    finally:
        free(buf)
    return center_a, disp_a


def pair_bins(coords, resid, edges):
    cdef const double[:, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(resid, dtype=np.float64)
    cdef const double[::1] e = np.ascontiguousarray(edges, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0], nb = e.shape[0] - 1
    count_a = np.zeros(nb, dtype=np.int64)
    sd_a = np.zeros(nb)
    s2_a = np.zeros(nb)
    sh_a = np.zeros(nb)
    cdef cnp.int64_t[::1] count = count_a
    cdef double[::1] sd = sd_a, s2 = s2_a, sh = sh_a
    cdef Py_ssize_t i, j, lo, hi, mid, b
    cdef double dx, dy, d, d2, diff, emin = e[0], emax = e[nb]
    cdef double cut2 = emax * emax * (1.0 + 1e-12)
    with nogil:
        for i in range(n - 1):
            for j in range(i + 1, n):
                dx = c[j, 0] - c[i, 0]
                dy = c[j, 1] - c[i, 1]
                d2 = dx * dx + dy * dy
                if d2 > cut2:
                    continue
                d = sqrt(d2)
                if d < emin or d > emax:
                    continue
                if d == emin:
                    b = 0
                else:
                    # first edge >= d, minus one
                    lo = 0
                    hi = nb + 1
                    while lo < hi:
                        mid = (lo + hi) // 2
                        if e[mid] < d:
                            lo = mid + 1
                        else:
                            hi = mid
                    b = lo - 1
                if b < 0 or b >= nb:
                    continue
                diff = r[j] - r[i]
                if diff < 0:
                    diff = -diff
                count[b] += 1
                sd[b] += d
                s2[b] += diff * diff
                sh[b] += sqrt(diff)
    return count_a, sd_a, s2_a, sh_a
