# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback``; same signatures and semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, isfinite
from libc.stdlib cimport malloc, free, qsort
from libc.stdint cimport int64_t

cnp.import_array()

cdef double RIDGE_SCALE = 1e-6


def soft_threshold(const double[:, :] z, const double[:, :] beta):
    cdef Py_ssize_t n = z.shape[0], m = z.shape[1], i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double zi, mag
    for i in range(n):
        for j in range(m):
            zi = z[i, j]
            mag = fabs(zi) - beta[i, j]
            if mag > 0.0:
                o[i, j] = mag if zi > 0.0 else -mag
            else:
                o[i, j] = 0.0
    return out


cdef inline bint _worse(double a_mag, int64_t a, double b_mag, int64_t b) nogil:
    # a ranks below b: smaller magnitude, or equal magnitude and larger index
    return a_mag < b_mag or (a_mag == b_mag and a > b)


cdef void _sift_down(int64_t* heap, double* mags, Py_ssize_t size, Py_ssize_t pos) nogil:
    cdef Py_ssize_t child, best
    cdef int64_t tmp
    while True:
        best = pos
        child = 2 * pos + 1
        if child < size and _worse(mags[heap[child]], heap[child], mags[heap[best]], heap[best]):
            best = child
        child += 1
        if child < size and _worse(mags[heap[child]], heap[child], mags[heap[best]], heap[best]):
            best = child
        if best == pos:
            return
        tmp = heap[pos]
        heap[pos] = heap[best]
        heap[best] = tmp
        pos = best


cdef void _sift_up(int64_t* heap, double* mags, Py_ssize_t pos) nogil:
    cdef Py_ssize_t parent
    cdef int64_t tmp
    while pos > 0:
        parent = (pos - 1) // 2
        if _worse(mags[heap[pos]], heap[pos], mags[heap[parent]], heap[parent]):
            tmp = heap[pos]
            heap[pos] = heap[parent]
            heap[parent] = tmp
            pos = parent
        else:
            return


cdef int _cmp_int64(const void* a, const void* b) noexcept nogil:
    cdef int64_t x = (<int64_t*>a)[0], y = (<int64_t*>b)[0]
    return (x > y) - (x < y)


def topl_support(const double[:, :] v, const int64_t[:] L):
    cdef Py_ssize_t nrow = v.shape[0], n = v.shape[1], b, i, size, lb
    cdef Py_ssize_t lmax = 0
    for b in range(nrow):
        if L[b] > lmax:
            lmax = L[b]
    out = np.full((nrow, lmax), -1, dtype=np.int64)
    cdef int64_t[:, ::1] o = out
    cdef int64_t* heap = <int64_t*>malloc(max(lmax, 1) * sizeof(int64_t))
    cdef double* mags = <double*>malloc(max(n, 1) * sizeof(double))
    if heap == NULL or mags == NULL:
        free(heap)
        free(mags)
        raise MemoryError()
    try:
        with nogil:
            for b in range(nrow):
                lb = L[b]
                size = 0
                for i in range(n):
                    mags[i] = fabs(v[b, i])
                    if size < lb:
                        heap[size] = i
                        _sift_up(heap, mags, size)
                        size += 1
                    elif lb > 0 and _worse(mags[heap[0]], heap[0], mags[i], i):
                        heap[0] = i
                        _sift_down(heap, mags, size, 0)
                qsort(heap, size, sizeof(int64_t), _cmp_int64)
                for i in range(size):
                    o[b, i] = heap[i]
    finally:
        free(heap)
        free(mags)
    return out


cdef bint _lu_solve(double* M, double* rhs, Py_ssize_t n) nogil:
    """In-place Gaussian elimination with partial pivoting; solution left in rhs."""
    cdef Py_ssize_t k, i, j, piv
    cdef double best, f, tmp
    for k in range(n):
        piv = k
        best = fabs(M[k * n + k])
        for i in range(k + 1, n):
            if fabs(M[i * n + k]) > best:
                best = fabs(M[i * n + k])
                piv = i
        if best == 0.0 or not isfinite(best):
            return False
        if piv != k:
            for j in range(n):
                tmp = M[k * n + j]
                M[k * n + j] = M[piv * n + j]
                M[piv * n + j] = tmp
            tmp = rhs[k]
            rhs[k] = rhs[piv]
            rhs[piv] = tmp
        for i in range(k + 1, n):
            f = M[i * n + k] / M[k * n + k]
            if f != 0.0:
                for j in range(k, n):
                    M[i * n + j] -= f * M[k * n + j]
                rhs[i] -= f * rhs[k]
    for k in range(n - 1, -1, -1):
        tmp = rhs[k]
        for j in range(k + 1, n):
            tmp -= M[k * n + j] * rhs[j]
        rhs[k] = tmp / M[k * n + k]
        if not isfinite(rhs[k]):
            return False
    return True


def pr_newton(const double[:, ::1] A, const double[:, :] u, const double[:, :] y,
              const int64_t[:, :] support):
    cdef Py_ssize_t nb = support.shape[0], lmax = support.shape[1]
    cdef Py_ssize_t ny = A.shape[0]
    cdef Py_ssize_t b, i, a, c, s
    g_arr = np.zeros((nb, lmax), dtype=np.float64)
    H_arr = np.zeros((nb, lmax, lmax), dtype=np.float64)
    p_arr = np.zeros((nb, lmax), dtype=np.float64)
    mu_arr = np.zeros(nb, dtype=np.float64)
    flags_arr = np.zeros(nb, dtype=np.int64)
    cdef double[:, ::1] g = g_arr
    cdef double[:, :, ::1] H = H_arr
    cdef double[:, ::1] p = p_arr
    cdef double[::1] mu = mu_arr
    cdef int64_t[::1] flags = flags_arr
    cdef double* M = <double*>malloc(max(lmax * lmax, 1) * sizeof(double))
    cdef double* rhs = <double*>malloc(max(lmax, 1) * sizeof(double))
    cdef double* col = <double*>malloc(max(lmax, 1) * sizeof(double))
    if M == NULL or rhs == NULL or col == NULL:
        free(M)
        free(rhs)
        free(col)
        raise MemoryError()
    cdef double ui, r, w, tr, inv_ny = 1.0 / ny
    try:
        with nogil:
            for b in range(nb):
                s = 0
                while s < lmax and support[b, s] >= 0:
                    s += 1
                for i in range(ny):
                    ui = u[b, i]
                    r = (ui * ui - y[b, i]) * ui
                    w = 3.0 * ui * ui - y[b, i]
                    for a in range(s):
                        col[a] = A[i, support[b, a]]
                    for a in range(s):
                        g[b, a] += col[a] * r
                        for c in range(a, s):
                            H[b, a, c] += col[a] * w * col[c]
                tr = 0.0
                for a in range(s):
                    g[b, a] *= inv_ny
                    for c in range(a, s):
                        H[b, a, c] *= inv_ny
                        H[b, c, a] = H[b, a, c]
                    tr += H[b, a, a]
                if s == 0:
                    continue
                mu[b] = RIDGE_SCALE * tr / s
                for a in range(s):
                    rhs[a] = g[b, a]
                    for c in range(s):
                        M[a * s + c] = H[b, a, c]
                    M[a * s + a] += mu[b]
                if _lu_solve(M, rhs, s):
                    for a in range(s):
                        p[b, a] = rhs[a]
                else:
                    flags[b] = 1
                    for a in range(s):
                        p[b, a] = g[b, a]
    finally:
        free(M)
        free(rhs)
        free(col)
    return g_arr, H_arr, mu_arr, p_arr, flags_arr
