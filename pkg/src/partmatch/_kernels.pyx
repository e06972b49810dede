# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled product-space kernels. Semantics match ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def pair_realizations(const cnp.int64_t[:, ::1] xv, const cnp.int64_t[:, ::1] yv, allowed):
    cdef Py_ssize_t m = xv.shape[0], n = yv.shape[0]
    cdef Py_ssize_t i, j, cnt = 0, cap
    cdef const cnp.uint8_t[:, ::1] al
    cdef cnp.int64_t[::1] oi, oj
    if allowed is None:
        return (np.repeat(np.arange(m, dtype=np.int64), n),
                np.tile(np.arange(n, dtype=np.int64), m))
    al = np.ascontiguousarray(allowed, dtype=np.uint8)
    cap = 1024
    oi_arr = np.empty(cap, dtype=np.int64)
    oj_arr = np.empty(cap, dtype=np.int64)
    oi = oi_arr
    oj = oj_arr
    for i in range(m):
        for j in range(n):
            if (al[xv[i, 0], yv[j, 0]] and al[xv[i, 1], yv[j, 1]]
                    and al[xv[i, 2], yv[j, 2]]):
                if cnt == cap:
                    cap *= 2
                    oi_arr = np.resize(oi_arr, cap)
                    oj_arr = np.resize(oj_arr, cap)
                    oi = oi_arr
                    oj = oj_arr
                oi[cnt] = i
                oj[cnt] = j
                cnt += 1
    return oi_arr[:cnt].copy(), oj_arr[:cnt].copy()


cdef inline cnp.int64_t _find(const cnp.int64_t[::1] keys, const cnp.int64_t[::1] order,
                              cnp.int64_t q) nogil:
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < q:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == q:
        return order[lo]
    return -1


def boundary_triplets(const cnp.int64_t[:, ::1] xv, const cnp.int64_t[:, ::1] yv,
                      cnp.int64_t nvx, const cnp.int64_t[::1] x_keys,
                      const cnp.int64_t[::1] x_order, const cnp.int64_t[::1] x_twin,
                      cnp.int64_t nvy, const cnp.int64_t[::1] y_keys,
                      const cnp.int64_t[::1] y_order, const cnp.int64_t[::1] y_twin,
                      const cnp.int64_t[::1] y_interior_index, cnp.int64_t n_iy):
    cdef Py_ssize_t n = xv.shape[0], j, k, cnt = 0, start, p, q
    cdef cnp.int64_t a, b, c, d, xe, ye, ex, ey, exr, eyr, iy, iyr, tr
    cdef cnp.int8_t tv
    cdef cnp.int64_t n_iye = n_iy - nvy
    rows_arr = np.empty(6 * n, dtype=np.int64)
    cols_arr = np.empty(6 * n, dtype=np.int64)
    vals_arr = np.empty(6 * n, dtype=np.int8)
    cdef cnp.int64_t[::1] rows = rows_arr
    cdef cnp.int64_t[::1] cols = cols_arr
    cdef cnp.int8_t[::1] vals = vals_arr
    with nogil:
        # column-major emission, so only the <= 6 entries of a column need sorting
        for j in range(n):
            start = cnt
            for k in range(3):
                a = xv[j, k]
                b = xv[j, (k + 1) % 3]
                c = yv[j, k]
                d = yv[j, (k + 1) % 3]
                if a == b and c == d:
                    continue
                if a == b:
                    ex = a
                    exr = a
                else:
                    xe = _find(x_keys, x_order, a * nvx + b)
                    if xe < 0:
                        continue
                    ex = nvx + xe
                    exr = nvx + x_twin[xe]
                if c == d:
                    ey = c
                    eyr = c
                else:
                    ye = _find(y_keys, y_order, c * nvy + d)
                    if ye < 0:
                        continue
                    ey = nvy + ye
                    iy = y_interior_index[ey]
                    if iy < 0:
                        continue
                    eyr = nvy + y_twin[ye]
                iy = y_interior_index[ey]
                if iy < 0:
                    continue
                iyr = y_interior_index[eyr]
                if ex < nvx:
                    rows[cnt] = ex * n_iye + (iy - nvy)
                    rows[cnt + 1] = exr * n_iye + (iyr - nvy)
                else:
                    rows[cnt] = nvx * n_iye + (ex - nvx) * n_iy + iy
                    rows[cnt + 1] = nvx * n_iye + (exr - nvx) * n_iy + iyr
                cols[cnt] = j
                cols[cnt + 1] = j
                vals[cnt] = 1
                vals[cnt + 1] = -1
                cnt += 2
            # stable insertion sort by row, matching a stable (col, row) lexsort
            for p in range(start + 1, cnt):
                tr = rows[p]
                tv = vals[p]
                q = p
                while q > start and rows[q - 1] > tr:
                    rows[q] = rows[q - 1]
                    vals[q] = vals[q - 1]
                    q -= 1
                rows[q] = tr
                vals[q] = tv
    return rows_arr[:cnt].copy(), cols_arr[:cnt].copy(), vals_arr[:cnt].copy()
