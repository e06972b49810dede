"""Pure numpy implementations of the product-space kernels.

These mirror ``_kernels.pyx`` exactly (same outputs, same ordering) and are
used when the compiled extension is unavailable.
"""
import numpy as np

_CHUNK = 1 << 21


def pair_realizations(xv, yv, allowed):
    """Admissible ``(i, j)`` pairs between two realization tables.

    ``xv`` (m, 3) and ``yv`` (n, 3) hold vertex triples. A pair is kept when
    ``allowed[xv[i, k], yv[j, k]]`` holds for k = 0, 1, 2, or always when
    ``allowed`` is None. Output is sorted by ``(i, j)``.
    """
    m, n = len(xv), len(yv)
    if allowed is None:
        i = np.repeat(np.arange(m, dtype=np.int64), n)
        j = np.tile(np.arange(n, dtype=np.int64), m)
        return i, j
    allowed = np.asarray(allowed, dtype=bool)
    out_i, out_j = [], []
    step = max(1, _CHUNK // max(n, 1))
    for s in range(0, m, step):
        xs = xv[s:s + step]
        ok = allowed[xs[:, 0][:, None], yv[:, 0][None, :]]
        ok &= allowed[xs[:, 1][:, None], yv[:, 1][None, :]]
        ok &= allowed[xs[:, 2][:, None], yv[:, 2][None, :]]
        ii, jj = np.nonzero(ok)
        out_i.append(ii + s)
        out_j.append(jj)
    if not out_i:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return (np.concatenate(out_i).astype(np.int64),
            np.concatenate(out_j).astype(np.int64))


def _lookup(keys, order, q):
    if len(keys) == 0:
        return np.full(q.shape, -1, dtype=np.int64)
    pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
    return np.where(keys[pos] == q, order[pos], -1)


def boundary_triplets(xv, yv, nvx, x_keys, x_order, x_twin,
                      nvy, y_keys, y_order, y_twin, y_interior_index, n_iy):
    """Signed incidences of interior product edges on product triangles.

    Returns ``(rows, cols, vals)`` with columns ascending. Each product
    triangle contributes +1 on each of its three cyclic boundary product
    edges and -1 on their reverses; product vertices and edges whose partial
    side is a boundary edge (or absent) carry no row.
    """
    n = len(xv)
    n_iye = n_iy - nvy
    rows_all, cols_all, vals_all = [], [], []
    cols = np.arange(n, dtype=np.int64)
    for k in range(3):
        a, b = xv[:, k], xv[:, (k + 1) % 3]
        c, d = yv[:, k], yv[:, (k + 1) % 3]
        xdeg = a == b
        ydeg = c == d
        xe = np.where(xdeg, -1, _lookup(x_keys, x_order, a * nvx + b))
        ye = np.where(ydeg, -1, _lookup(y_keys, y_order, c * nvy + d))
        ex = np.where(xdeg, a, nvx + xe)
        ey = np.where(ydeg, c, nvy + np.maximum(ye, 0))
        keep = ~(xdeg & ydeg) & (ydeg | (ye >= 0))
        keep &= xdeg | (xe >= 0)
        iy = np.where(keep, y_interior_index[np.where(keep, ey, 0)], -1)
        keep &= iy >= 0
        ex_r = np.where(xdeg, a, nvx + x_twin[np.maximum(xe, 0)])
        ey_r = np.where(ydeg, c, nvy + y_twin[np.maximum(ye, 0)])
        iy_r = np.where(keep, y_interior_index[np.where(keep, ey_r, 0)], -1)

        def row(ex_, iy_):
            return np.where(ex_ < nvx, ex_ * n_iye + (iy_ - nvy),
                            nvx * n_iye + (ex_ - nvx) * n_iy + iy_)

        r1 = row(ex, iy)[keep]
        r2 = row(ex_r, iy_r)[keep]
        cc = cols[keep]
        rows_all += [r1, r2]
        cols_all += [cc, cc]
        vals_all += [np.ones(len(cc), np.int8), -np.ones(len(cc), np.int8)]
    rows = np.concatenate(rows_all)
    cols_ = np.concatenate(cols_all)
    vals = np.concatenate(vals_all)
    order = np.lexsort((rows, cols_))
    return rows[order], cols_[order], vals[order]
