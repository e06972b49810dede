"""Product space of a closed full shape X and an open partial shape Y.

Product triangles are pairs of extended triangles where at least one side is
a real triangle. Each pair is realized by one or more oriented vertex
correspondences (``pairing`` is the cyclic shift applied to the Y side):

* X triangle x Y triangle: 3 cyclic pairings
* X triangle x Y directed edge ``(c, d)``: Y side ``(c, c, d)`` shifted 3 ways
* X triangle x Y vertex ``c``: Y side ``(c, c, c)``, 1 pairing
* X directed edge ``(a, b)`` x Y triangle: X side ``(a, a, b)``, 3 pairings
* X vertex ``a`` x Y triangle: X side ``(a, a, a)``, 3 pairings collapse to 1

Every realization is one ILP column. Columns are ordered lexicographically by
``(X extended id, Y extended id, pairing)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse

from . import kernels
from .mesh import EDGE, TRIANGLE, VERTEX, ExtendedElements, orientation_operator

TAG_NAMES = (VERTEX, EDGE, TRIANGLE)


class ProductSpaceError(ValueError):
    pass


def _tag_codes(ext_ids, nv, ne):
    return np.where(ext_ids < nv, 0, np.where(ext_ids < nv + ne, 1, 2)).astype(np.int8)


def _realizations_x(ext: ExtendedElements):
    """X-side tables: degenerate elements (vertex, edge) and triangles."""
    m = ext.mesh
    nv, ne = ext.nv, ext.ne
    verts = np.arange(nv, dtype=np.int64)
    e = m.directed_edges
    deg_v = np.concatenate([np.stack([verts] * 3, axis=1),
                            np.stack([e[:, 0], e[:, 0], e[:, 1]], axis=1)]).astype(np.int64)
    deg_ids = np.arange(nv + ne, dtype=np.int64)
    tri_v = np.ascontiguousarray(m.triangles, dtype=np.int64)
    tri_ids = nv + ne + np.arange(ext.nf, dtype=np.int64)
    return (np.ascontiguousarray(deg_v), deg_ids), (tri_v, tri_ids)


def _rotations(triples, ids):
    """All three cyclic shifts, ordered by (id, shift)."""
    n = len(triples)
    out = np.empty((n, 3, 3), dtype=np.int64)
    for r in range(3):
        out[:, r] = np.roll(triples, -r, axis=1)
    return (out.reshape(-1, 3), np.repeat(ids, 3),
            np.tile(np.arange(3, dtype=np.int8), n))


def _realizations_y(ext: ExtendedElements):
    """Y-side tables: all extended triangles, and the triangles alone."""
    m = ext.mesh
    nv, ne = ext.nv, ext.ne
    verts = np.arange(nv, dtype=np.int64)
    e = m.directed_edges
    v_tab = np.stack([verts] * 3, axis=1)
    e_tab, e_ids, e_rot = _rotations(np.stack([e[:, 0], e[:, 0], e[:, 1]], axis=1),
                                     nv + np.arange(ne, dtype=np.int64))
    t_tab, t_ids, t_rot = _rotations(np.asarray(m.triangles, dtype=np.int64),
                                     nv + ne + np.arange(ext.nf, dtype=np.int64))
    all_tab = np.ascontiguousarray(np.concatenate([v_tab, e_tab, t_tab]))
    all_ids = np.concatenate([verts, e_ids, t_ids])
    all_rot = np.concatenate([np.zeros(nv, np.int8), e_rot, t_rot])
    return (all_tab, all_ids, all_rot), (np.ascontiguousarray(t_tab), t_ids, t_rot)


@dataclass
class ProductSpace:
    """Enumerated product triangles (as ILP columns) and product edges.

    Attributes
    ----------
    x_ext, y_ext : ndarray
        Extended-triangle ids of each column on X and Y.
    pairing : ndarray
        Cyclic shift of the Y side for each column.
    xv, yv : ndarray, shape (n, 3)
        The matched vertex triples; ``(xv[j, k], yv[j, k])`` are the product
        vertices of column ``j``.
    allowed : ndarray or None
        Vertex-pair admissibility used to prune columns at enumeration.
    """

    extX: ExtendedElements
    extY: ExtendedElements
    x_ext: np.ndarray
    y_ext: np.ndarray
    pairing: np.ndarray
    xv: np.ndarray
    yv: np.ndarray
    allowed: np.ndarray | None = None
    y_interior_index: np.ndarray = field(repr=False, default=None)

    @property
    def n_columns(self) -> int:
        return len(self.x_ext)

    @property
    def pruned(self) -> bool:
        return self.allowed is not None

    @cached_property
    def x_tag(self) -> np.ndarray:
        return _tag_codes(self.x_ext, self.extX.nv, self.extX.ne)

    @cached_property
    def y_tag(self) -> np.ndarray:
        return _tag_codes(self.y_ext, self.extY.nv, self.extY.ne)

    @cached_property
    def _pair_split(self):
        if self.n_columns == 0:
            return np.zeros((0, 2), np.int64), np.zeros(0, np.int64)
        key = np.stack([self.x_ext, self.y_ext], axis=1)
        new = np.ones(self.n_columns, dtype=bool)
        new[1:] = np.any(key[1:] != key[:-1], axis=1)
        return key[new], np.cumsum(new) - 1

    @property
    def pairs(self) -> np.ndarray:
        """Distinct (X extended triangle, Y extended triangle) pairs."""
        return self._pair_split[0]

    @property
    def pair_index(self) -> np.ndarray:
        """Column -> row of :attr:`pairs`."""
        return self._pair_split[1]

    def column(self, j: int) -> dict:
        return {
            "x_id": int(self.x_ext[j]), "y_id": int(self.y_ext[j]),
            "x_tag": TAG_NAMES[self.x_tag[j]], "y_tag": TAG_NAMES[self.y_tag[j]],
            "pairing": int(self.pairing[j]),
            "x_vertices": tuple(int(v) for v in self.xv[j]),
            "y_vertices": tuple(int(v) for v in self.yv[j]),
        }

    def column_ids(self, x_ids, y_ids, pairings) -> np.ndarray:
        """Find columns by ``(x_id, y_id, pairing)``; ``-1`` if absent."""
        base = np.int64(self.extY.n_extended_triangles) * 3
        keys = self.x_ext * base + self.y_ext * 3 + self.pairing
        q = (np.asarray(x_ids, np.int64) * base + np.asarray(y_ids, np.int64) * 3
             + np.asarray(pairings, np.int64))
        if len(keys) == 0:
            return np.full(q.shape, -1, np.int64)
        pos = np.minimum(np.searchsorted(keys, q), len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    # --- product edges -------------------------------------------------
    @property
    def n_interior_y(self) -> int:
        return int((self.y_interior_index >= 0).sum())

    @property
    def n_interior_edges(self) -> int:
        nvx, nex = self.extX.nv, self.extX.ne
        n_iy = self.n_interior_y
        return nvx * (n_iy - self.extY.nv) + nex * n_iy

    @property
    def n_edges(self) -> int:
        """Closed-form size of the full product edge set."""
        return (self.extX.ne * self.extY.n_extended_edges
                + self.extX.nv * self.extY.ne)

    def product_edges(self) -> np.ndarray:
        """All product edges ``(X extended edge, Y extended edge)``, enumerated."""
        nx, ny = self.extX.n_extended_edges, self.extY.n_extended_edges
        ex = np.repeat(np.arange(nx, dtype=np.int64), ny)
        ey = np.tile(np.arange(ny, dtype=np.int64), nx)
        keep = ~((ex < self.extX.nv) & (ey < self.extY.nv))
        return np.stack([ex[keep], ey[keep]], axis=1)

    def interior_product_edges(self) -> np.ndarray:
        """Interior product edges in row order of the boundary operator."""
        e = self.product_edges()
        keep = self.y_interior_index[e[:, 1]] >= 0
        return e[keep]

    def interior_row(self, ex: int, ey: int) -> int:
        nvx, nvy = self.extX.nv, self.extY.nv
        iy = int(self.y_interior_index[ey])
        if iy < 0 or (ex < nvx and ey < nvy):
            return -1
        n_iy = self.n_interior_y
        if ex < nvx:
            return ex * (n_iy - nvy) + (iy - nvy)
        return nvx * (n_iy - nvy) + (ex - nvx) * n_iy + iy


def build_product_space(extX: ExtendedElements, extY: ExtendedElements,
                        allowed=None) -> ProductSpace:
    """Enumerate product triangles, optionally pruned by vertex-pair admissibility.

    ``allowed`` is a boolean (|V_X|, |V_Y|) matrix; a realization survives
    only if all three of its vertex pairs are allowed.
    """
    if not extX.mesh.is_closed:
        raise ProductSpaceError("full shape X must be closed (it has boundary edges)")
    if allowed is not None:
        allowed = np.ascontiguousarray(allowed, dtype=bool)
        if allowed.shape != (extX.nv, extY.nv):
            raise ProductSpaceError("allowed mask has wrong shape")
        al = allowed.view(np.uint8)
    else:
        al = None
    (xdeg_v, xdeg_ids), (xtri_v, xtri_ids) = _realizations_x(extX)
    (yall_v, yall_ids, yall_rot), (ytri_v, ytri_ids, ytri_rot) = _realizations_y(extY)

    i1, j1 = kernels.pair_realizations(xdeg_v, ytri_v, al)
    i2, j2 = kernels.pair_realizations(xtri_v, yall_v, al)

    x_ext = np.concatenate([xdeg_ids[i1], xtri_ids[i2]])
    y_ext = np.concatenate([ytri_ids[j1], yall_ids[j2]])
    pairing = np.concatenate([ytri_rot[j1], yall_rot[j2]]).astype(np.int8)
    xv = np.concatenate([xdeg_v[i1], xtri_v[i2]])
    yv = np.concatenate([ytri_v[j1], yall_v[j2]])

    # a vertex-as-triangle is rotation invariant: keep one pairing only
    dup = (x_ext < extX.nv) & (pairing > 0)
    if dup.any():
        keep = ~dup
        x_ext, y_ext, pairing, xv, yv = (a[keep] for a in (x_ext, y_ext, pairing, xv, yv))

    interior = np.full(extY.n_extended_edges, -1, dtype=np.int64)
    is_int = np.ones(extY.n_extended_edges, dtype=bool)
    is_int[extY.nv:] = ~extY.mesh.boundary_edge_flags
    interior[is_int] = np.arange(is_int.sum())
    return ProductSpace(extX, extY, x_ext.astype(np.int64), y_ext.astype(np.int64),
                        pairing, np.ascontiguousarray(xv, np.int64),
                        np.ascontiguousarray(yv, np.int64),
                        allowed=allowed, y_interior_index=interior)


def build_boundary_operator(prod: ProductSpace) -> sparse.csc_matrix:
    """Signed incidence matrix: interior product edges x product triangles."""
    mx, my = prod.extX.mesh, prod.extY.mesh
    xk, xo = mx._edge_lookup
    yk, yo = my._edge_lookup
    rows, cols, vals = kernels.boundary_triplets(
        prod.xv, prod.yv, np.int64(mx.n_vertices), np.ascontiguousarray(xk, np.int64),
        np.ascontiguousarray(xo, np.int64), np.ascontiguousarray(mx.twin, np.int64),
        np.int64(my.n_vertices), np.ascontiguousarray(yk, np.int64),
        np.ascontiguousarray(yo, np.int64), np.ascontiguousarray(my.twin, np.int64),
        np.ascontiguousarray(prod.y_interior_index, np.int64), np.int64(prod.n_interior_y))
    shape = (prod.n_interior_edges, prod.n_columns)
    return sparse.csc_matrix((vals.astype(np.int8), (rows, cols)), shape=shape)


def build_projections(prod: ProductSpace):
    """0/1 coverage matrices of X triangles and Y triangles over columns."""
    n = prod.n_columns
    cols = np.arange(n)
    offx = prod.extX.nv + prod.extX.ne
    offy = prod.extY.nv + prod.extY.ne
    sx = prod.x_tag == 2
    sy = prod.y_tag == 2
    px = sparse.csr_matrix((np.ones(sx.sum(), np.int8), (prod.x_ext[sx] - offx, cols[sx])),
                           shape=(prod.extX.nf, n))
    py = sparse.csr_matrix((np.ones(sy.sum(), np.int8), (prod.y_ext[sy] - offy, cols[sy])),
                           shape=(prod.extY.nf, n))
    return px, py


@dataclass
class ConstraintSystem:
    boundary: sparse.csc_matrix
    proj_X: sparse.csr_matrix
    proj_Y: sparse.csr_matrix

    @property
    def n_columns(self) -> int:
        return self.boundary.shape[1]

    @cached_property
    def boundary_rows(self) -> sparse.csr_matrix:
        """Row-major mirror of the boundary operator."""
        return self.boundary.tocsr()


def build_constraint_system(prod: ProductSpace) -> ConstraintSystem:
    px, py = build_projections(prod)
    return ConstraintSystem(build_boundary_operator(prod), px, py)


@dataclass
class MatchingIndicator:
    bits: np.ndarray
    objective_value: float = float("nan")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.bits)


@dataclass
class FeasibilityReport:
    boundary_rows: np.ndarray
    over_covered_x: np.ndarray
    miscovered_y: np.ndarray

    def __bool__(self):
        return bool(len(self.boundary_rows) or len(self.over_covered_x)
                    or len(self.miscovered_y))

    @property
    def ok(self) -> bool:
        return not self

    def __str__(self):
        if self.ok:
            return "feasible"
        return (f"boundary rows violated: {len(self.boundary_rows)}, "
                f"X triangles covered >1: {len(self.over_covered_x)}, "
                f"Y triangles not covered once: {len(self.miscovered_y)}")


def check_feasible(system: ConstraintSystem, pi) -> FeasibilityReport:
    """Exact integer check of the three constraint families."""
    bits = pi.bits if isinstance(pi, MatchingIndicator) else np.asarray(pi)
    x = np.asarray(bits)
    if not np.all((x == 0) | (x == 1)):
        raise ValueError("indicator is not binary")
    x = x.astype(np.int64)
    if len(x) != system.n_columns:
        raise ValueError("indicator length does not match the constraint system")
    d = system.boundary.astype(np.int64) @ x
    cx = system.proj_X.astype(np.int64) @ x
    cy = system.proj_Y.astype(np.int64) @ x
    return FeasibilityReport(np.flatnonzero(d != 0), np.flatnonzero(cx > 1),
                             np.flatnonzero(cy != 1))


def product_orientation(prod: ProductSpace, edge, column: int) -> int:
    """Product orientation operator from vertex sequences alone.

    ``edge`` is ``(X extended edge id, Y extended edge id)``.
    """
    xa, xb = prod.extX.edge_vertices(edge[0])
    ya, yb = prod.extY.edge_vertices(edge[1])
    tri = tuple(zip(prod.xv[column].tolist(), prod.yv[column].tolist()))
    return orientation_operator(((xa, ya), (xb, yb)), tri)


def realization(extX: ExtendedElements, extY: ExtendedElements, x_id: int, y_id: int,
                pairing: int):
    """Vertex triples ``(xv, yv)`` of the product triangle ``(x_id, y_id, pairing)``."""
    xv = extX.vertex_pattern(x_id)
    yv = np.roll(np.asarray(extY.vertex_pattern(y_id)), -int(pairing))
    return tuple(xv), tuple(int(v) for v in yv)


def indicator_from_records(prod: ProductSpace, records) -> np.ndarray:
    """Binary column vector selecting the product triangles named in ``records``."""
    if not records:
        return np.zeros(prod.n_columns, dtype=np.int8)
    x = np.array([r["x_id"] for r in records])
    y = np.array([r["y_id"] for r in records])
    p = np.array([r["pairing"] for r in records])
    cols = prod.column_ids(x, y, p)
    if np.any(cols < 0):
        bad = records[int(np.flatnonzero(cols < 0)[0])]
        raise ProductSpaceError(f"record {bad} is not a product triangle of this space")
    bits = np.zeros(prod.n_columns, dtype=np.int8)
    bits[cols] = 1
    return bits
