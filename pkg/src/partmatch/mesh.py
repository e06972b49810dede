"""Oriented triangle meshes with directed-edge connectivity.

A :class:`Mesh` stores vertex positions and oriented triangles. Directed edges
are derived from the triangle windings in face order, so on an orientation
consistent mesh directed edge ``3 * f + k`` is the ``k``-th edge of face ``f``.
Extended (degenerate) elements are exposed through :class:`ExtendedElements`,
which lays out vertices, directed edges and triangles in one dense id range.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

VERTEX, EDGE, TRIANGLE = "vertex", "edge", "triangle"


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class Mesh:
    """Triangle mesh with derived directed edges and boundary flags.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
        Vertex positions.
    triangles : array_like, shape (m, 3)
        Vertex index triples. The winding defines the orientation.
    """

    def __init__(self, vertices, triangles):
        v = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshFormatError("out-of-range vertex index")
        v.setflags(write=False)
        t.setflags(write=False)
        self.vertices = v
        self.triangles = t

    def __repr__(self):
        return (f"Mesh(|V|={self.n_vertices}, |E|={self.n_edges}, "
                f"|F|={self.n_triangles})")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        """Number of directed edges."""
        return len(self.directed_edges)

    @cached_property
    def directed_edges(self) -> np.ndarray:
        t = self.triangles
        raw = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
        if len(raw) == 0:
            return np.zeros((0, 2), dtype=np.int64)
        keys = raw[:, 0] * self.n_vertices + raw[:, 1]
        _, first = np.unique(keys, return_index=True)
        out = raw[np.sort(first)]
        out.setflags(write=False)
        return out

    @cached_property
    def _edge_lookup(self):
        e = self.directed_edges
        keys = e[:, 0] * self.n_vertices + e[:, 1]
        order = np.argsort(keys, kind="stable")
        return keys[order], order

    def edge_ids(self, a, b) -> np.ndarray:
        """Vectorized directed-edge lookup; ``-1`` where ``(a, b)`` is absent."""
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        skeys, order = self._edge_lookup
        q = a * self.n_vertices + b
        if len(skeys) == 0:
            return np.full(q.shape, -1, dtype=np.int64)
        pos = np.searchsorted(skeys, q)
        pos_c = np.minimum(pos, len(skeys) - 1)
        hit = skeys[pos_c] == q
        return np.where(hit, order[pos_c], -1)

    def edge_id(self, a: int, b: int) -> int:
        return int(self.edge_ids(a, b))

    @cached_property
    def twin(self) -> np.ndarray:
        """Id of the reversed directed edge, or ``-1`` on the boundary."""
        e = self.directed_edges
        return self.edge_ids(e[:, 1], e[:, 0])

    @cached_property
    def boundary_edge_flags(self) -> np.ndarray:
        return self.twin < 0

    @cached_property
    def undirected_edges(self) -> np.ndarray:
        e = np.sort(self.directed_edges, axis=1)
        return np.unique(e, axis=0) if len(e) else e

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        """Symmetric vertex adjacency (0/1) over the edge graph."""
        e = self.undirected_edges
        n = self.n_vertices
        a = sparse.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return ((a + a.T) > 0).astype(np.int8).tocsr()

    def neighbors(self, v: int) -> np.ndarray:
        adj = self.adjacency
        return adj.indices[adj.indptr[v]:adj.indptr[v + 1]]

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.directed_edges[self.boundary_edge_flags].ravel()] = True
        return mask

    @property
    def is_closed(self) -> bool:
        return not self.boundary_edge_flags.any()

    def boundary_loops(self) -> list[list[int]]:
        """Boundary loops as vertex lists following boundary edge direction."""
        be = self.directed_edges[self.boundary_edge_flags]
        nxt: dict[int, int] = {}
        for a, b in be:
            if int(a) in nxt:
                raise ValueError(f"vertex {a} has several outgoing boundary edges")
            nxt[int(a)] = int(b)
        loops, seen = [], set()
        for start in sorted(nxt):
            if start in seen:
                continue
            loop, v = [], start
            while v not in seen:
                seen.add(v)
                loop.append(v)
                v = nxt[v]
            loops.append(loop)
        return loops

    def euler_characteristic(self) -> int:
        used = np.unique(self.triangles)
        return len(used) - len(self.undirected_edges) + self.n_triangles

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unnormalized normals (twice the triangle area in length)."""
        p = self.vertices[self.triangles]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def triangle_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.face_normals, axis=1)

    def face_components(self) -> np.ndarray:
        """Label triangles by edge-connected component."""
        t = self.triangles
        nf = len(t)
        if nf == 0:
            return np.zeros(0, dtype=np.int64)
        e = np.sort(np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2), axis=1)
        keys = e[:, 0] * self.n_vertices + e[:, 1]
        faces = np.repeat(np.arange(nf), 3)
        order = np.argsort(keys, kind="stable")
        ks, fs = keys[order], faces[order]
        same = ks[1:] == ks[:-1]
        g = sparse.coo_matrix((np.ones(same.sum()), (fs[:-1][same], fs[1:][same])),
                              shape=(nf, nf))
        _, labels = connected_components(g, directed=False)
        return labels

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return h.hexdigest()[:16]

    def transformed(self, rotation=None, translation=None) -> "Mesh":
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return Mesh(v, self.triangles)


@dataclass(frozen=True)
class Violation:
    kind: str
    indices: tuple

    def __str__(self):
        return f"{self.kind}: {self.indices}"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    def __bool__(self):
        # truthy when problems were found
        return bool(self.violations)

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def kinds(self) -> set:
        return {v.kind for v in self.violations}

    def of_kind(self, kind: str) -> list:
        return [v for v in self.violations if v.kind == kind]


def validate(mesh: Mesh) -> ValidationReport:
    """Check edge/vertex manifoldness, orientation and vertex usage."""
    report = ValidationReport()
    t = mesh.triangles
    nv = mesh.n_vertices
    for f in np.flatnonzero((t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])):
        report.violations.append(Violation("degenerate triangle", (int(f),)))

    raw = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
    if len(raw):
        und = np.sort(raw, axis=1)
        ukeys, ucount = np.unique(und[:, 0] * nv + und[:, 1], return_counts=True)
        for k in ukeys[ucount > 2]:
            report.violations.append(Violation("non-manifold edge", (int(k // nv), int(k % nv))))
        dkeys, dcount = np.unique(raw[:, 0] * nv + raw[:, 1], return_counts=True)
        for k in dkeys[dcount > 1]:
            report.violations.append(
                Violation("inconsistent orientation", (int(k // nv), int(k % nv))))

    # fan connectivity around each vertex
    incident: list[list[int]] = [[] for _ in range(nv)]
    for f, tri in enumerate(t.tolist()):
        for v in set(tri):
            incident[v].append(f)
    for v in range(nv):
        faces = incident[v]
        if not faces:
            report.violations.append(Violation("isolated vertex", (v,)))
            continue
        if len(faces) == 1:
            continue
        parent = {f: f for f in faces}

        def find(f):
            while parent[f] != f:
                parent[f] = parent[parent[f]]
                f = parent[f]
            return f

        by_other: dict[int, int] = {}
        for f in faces:
            for w in t[f]:
                w = int(w)
                if w == v:
                    continue
                if w in by_other:
                    parent[find(f)] = find(by_other[w])
                else:
                    by_other[w] = f
        if len({find(f) for f in faces}) > 1:
            report.violations.append(Violation("non-manifold vertex", (v,)))
    return report


def orientation_operator(edge, tri) -> int:
    """Signed incidence of a (possibly degenerate) edge on a triangle.

    ``edge`` is a pair and ``tri`` a triple of hashable vertex labels, so the
    same rule serves single meshes and product spaces. The result counts the
    occurrences of ``edge`` in the cyclic boundary ``(t0,t1),(t1,t2),(t2,t0)``
    minus those of its reverse. For a non-degenerate triangle this is the
    usual +1 / -1 / 0 rule; self-edges and edges of degenerate triangles
    cancel against their reverses and give 0.
    """
    a, b = edge
    if a == b:
        return 0
    s = 0
    for i in range(3):
        p, q = tri[i], tri[(i + 1) % 3]
        if (p, q) == (a, b):
            s += 1
        elif (p, q) == (b, a):
            s -= 1
    return s


@dataclass(frozen=True)
class ExtendedElements:
    """Dense ids for vertices, directed edges and triangles of one mesh.

    Vertices occupy ``[0, nv)``, directed edges ``[nv, nv + ne)`` and
    triangles ``[nv + ne, nv + ne + nf)``. Extended edges are the first
    ``nv + ne`` ids; extended triangles are all of them.
    """

    mesh: Mesh

    @property
    def nv(self) -> int:
        return self.mesh.n_vertices

    @property
    def ne(self) -> int:
        return self.mesh.n_edges

    @property
    def nf(self) -> int:
        return self.mesh.n_triangles

    @property
    def n_extended_edges(self) -> int:
        return self.nv + self.ne

    @property
    def n_extended_triangles(self) -> int:
        return self.nv + self.ne + self.nf

    def vertex_id(self, v: int) -> int:
        return int(v)

    def edge_id(self, e: int) -> int:
        return self.nv + int(e)

    def triangle_id(self, f: int) -> int:
        return self.nv + self.ne + int(f)

    def element(self, ext_id: int) -> tuple[str, int]:
        """Return ``(tag, local index)`` for an extended id."""
        i = int(ext_id)
        if i < 0 or i >= self.n_extended_triangles:
            raise KeyError(f"extended id {ext_id} out of range")
        if i < self.nv:
            return VERTEX, i
        if i < self.nv + self.ne:
            return EDGE, i - self.nv
        return TRIANGLE, i - self.nv - self.ne

    def tag(self, ext_id: int) -> str:
        return self.element(ext_id)[0]

    def tags(self, ext_ids) -> np.ndarray:
        ids = np.asarray(ext_ids)
        out = np.full(ids.shape, TRIANGLE, dtype=object)
        out[ids < self.nv + self.ne] = EDGE
        out[ids < self.nv] = VERTEX
        return out

    def vertex_pattern(self, ext_id: int) -> tuple[int, int, int]:
        """Canonical vertex triple: ``(v,v,v)``, ``(a,a,b)`` or the triangle."""
        tag, i = self.element(ext_id)
        if tag == VERTEX:
            return (i, i, i)
        if tag == EDGE:
            a, b = self.mesh.directed_edges[i]
            return (int(a), int(a), int(b))
        return tuple(int(x) for x in self.mesh.triangles[i])

    def edge_vertices(self, ext_edge_id: int) -> tuple[int, int]:
        tag, i = self.element(ext_edge_id)
        if tag == VERTEX:
            return (i, i)
        if tag == EDGE:
            a, b = self.mesh.directed_edges[i]
            return (int(a), int(b))
        raise KeyError(f"{ext_edge_id} is a triangle, not an extended edge")


def extend(mesh: Mesh) -> ExtendedElements:
    return ExtendedElements(mesh)


def surface_area(mesh: Mesh) -> float:
    if mesh.n_triangles == 0:
        return 0.0
    return float(mesh.triangle_areas.sum())


# --- file IO -------------------------------------------------------------

def _data_lines(text: str):
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            yield line


def _read_off(path: Path) -> Mesh:
    lines = _data_lines(path.read_text())
    try:
        head = next(lines)
        if head.upper().startswith("OFF"):
            rest = head[3:].split()
            counts = rest if rest else next(lines).split()
        else:
            raise MeshFormatError("missing OFF header")
        nv, nf = int(counts[0]), int(counts[1])
        verts = [[float(x) for x in next(lines).split()[:3]] for _ in range(nv)]
        faces = []
        for _ in range(nf):
            parts = next(lines).split()
            k = int(parts[0])
            if k != 3:
                raise MeshFormatError("non-triangular face")
            faces.append([int(x) for x in parts[1:4]])
    except StopIteration as exc:
        raise MeshFormatError("unexpected end of OFF file") from exc
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"cannot parse OFF file: {exc}") from exc
    return Mesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def _read_ply(path: Path) -> Mesh:
    text = path.read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshFormatError("missing PLY magic")
    nv = nf = None
    current = None
    vprops: list[str] = []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise MeshFormatError("only ASCII PLY is supported")
        elif parts[0] == "element":
            current = parts[1]
            if current == "vertex":
                nv = int(parts[2])
            elif current == "face":
                nf = int(parts[2])
        elif parts[0] == "property" and current == "vertex":
            vprops.append(parts[-1])
        elif parts[0] == "end_header":
            break
    if nv is None or nf is None:
        raise MeshFormatError("PLY header lacks vertex or face element")
    try:
        xyz = [vprops.index(c) for c in ("x", "y", "z")]
        body = [ln for ln in lines[i:] if ln.strip()]
        verts = []
        for ln in body[:nv]:
            vals = ln.split()
            verts.append([float(vals[j]) for j in xyz])
        faces = []
        for ln in body[nv:nv + nf]:
            vals = ln.split()
            if int(vals[0]) != 3:
                raise MeshFormatError("non-triangular face")
            faces.append([int(x) for x in vals[1:4]])
    except (ValueError, IndexError) as exc:
        if isinstance(exc, MeshFormatError):
            raise
        raise MeshFormatError(f"cannot parse PLY file: {exc}") from exc
    if len(verts) != nv or len(faces) != nf:
        raise MeshFormatError("unexpected end of PLY file")
    return Mesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def load_mesh(path, format: str | None = None) -> Mesh:
    """Read an ASCII OFF or PLY triangle mesh. No validation is run."""
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    if fmt == "OFF":
        return _read_off(path)
    if fmt == "PLY":
        return _read_ply(path)
    raise MeshFormatError(f"unsupported mesh format {fmt!r}")


def save_mesh(mesh: Mesh, path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).upper()
    rows = []
    if fmt == "OFF":
        rows.append("OFF")
        rows.append(f"{mesh.n_vertices} {mesh.n_triangles} 0")
        rows += [" ".join(repr(float(x)) for x in p) for p in mesh.vertices]
        rows += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    elif fmt == "PLY":
        rows += ["ply", "format ascii 1.0", f"element vertex {mesh.n_vertices}",
                 "property double x", "property double y", "property double z",
                 f"element face {mesh.n_triangles}", "property list uchar int vertex_indices",
                 "end_header"]
        rows += [" ".join(repr(float(x)) for x in p) for p in mesh.vertices]
        rows += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    else:
        raise MeshFormatError(f"unsupported mesh format {fmt!r}")
    path.write_text("\n".join(rows) + "\n")


# --- discrete differential geometry ---------------------------------------

def _corner_cotangents(mesh: Mesh) -> np.ndarray:
    """Cotangent of each triangle corner, shape (m, 3)."""
    p = mesh.vertices[mesh.triangles]
    cots = np.empty((mesh.n_triangles, 3))
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        cross = np.linalg.norm(np.cross(u, w), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            cots[:, i] = np.einsum("ij,ij->i", u, w) / cross
    return cots


def cotangent_laplacian(mesh: Mesh) -> sparse.csr_matrix:
    """Positive semi-definite cotangent stiffness matrix."""
    cots = _corner_cotangents(mesh)
    if not np.all(np.isfinite(cots)):
        raise FloatingPointError("degenerate triangle in cotangent Laplacian")
    t = mesh.triangles
    n = mesh.n_vertices
    rows, cols, vals = [], [], []
    for i in range(3):
        a, b = t[:, (i + 1) % 3], t[:, (i + 2) % 3]
        w = 0.5 * cots[:, i]
        rows += [a, b]
        cols += [b, a]
        vals += [-w, -w]
    off = sparse.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sparse.diags(diag)).tocsr()


def mixed_voronoi_areas(mesh: Mesh) -> np.ndarray:
    """Per-vertex mixed Voronoi areas; they sum to the surface area."""
    p = mesh.vertices[mesh.triangles]
    t = mesh.triangles
    area = mesh.triangle_areas
    cots = _corner_cotangents(mesh)
    out = np.zeros((len(t), 3))
    obtuse = np.zeros((len(t), 3), dtype=bool)
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        w = p[:, (i + 2) % 3] - p[:, i]
        obtuse[:, i] = np.einsum("ij,ij->i", u, w) < 0
    any_obtuse = obtuse.any(axis=1)
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        eij = np.sum((p[:, j] - p[:, i]) ** 2, axis=1)
        eik = np.sum((p[:, k] - p[:, i]) ** 2, axis=1)
        vor = (eij * cots[:, k] + eik * cots[:, j]) / 8.0
        out[:, i] = np.where(any_obtuse, np.where(obtuse[:, i], area / 2, area / 4), vor)
    out = np.nan_to_num(out)
    res = np.zeros(mesh.n_vertices)
    np.add.at(res, t.ravel(), out.ravel())
    return res
