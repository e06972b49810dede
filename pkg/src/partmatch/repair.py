"""Manifold repair, consistent orientation and hole closing."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, validate

logger = logging.getLogger(__name__)

REMOVED_FRACTION_WARNING = 0.006


class UnrepairableMeshError(ValueError):
    pass


class NonOrientableError(UnrepairableMeshError):
    pass


@dataclass
class RepairLog:
    duplicated_vertices: list = field(default_factory=list)
    removed_triangles: list = field(default_factory=list)
    original_triangles: int = 0
    closed_holes: list = field(default_factory=list)

    @property
    def removed_fraction(self) -> float:
        if self.original_triangles == 0:
            return 0.0
        return len(self.removed_triangles) / self.original_triangles

    @property
    def empty(self) -> bool:
        return not (self.duplicated_vertices or self.removed_triangles or self.closed_holes)

    def report(self) -> str:
        lines = [
            f"duplicated_vertices: {len(self.duplicated_vertices)}",
            *(f"  {a} -> {b}" for a, b in self.duplicated_vertices),
            f"removed_triangles: {len(self.removed_triangles)}",
            *(f"  {f}" for f in self.removed_triangles),
            f"removed_fraction: {self.removed_fraction:.6f}",
            f"closed_holes: {len(self.closed_holes)}",
            *(f"  loop_length={n} centroid={c}" for n, c in self.closed_holes),
        ]
        return "\n".join(lines) + "\n"


def _split_pinches(v: np.ndarray, t: np.ndarray, log: RepairLog):
    """Give every extra triangle fan around a vertex its own vertex copy."""
    t = t.copy()
    verts = list(v)
    incident: dict[int, list[int]] = {}
    for f, tri in enumerate(t.tolist()):
        for x in tri:
            incident.setdefault(x, []).append(f)
    for x in sorted(incident):
        faces = incident[x]
        parent = {f: f for f in faces}

        def find(f):
            while parent[f] != f:
                parent[f] = parent[parent[f]]
                f = parent[f]
            return f

        by_other: dict[int, int] = {}
        for f in faces:
            for w in t[f].tolist():
                if w == x:
                    continue
                if w in by_other:
                    parent[find(f)] = find(by_other[w])
                else:
                    by_other[w] = f
        groups: dict[int, list[int]] = {}
        for f in faces:
            groups.setdefault(find(f), []).append(f)
        if len(groups) <= 1:
            continue
        ordered = sorted(groups.values(), key=lambda g: min(g))
        for g in ordered[1:]:
            new = len(verts)
            verts.append(v[x])
            log.duplicated_vertices.append((x, new))
            for f in g:
                t[f][t[f] == x] = new
    return np.array(verts).reshape(-1, 3), t


def _compact(v: np.ndarray, t: np.ndarray) -> Mesh:
    used = np.unique(t)
    remap = np.full(len(v), -1)
    remap[used] = np.arange(len(used))
    return Mesh(v[used], remap[t] if len(t) else t)


def make_manifold(mesh: Mesh):
    """Split pinch vertices, keep the largest component, orient it.

    Degenerate triangles (repeated vertex index) are dropped first. Pinch
    vertices are split before components are measured. Raises
    :class:`UnrepairableMeshError` when non-manifold edges survive.
    """
    log = RepairLog(original_triangles=mesh.n_triangles)
    t = mesh.triangles
    deg = (t[:, 0] == t[:, 1]) | (t[:, 1] == t[:, 2]) | (t[:, 0] == t[:, 2])
    alive = np.flatnonzero(~deg)
    log.removed_triangles += np.flatnonzero(deg).tolist()
    v, t2 = _split_pinches(mesh.vertices, t[alive], log)
    if len(t2) == 0:
        raise UnrepairableMeshError("no triangles left")
    tmp = Mesh(v, t2)
    labels = tmp.face_components()
    counts = np.bincount(labels)
    areas = np.bincount(labels, weights=tmp.triangle_areas)
    best = max(range(len(counts)), key=lambda c: (counts[c], areas[c], -c))
    keep = labels == best
    log.removed_triangles += alive[~keep].tolist()
    log.removed_triangles.sort()
    # duplicates that ended up outside the kept component are not reported
    used = np.unique(t2[keep])
    remap = np.full(len(v), -1)
    remap[used] = np.arange(len(used))
    log.duplicated_vertices = [(a, int(remap[b])) for a, b in log.duplicated_vertices
                               if remap[b] >= 0]
    out = _compact(v, t2[keep])
    bad = validate(out).of_kind("non-manifold edge")
    if bad:
        raise UnrepairableMeshError(f"non-manifold edges remain: {[b.indices for b in bad]}")
    out = orient_consistently(out)
    if log.removed_fraction > REMOVED_FRACTION_WARNING:
        logger.warning("repair removed %.2f%% of triangles", 100 * log.removed_fraction)
    return out, log


def _signed_volume(v: np.ndarray, t: np.ndarray) -> float:
    p = v[t]
    return float(np.einsum("ij,ij->i", p[:, 0], np.cross(p[:, 1], p[:, 2])).sum() / 6.0)


def orient_consistently(mesh: Mesh) -> Mesh:
    """Flip windings so neighbouring triangles agree; closed parts face outward."""
    t = mesh.triangles.copy()
    nf = len(t)
    edge_faces: dict[tuple, list[int]] = {}
    for f, tri in enumerate(t.tolist()):
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            edge_faces.setdefault((min(a, b), max(a, b)), []).append(f)
    if any(len(fs) > 2 for fs in edge_faces.values()):
        raise UnrepairableMeshError("orientation needs an edge-manifold mesh")

    def directed(f, a, b):
        tri = t[f].tolist()
        for k in range(3):
            if tri[k] == a and tri[(k + 1) % 3] == b:
                return True
        return False

    flipped = np.zeros(nf, dtype=bool)
    visited = np.zeros(nf, dtype=bool)
    comp = np.full(nf, -1)
    n_comp = 0
    for seed in range(nf):
        if visited[seed]:
            continue
        visited[seed] = True
        comp[seed] = n_comp
        queue = deque([seed])
        while queue:
            f = queue.popleft()
            tri = t[f].tolist()
            for k in range(3):
                a, b = tri[k], tri[(k + 1) % 3]
                for g in edge_faces[(min(a, b), max(a, b))]:
                    if g == f:
                        continue
                    # consistent iff g contains (b, a)
                    same_dir = directed(g, a, b)
                    if not visited[g]:
                        if same_dir:
                            t[g] = t[g][::-1]
                            flipped[g] = True
                        visited[g] = True
                        comp[g] = n_comp
                        queue.append(g)
                    elif same_dir:
                        raise NonOrientableError("non-orientable surface")
        n_comp += 1

    tmp = Mesh(mesh.vertices, t)
    for c in range(n_comp):
        faces = np.flatnonzero(comp == c)
        keys = {}
        for f in faces:
            tri = t[f].tolist()
            for k in range(3):
                e = (min(tri[k], tri[(k + 1) % 3]), max(tri[k], tri[(k + 1) % 3]))
                keys[e] = keys.get(e, 0) + 1
        closed = all(n == 2 for n in keys.values())
        if closed and _signed_volume(tmp.vertices, t[faces]) < 0:
            t[faces] = t[faces][:, ::-1]
    if not flipped.any() and np.array_equal(t, mesh.triangles):
        return mesh
    return Mesh(mesh.vertices, t)


def close_holes(mesh: Mesh, max_boundary_length: int | None = None):
    """Fan-triangulate boundary loops around a new centroid vertex.

    Loops longer than ``max_boundary_length`` are left open; ``None`` closes
    every loop.
    """
    log = RepairLog(original_triangles=mesh.n_triangles)
    verts = [mesh.vertices]
    tris = [mesh.triangles]
    nv = mesh.n_vertices
    for loop in mesh.boundary_loops():
        if max_boundary_length is not None and len(loop) > max_boundary_length:
            continue
        c = nv
        nv += 1
        verts.append(mesh.vertices[loop].mean(axis=0, keepdims=True))
        # boundary edge (a, b) gets the triangle (b, a, c)
        fan = [[loop[(i + 1) % len(loop)], loop[i], c] for i in range(len(loop))]
        tris.append(np.array(fan, dtype=np.int64))
        log.closed_holes.append((len(loop), c))
    if not log.closed_holes:
        return mesh, log
    return Mesh(np.vstack(verts), np.vstack(tris)), log
