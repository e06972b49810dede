"""Half-edge collapse decimation that records the fine-to-coarse vertex map."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import FeatureError, FeatureSet
from .mesh import Mesh, mixed_voronoi_areas, surface_area


class DecimationError(ValueError):
    pass


@dataclass
class Snapshot:
    """One resolution level of a decimation run.

    ``vertex_ids[c]`` is the fine vertex kept as coarse vertex ``c``;
    ``fine_to_coarse[v]`` is the coarse vertex fine vertex ``v`` merged into.
    """

    face_count: int
    n_collapses: int
    vertex_ids: np.ndarray
    fine_to_coarse: np.ndarray
    triangles: np.ndarray


@dataclass
class DecimationTrace:
    n_fine: int
    collapses: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    fine_vertex_areas: np.ndarray | None = None

    @property
    def fine_to_coarse(self) -> np.ndarray:
        """Map of the coarsest snapshot."""
        return self.snapshots[-1].fine_to_coarse

    def level_map(self, fine_level: int, coarse_level: int) -> np.ndarray:
        """Map snapshot ``fine_level`` vertices to snapshot ``coarse_level`` vertices.

        Snapshots are ordered fine to coarse, so ``coarse_level > fine_level``.
        """
        fine = self.snapshots[fine_level]
        coarse = self.snapshots[coarse_level]
        return coarse.fine_to_coarse[fine.vertex_ids]

    def save(self, path) -> None:
        data = {"n_fine": np.array(self.n_fine),
                "collapses": np.array(self.collapses, dtype=np.int64).reshape(-1, 2),
                "fine_vertex_areas": (self.fine_vertex_areas if self.fine_vertex_areas is not None
                                      else np.zeros(0))}
        for i, s in enumerate(self.snapshots):
            data[f"s{i}_meta"] = np.array([s.face_count, s.n_collapses])
            data[f"s{i}_vertex_ids"] = s.vertex_ids
            data[f"s{i}_fine_to_coarse"] = s.fine_to_coarse
            data[f"s{i}_triangles"] = s.triangles
        np.savez(Path(path), **data)

    @classmethod
    def load(cls, path) -> "DecimationTrace":
        z = np.load(Path(path))
        areas = z["fine_vertex_areas"]
        tr = cls(int(z["n_fine"]), [tuple(map(int, c)) for c in z["collapses"]],
                 fine_vertex_areas=areas if len(areas) else None)
        i = 0
        while f"s{i}_meta" in z:
            fc, nc = (int(x) for x in z[f"s{i}_meta"])
            tr.snapshots.append(Snapshot(fc, nc, z[f"s{i}_vertex_ids"],
                                         z[f"s{i}_fine_to_coarse"], z[f"s{i}_triangles"]))
            i += 1
        return tr

    def mesh(self, fine: Mesh, level: int = -1) -> Mesh:
        s = self.snapshots[level]
        return Mesh(fine.vertices[s.vertex_ids], s.triangles)


class _Collapser:
    def __init__(self, mesh: Mesh):
        self.pos = mesh.vertices
        self.faces = [list(map(int, f)) for f in mesh.triangles]
        self.alive_face = [True] * len(self.faces)
        self.nf = len(self.faces)
        self.vfaces: list[set] = [set() for _ in range(mesh.n_vertices)]
        for f, tri in enumerate(self.faces):
            for v in tri:
                self.vfaces[v].add(f)
        self.parent = list(range(mesh.n_vertices))
        self.closed = mesh.is_closed
        comps = mesh.face_components()
        self.n_components = int(comps.max()) + 1 if len(comps) else 0

    def neighbors(self, v):
        out = set()
        for f in self.vfaces[v]:
            out.update(self.faces[f])
        out.discard(v)
        return out

    def edge_faces(self, u, v):
        return [f for f in self.vfaces[u] if v in self.faces[f]]

    def is_boundary_edge(self, u, v):
        return len(self.edge_faces(u, v)) == 1

    def is_boundary_vertex(self, v):
        return any(self.is_boundary_edge(v, w) for w in self.neighbors(v))

    def normal(self, tri):
        p = self.pos
        return np.cross(p[tri[1]] - p[tri[0]], p[tri[2]] - p[tri[0]])

    def try_collapse(self, a, b):
        """Collapse edge {a, b} if legal; return (kept, removed) or None."""
        shared = self.edge_faces(a, b)
        if not shared:
            return None
        edge_on_boundary = len(shared) == 1
        ba, bb = self.is_boundary_vertex(a), self.is_boundary_vertex(b)
        if ba and bb and not edge_on_boundary:
            return None
        if bb and not ba:
            keep, gone = b, a
        else:
            keep, gone = a, b
        # link condition
        opposite = set()
        for f in shared:
            opposite.update(self.faces[f])
        opposite -= {a, b}
        if self.neighbors(a) & self.neighbors(b) != opposite:
            return None
        removed = len(shared)
        floor = 4 if (self.closed and not edge_on_boundary) else 1
        if self.nf - removed < floor * self.n_components:
            return None
        # no flipped or collapsed triangles around the removed vertex
        moved = [f for f in self.vfaces[gone] if f not in shared]
        for f in moved:
            old = self.faces[f]
            new = [keep if x == gone else x for x in old]
            n0, n1 = self.normal(old), self.normal(new)
            if np.dot(n0, n1) <= 0 or np.linalg.norm(n1) <= 1e-12 * max(np.linalg.norm(n0), 1e-300):
                return None
        # no duplicate faces after the collapse
        seen = set()
        for f in self.vfaces[keep] | set(moved):
            if f in shared:
                continue
            tri = [keep if x == gone else x for x in self.faces[f]]
            key = frozenset(tri)
            if key in seen:
                return None
            seen.add(key)
        for f in shared:
            self.alive_face[f] = False
            for x in self.faces[f]:
                self.vfaces[x].discard(f)
        self.nf -= removed
        for f in moved:
            self.faces[f] = [keep if x == gone else x for x in self.faces[f]]
            self.vfaces[keep].add(f)
        self.vfaces[gone] = set()
        self.parent[gone] = keep
        return keep, gone

    def root(self, v):
        while self.parent[v] != v:
            v = self.parent[v]
        return v

    def snapshot(self, n_collapses) -> Snapshot:
        n = len(self.parent)
        roots = np.array([self.root(v) for v in range(n)])
        kept = np.flatnonzero(roots == np.arange(n))
        remap = np.full(n, -1)
        remap[kept] = np.arange(len(kept))
        tris = np.array([self.faces[f] for f in range(len(self.faces)) if self.alive_face[f]],
                        dtype=np.int64).reshape(-1, 3)
        return Snapshot(int(self.nf), n_collapses, kept, remap[roots], remap[tris])


def _key(pos, a, b):
    a, b = min(a, b), max(a, b)
    return (float(np.linalg.norm(pos[a] - pos[b])), a, b)


def decimate_levels(mesh: Mesh, targets) -> tuple[list[Mesh], DecimationTrace]:
    """Decimate once, snapshotting at every face target (largest first).

    Collapses go shortest edge first (ties by vertex ids) and keep one
    endpoint in place, so every coarse vertex is a fine vertex.
    """
    targets = sorted({int(t) for t in targets}, reverse=True)
    if not targets:
        raise ValueError("no face targets given")
    if targets[0] > mesh.n_triangles:
        raise DecimationError(f"target {targets[0]} exceeds |F|={mesh.n_triangles}")
    if targets[-1] < 1:
        raise DecimationError("face targets must be positive")
    if mesh.is_closed and targets[-1] < 4:
        raise DecimationError("a closed surface needs at least 4 faces")
    c = _Collapser(mesh)
    trace = DecimationTrace(mesh.n_vertices, fine_vertex_areas=mixed_voronoi_areas(mesh))
    heap = [_key(mesh.vertices, a, b) for a, b in mesh.undirected_edges.tolist()]
    heapq.heapify(heap)
    rejected = []
    progress = False
    ti = 0
    while ti < len(targets):
        if c.nf <= targets[ti]:
            trace.snapshots.append(c.snapshot(len(trace.collapses)))
            ti += 1
            continue
        if not heap:
            if rejected and progress:
                heap = rejected
                heapq.heapify(heap)
                rejected, progress = [], False
                continue
            raise DecimationError(
                f"cannot reach {targets[ti]} faces without breaking manifoldness "
                f"(stuck at {c.nf})")
        key = heapq.heappop(heap)
        _, a, b = key
        if c.parent[a] != a or c.parent[b] != b:
            continue
        res = c.try_collapse(a, b)
        if res is None:
            rejected.append(key)
            continue
        progress = True
        trace.collapses.append(res)
        keep = res[0]
        for w in c.neighbors(keep):
            heapq.heappush(heap, _key(mesh.vertices, keep, w))
    meshes = [Mesh(mesh.vertices[s.vertex_ids], s.triangles) for s in trace.snapshots]
    return meshes, trace


def decimate(mesh: Mesh, target_faces: int) -> tuple[Mesh, DecimationTrace]:
    meshes, trace = decimate_levels(mesh, [target_faces])
    return meshes[0], trace


def replay(fine: Mesh, collapses) -> Mesh:
    """Apply collapse pairs to ``fine``; used to audit a trace."""
    parent = np.arange(fine.n_vertices)
    for keep, gone in collapses:
        parent[gone] = keep
    # resolve chains
    for _ in range(fine.n_vertices):
        nxt = parent[parent]
        if np.array_equal(nxt, parent):
            break
        parent = nxt
    t = parent[fine.triangles]
    ok = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    t = t[ok]
    kept = np.flatnonzero(parent == np.arange(fine.n_vertices))
    remap = np.full(fine.n_vertices, -1)
    remap[kept] = np.arange(len(kept))
    return Mesh(fine.vertices[kept], remap[t])


def partial_face_budget(full: Mesh, partial: Mesh, full_target_faces: int) -> int:
    """Face target for the partial shape: twice its relative area times the full target."""
    af, ap = surface_area(full), surface_area(partial)
    if af <= 0 or ap <= 0:
        raise DecimationError("zero-area input")
    budget = math.floor(2.0 * ap / af * full_target_faces + 0.5)
    return int(min(max(budget, 4), partial.n_triangles))


def transfer_features(fine_features: FeatureSet, trace: DecimationTrace,
                      coarse: Mesh | None = None, level: int = -1) -> FeatureSet:
    """Area-weighted average of fine descriptors over each coarse vertex's region.

    Fine vertices are assigned to coarse vertices through the trace and
    weighted by their mixed Voronoi areas on the fine mesh.
    """
    w = fine_features.descriptors
    if len(w) != trace.n_fine:
        raise FeatureError("feature rows do not match the fine mesh")
    snap = trace.snapshots[level]
    n_coarse = len(snap.vertex_ids)
    if coarse is not None and coarse.n_vertices != n_coarse:
        raise FeatureError("coarse mesh does not match the trace snapshot")
    areas = trace.fine_vertex_areas
    if areas is None:
        areas = np.ones(trace.n_fine)
    m = snap.fine_to_coarse
    num = np.zeros((n_coarse, w.shape[1]))
    np.add.at(num, m, w * areas[:, None])
    den = np.bincount(m, weights=areas, minlength=n_coarse)
    return FeatureSet(num / den[:, None])
