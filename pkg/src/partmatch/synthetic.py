"""Small synthetic shapes for tests, demos and benchmarks."""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from .mesh import Mesh


def tetrahedron() -> Mesh:
    v = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return Mesh(v, f)


def single_triangle() -> Mesh:
    return Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def octahedron() -> Mesh:
    v = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], float)
    f = np.array([[0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
                  [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5]])
    return Mesh(v, f)


def bipyramid(n: int, height: float = 1.0) -> Mesh:
    """Closed bipyramid over an n-gon: 2n faces, n + 2 vertices."""
    ang = 2 * np.pi * np.arange(n) / n
    ring = np.stack([np.cos(ang), np.sin(ang), np.zeros(n)], axis=1)
    v = np.vstack([ring, [[0, 0, height], [0, 0, -height]]])
    top, bot = n, n + 1
    f = []
    for i in range(n):
        j = (i + 1) % n
        f.append([i, j, top])
        f.append([j, i, bot])
    return Mesh(v, np.array(f))


def icosahedron() -> Mesh:
    t = (1 + 5 ** 0.5) / 2
    v = np.array([[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
                  [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
                  [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]], float)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
                  [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
                  [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
                  [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]])
    return Mesh(v, f)


def icosphere(subdivisions: int = 1) -> Mesh:
    """Unit icosphere with ``20 * 4**subdivisions`` faces."""
    m = icosahedron()
    v = [tuple(p) for p in m.vertices]
    f = m.triangles.tolist()
    for _ in range(subdivisions):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                p = (np.asarray(v[a]) + np.asarray(v[b])) / 2
                v.append(tuple(p / np.linalg.norm(p)))
                cache[key] = len(v) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = nf
    return Mesh(np.array(v), np.array(f))


def bumpy_sphere(subdivisions: int = 2, seed: int = 0, n_bumps: int = 5,
                 amplitude: float = 0.35, axes=(1.3, 1.0, 0.8)) -> Mesh:
    """Icosphere pushed out by Gaussian bumps at random directions.

    The bumps and unequal axes break the sphere's symmetries so intrinsic
    descriptors can tell points apart.
    """
    m = icosphere(subdivisions)
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_bumps, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    heights = amplitude * rng.uniform(0.5, 1.0, size=n_bumps)
    p = m.vertices
    r = np.ones(len(p))
    for d, h in zip(dirs, heights):
        r += h * np.exp(-np.sum((p - d) ** 2, axis=1) / 0.25)
    return Mesh(p * r[:, None] * np.asarray(axes), m.triangles)


def remove_cap(mesh: Mesh, direction, keep_fraction: float):
    """Cut away triangles on one side of a plane.

    Keeps roughly ``keep_fraction`` of the faces (those whose centroid has the
    smallest projection on ``direction``) and compacts the vertices.

    Returns
    -------
    partial : Mesh
    kept_vertices : ndarray
        Original index of each partial vertex (the ground-truth map).
    """
    d = np.asarray(direction, float)
    d /= np.linalg.norm(d)
    c = mesh.vertices[mesh.triangles].mean(axis=1) @ d
    k = int(round(keep_fraction * mesh.n_triangles))
    keep = np.argsort(c, kind="stable")[:k]
    tris = mesh.triangles[np.sort(keep)]
    used = np.unique(tris)
    remap = np.full(mesh.n_vertices, -1)
    remap[used] = np.arange(len(used))
    return Mesh(mesh.vertices[used], remap[tris]), used


def random_rigid(mesh: Mesh, seed: int = 0) -> Mesh:
    rng = np.random.default_rng(seed)
    rot = Rotation.random(random_state=rng).as_matrix()
    return mesh.transformed(rot, rng.normal(size=3))


def strip(n_faces: int) -> Mesh:
    """Open triangle strip / fan patch with ``n_faces`` faces in the plane."""
    if n_faces < 1:
        raise ValueError("n_faces must be positive")
    v = [[0.0, 0.0, 0.0]]
    f = []
    ang = np.linspace(0, np.pi * min(1.6, 0.45 * n_faces), n_faces + 1)
    for a in ang:
        v.append([np.cos(a), np.sin(a), 0.0])
    for i in range(n_faces):
        f.append([0, i + 1, i + 2])
    return Mesh(np.array(v), np.array(f))
