from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from partmatch import synthetic as SY  # noqa: E402
from partmatch.mesh import Mesh, extend  # noqa: E402
from partmatch.product import build_constraint_system, build_product_space  # noqa: E402

import oracles  # noqa: E402


def sub(mesh: Mesh, faces) -> Mesh:
    """Compact submesh spanned by a subset of faces."""
    t = mesh.triangles[list(faces)]
    used = np.unique(t)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Mesh(mesh.vertices[used], remap[t])


def crafted_pairs():
    """Small (closed X, open Y) pairs, X with 4-12 faces and Y with 1-4."""
    T, O = SY.tetrahedron(), SY.octahedron()
    B5, B6 = SY.bipyramid(5), SY.bipyramid(6)
    return [
        ("tet-tri3", T, sub(T, [0, 1, 2])),
        ("oct-oct4", O, sub(O, [0, 1, 2, 3])),
        ("bip5-bip3", B5, sub(B5, [0, 2, 4])),
        ("bip6-oct4", B6, sub(O, [0, 1, 2, 3])),
        ("bip6-strip3", B6, SY.strip(3)),
        ("oct-oct2", O, sub(O, [0, 1])),
        ("tet-strip2", T, SY.strip(2)),
        ("oct-strip4", O, SY.strip(4)),
        ("tet-tri", T, SY.single_triangle()),
        ("oct-tri", O, SY.single_triangle()),
        ("bip6-tri", B6, SY.single_triangle()),
    ]


def random_pair(seed):
    """Closed X and a 1-4 face patch Y of another solid, drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    X = [SY.tetrahedron(), SY.octahedron(), SY.bipyramid(int(rng.integers(3, 8))),
         SY.icosahedron()][int(rng.integers(4))]
    base = [SY.octahedron(), SY.icosahedron(), SY.bipyramid(6)][int(rng.integers(3))]
    k = int(rng.integers(1, 5))
    start = int(rng.integers(base.n_triangles - k + 1))
    Y = sub(base, range(start, start + k))
    if len(Y.boundary_vertices) and not Y.boundary_vertices.any():
        Y = sub(base, [0])
    return X, Y


def rational_costs(prod, seed: int) -> np.ndarray:
    """Quarter-integer costs in [0.25, 2]; degenerate X sides pay half a unit more."""
    rng = np.random.default_rng(seed)
    return rng.integers(1, 9, prod.n_columns) / 4 + (prod.x_tag < 2) * 0.5


def oracle_columns(prod, X: Mesh, Y: Mesh):
    """Oracle enumeration plus the map from product columns to oracle columns."""
    cols = oracles.enumerate_product(X.triangles.tolist(), Y.triangles.tolist())
    key = {oracles._canon(xv, yv): i for i, (xv, yv, *_) in enumerate(cols)}
    m = np.array([key[oracles._canon(tuple(prod.xv[j]), tuple(prod.yv[j]))]
                  for j in range(prod.n_columns)])
    return cols, m


def build(X: Mesh, Y: Mesh):
    prod = build_product_space(extend(X), extend(Y))
    return prod, build_constraint_system(prod)


@pytest.fixture
def tet_tri():
    return build(SY.tetrahedron(), SY.single_triangle())


def corrupt(mesh: Mesh, rng) -> Mesh:
    """Apply repairable defects: flipped faces, pinches, danglers, islands, junk."""
    v = mesh.vertices.copy()
    t = mesh.triangles.copy()
    nf = len(t)
    flip = rng.choice(nf, size=rng.integers(1, max(2, nf // 5)), replace=False)
    t[flip] = t[flip][:, ::-1]
    if rng.random() < 0.7:
        # glue two far-apart vertices into a pinch
        A = mesh.adjacency
        from scipy.sparse.csgraph import shortest_path
        d = shortest_path(A, unweighted=True, indices=[0])[0]
        far = np.flatnonzero(d >= 3)
        if len(far):
            b = int(rng.choice(far))
            t[t == b] = 0
    if rng.random() < 0.6:
        # dangling triangle hanging from one vertex
        a = int(rng.integers(len(v)))
        v = np.vstack([v, v[a] + [[0.1, 0, 0], [0, 0.1, 0]]])
        t = np.vstack([t, [[a, len(v) - 2, len(v) - 1]]])
    if rng.random() < 0.5:
        # small separate island
        base = len(v)
        v = np.vstack([v, [[5, 5, 5], [6, 5, 5], [5, 6, 5]]])
        t = np.vstack([t, [[base, base + 1, base + 2]]])
    if rng.random() < 0.4:
        t = np.vstack([t, [[t[0, 0], t[0, 0], t[0, 1]]]])
    if rng.random() < 0.4:
        v = np.vstack([v, [[9, 9, 9]]])
    return Mesh(v, t)


def fuzz_corpus(n: int = 50, seed: int = 0):
    rng = np.random.default_rng(seed)
    bases = [SY.icosphere(1), SY.icosphere(2), SY.octahedron(), SY.bipyramid(7),
             SY.bumpy_sphere(2, seed=3)]
    return [corrupt(bases[i % len(bases)], rng) for i in range(n)]


# --- acceptance summary ------------------------------------------------------

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.split("::")[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    import test_acceptance
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("_")[2])):
        k = int(name.split("_")[2])
        doc = (getattr(test_acceptance, name).__doc__ or "").strip().splitlines()[0]
        verdict = "PASS" if _ACCEPTANCE[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {verdict}  {doc}")
