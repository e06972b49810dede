"""Evaluation: normalized geodesic error, conformal distortion, cumulative curves."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .mesh import Mesh, extend, surface_area
from .product import realization

DEFAULT_THRESHOLDS = np.linspace(0.0, 0.25, 101)
DISTORTION_CAP = 10.0


def edge_graph(mesh: Mesh) -> sparse.csr_matrix:
    e = mesh.undirected_edges
    w = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    n = mesh.n_vertices
    g = sparse.coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))
    return (g + g.T).tocsr()


def geodesic_distances(mesh: Mesh, source) -> np.ndarray:
    """Shortest-path distances along mesh edges; unreachable vertices get ``inf``.

    ``source`` may be one vertex id or a sequence (one row per source).
    """
    src = np.atleast_1d(np.asarray(source, dtype=np.int64))
    if np.any(src < 0) or np.any(src >= mesh.n_vertices):
        raise IndexError("source vertex out of range")
    d = dijkstra(edge_graph(mesh), directed=False, indices=src)
    return d[0] if np.ndim(source) == 0 else d


def derive_vertex_map(records, prod=None, n_y: int | None = None) -> list:
    """Image set (sorted X vertex ids) of every Y vertex touched by ``records``."""
    if not records:
        raise ValueError("empty correspondence list")
    pairs = []
    for r in records:
        if "x_vertices" in r:
            xv, yv = r["x_vertices"], r["y_vertices"]
        else:
            if prod is None:
                raise ValueError("records carry no vertices; pass the product space")
            xv, yv = realization(prod.extX, prod.extY, r["x_id"], r["y_id"], r["pairing"])
        pairs.extend(zip(yv, xv))
    if n_y is None:
        n_y = (prod.extY.nv if prod is not None else max(y for y, _ in pairs) + 1)
    images = [set() for _ in range(n_y)]
    for y, x in pairs:
        images[y].add(int(x))
    return [np.array(sorted(s), dtype=np.int64) for s in images]


def geodesic_error(vmap, ground_truth, fullX: Mesh, exclude=()) -> tuple[np.ndarray, np.ndarray]:
    """Per-vertex error: mean geodesic distance from each image to the true match.

    Distances are divided by ``sqrt(area(X))``. Y vertices whose ground truth
    is negative or that appear in ``exclude`` are skipped.

    Returns
    -------
    vertices : ndarray
        Evaluated Y vertex ids.
    errors : ndarray
        Normalized error per evaluated vertex.
    """
    gt = np.asarray(ground_truth, dtype=np.int64)
    if len(gt) != len(vmap):
        raise ValueError("ground truth length differs from the number of Y vertices")
    if np.any(gt >= fullX.n_vertices):
        raise IndexError("ground-truth id out of range")
    skip = set(int(v) for v in exclude)
    ys = np.array([y for y in range(len(gt)) if gt[y] >= 0 and y not in skip], dtype=np.int64)
    if len(ys) == 0:
        return ys, np.zeros(0)
    for y in ys:
        if len(vmap[y]) == 0:
            raise ValueError(f"Y vertex {y} has no image")
    src, inv = np.unique(gt[ys], return_inverse=True)
    D = dijkstra(edge_graph(fullX), directed=False, indices=src)
    scale = np.sqrt(surface_area(fullX))
    err = np.array([D[inv[i], vmap[y]].mean() for i, y in enumerate(ys)]) / scale
    return ys, err


def _gram(p: np.ndarray) -> np.ndarray:
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return np.stack([np.stack([(e1 * e1).sum(1), (e1 * e2).sum(1)], 1),
                     np.stack([(e1 * e2).sum(1), (e2 * e2).sum(1)], 1)], 1)


def triangle_distortion(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """sigma1/sigma2 + sigma2/sigma1 of the affine maps ``src[i] -> dst[i]``.

    Both arguments have shape (n, 3, 3). With edge Gram matrices ``Gs`` and
    ``Gt`` the value is ``tr(adj(Gs) Gt) / sqrt(det Gs det Gt)``, which needs
    no explicit flattening.
    """
    gs, gt = _gram(np.asarray(src, float)), _gram(np.asarray(dst, float))
    det_s = gs[:, 0, 0] * gs[:, 1, 1] - gs[:, 0, 1] ** 2
    det_t = gt[:, 0, 0] * gt[:, 1, 1] - gt[:, 0, 1] ** 2
    if np.any(det_s <= 0):
        raise ValueError("zero-area source triangle")
    tr = gs[:, 1, 1] * gt[:, 0, 0] - 2 * gs[:, 0, 1] * gt[:, 0, 1] + gs[:, 0, 0] * gt[:, 1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = tr / np.sqrt(det_s * det_t)
    return out


def conformal_distortion(records, meshX: Mesh, meshY: Mesh, cap: float = DISTORTION_CAP):
    """Distortion per Y-triangle record (records whose Y side is a triangle).

    Matches where the X side is an edge or vertex, or where the X triangle has
    zero area, receive ``cap`` and are flagged as degenerate.

    Returns
    -------
    values, degenerate : ndarray
    """
    recs = [r for r in records if r["y_tag"] == "triangle"]
    if not recs:
        return np.zeros(0), np.zeros(0, dtype=bool)
    xv = np.array([r["x_vertices"] for r in recs])
    yv = np.array([r["y_vertices"] for r in recs])
    deg = np.array([r["x_tag"] != "triangle" for r in recs])
    vals = np.full(len(recs), float(cap))
    ok = ~deg
    if ok.any():
        d = triangle_distortion(meshY.vertices[yv[ok]], meshX.vertices[xv[ok]])
        bad = ~np.isfinite(d)
        d[bad] = cap
        vals[ok] = d
        idx = np.flatnonzero(ok)
        deg[idx[bad]] = True
    return vals, deg


def cumulative_curve(errors, thresholds=None) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of errors at or below each threshold."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise ValueError("no data")
    if not np.all(np.isfinite(e)):
        raise ValueError("errors must be finite")
    t = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, float)
    return t, np.searchsorted(e, t, side="right") / e.size


def identity_records(mesh: Mesh) -> list:
    """Self-matching of a mesh: every triangle to itself with pairing 0."""
    ext = extend(mesh)
    return [{"x_id": ext.triangle_id(f), "y_id": ext.triangle_id(f), "x_tag": "triangle",
             "y_tag": "triangle", "pairing": 0,
             "x_vertices": tuple(int(v) for v in mesh.triangles[f]),
             "y_vertices": tuple(int(v) for v in mesh.triangles[f])}
            for f in range(mesh.n_triangles)]


@dataclass
class EvalReport:
    vertices: np.ndarray
    errors: np.ndarray
    distortion: np.ndarray
    degenerate: np.ndarray
    thresholds: np.ndarray = field(default_factory=lambda: DEFAULT_THRESHOLDS.copy())
    curve: np.ndarray | None = None
    failed: bool = False

    @property
    def mean_error(self) -> float:
        return float(self.errors.mean()) if len(self.errors) else float("nan")

    @property
    def median_error(self) -> float:
        return float(np.median(self.errors)) if len(self.errors) else float("nan")

    def write(self, path) -> None:
        lines = [f"# failed {int(self.failed)}",
                 f"# mean_error {self.mean_error!r}",
                 f"# median_error {self.median_error!r}",
                 f"# mean_distortion {float(np.mean(self.distortion)) if len(self.distortion) else float('nan')!r}",
                 "# vertex error"]
        lines += [f"{int(v)} {float(e)!r}" for v, e in zip(self.vertices, self.errors)]
        lines.append("# triangle distortion degenerate")
        lines += [f"{i} {float(d)!r} {int(g)}"
                  for i, (d, g) in enumerate(zip(self.distortion, self.degenerate))]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_curve(self, path) -> None:
        rows = ["threshold,fraction"]
        if self.curve is not None:
            rows += [f"{t!r},{f!r}" for t, f in zip(self.thresholds, self.curve)]
        Path(path).write_text("\n".join(rows) + "\n")


def evaluate(records, meshX: Mesh, meshY: Mesh, ground_truth, exclude=(),
             thresholds=None, cap: float = DISTORTION_CAP) -> EvalReport:
    if not records:
        return EvalReport(np.zeros(0, np.int64), np.zeros(0), np.zeros(0),
                          np.zeros(0, bool), failed=True)
    vmap = derive_vertex_map(records, n_y=meshY.n_vertices)
    ys, err = geodesic_error(vmap, ground_truth, meshX, exclude)
    dist, deg = conformal_distortion(records, meshX, meshY, cap)
    t = DEFAULT_THRESHOLDS if thresholds is None else np.asarray(thresholds, float)
    curve = cumulative_curve(err, t)[1] if len(err) else None
    return EvalReport(ys, err, dist, deg, t, curve)
