"""Per-vertex descriptors, triangle lifting and the matching cost vector."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import eigsh

from .mesh import ExtendedElements, Mesh, cotangent_laplacian, mixed_voronoi_areas


class FeatureError(ValueError):
    pass


@dataclass
class FeatureSet:
    descriptors: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float64)
        if d.ndim != 2 or d.shape[1] < 1:
            raise FeatureError("descriptors must be a (|V|, d) matrix with d >= 1")
        if not np.all(np.isfinite(d)):
            raise FeatureError("non-finite descriptor entry")
        self.descriptors = d

    @property
    def d(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self):
        return len(self.descriptors)


# --- file format ---------------------------------------------------------
# ASCII: "rows cols" then one row per line. Binary: two little-endian uint32
# counts followed by rows*cols little-endian float64 values, row-major.

def save_features(features: FeatureSet, path, binary: bool = False) -> None:
    w = features.descriptors
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<II", *w.shape))
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        return
    lines = [f"{w.shape[0]} {w.shape[1]}"]
    lines += [" ".join(repr(float(x)) for x in row) for row in w]
    path.write_text("\n".join(lines) + "\n")


def _parse_binary(raw: bytes):
    if len(raw) < 8:
        return None
    rows, cols = struct.unpack("<II", raw[:8])
    if len(raw) != 8 + 8 * rows * cols:
        return None
    return np.frombuffer(raw[8:], dtype="<f8").reshape(rows, cols)


def load_features(path, expected_vertices: int | None = None) -> FeatureSet:
    raw = Path(path).read_bytes()
    w = _parse_binary(raw)
    if w is None:
        try:
            lines = raw.decode("ascii").split("\n")
            rows, cols = (int(x) for x in lines[0].split())
            body = [ln for ln in lines[1:] if ln.strip()]
            if len(body) != rows:
                raise FeatureError(f"expected {rows} rows, found {len(body)}")
            w = np.array([[float(x) for x in ln.split()] for ln in body])
            if w.shape != (rows, cols):
                raise FeatureError("row length does not match the header")
        except (UnicodeDecodeError, ValueError) as exc:
            if isinstance(exc, FeatureError):
                raise
            raise FeatureError(f"malformed feature file: {exc}") from exc
    if expected_vertices is not None and len(w) != expected_vertices:
        raise FeatureError(f"feature rows {len(w)} != mesh vertices {expected_vertices}")
    return FeatureSet(np.array(w, dtype=np.float64))


# --- heat kernel signature -------------------------------------------------

def laplace_spectrum(mesh: Mesh, k: int):
    """Smallest ``k`` eigenpairs of the cotangent Laplacian with lumped mass.

    Eigenvectors are mass-orthonormal.
    """
    L = cotangent_laplacian(mesh)
    mass = mixed_voronoi_areas(mesh)
    if np.any(mass <= 0):
        raise FloatingPointError("vertex with zero area")
    n = mesh.n_vertices
    k = min(k, n)
    s = 1.0 / np.sqrt(mass)
    if n <= 2000:
        sym = (L.toarray() * s[:, None]) * s[None, :]
        vals, vecs = scipy.linalg.eigh(sym, subset_by_index=[0, k - 1])
    else:
        from scipy import sparse
        S = sparse.diags(s)
        vals, vecs = eigsh(S @ L @ S, k=k, sigma=-1e-8, which="LM")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vecs = vecs * s[:, None]
    return np.maximum(vals, 0.0), vecs


def fallback_descriptors(mesh: Mesh, d: int = 16, time_samples: int | None = None,
                         n_eigs: int | None = None, close_boundary: bool = False) -> FeatureSet:
    """Heat kernel signature at log-spaced diffusion times.

    HKS is evaluated at ``time_samples`` times (default ``d``) between
    ``4 ln 10 / lambda_max`` and ``4 ln 10 / lambda_1``; when ``time_samples``
    exceeds ``d`` consecutive samples are averaged into ``d`` columns. Each
    column is scaled to unit mean over the vertices.

    With ``close_boundary`` every boundary loop is fan-closed before the
    spectrum is computed and the fan centroids are dropped afterwards. On a
    partial shape this keeps the open boundary from dominating the signature.
    """
    if close_boundary and mesh.boundary_loops():
        from .repair import close_holes
        closed, _ = close_holes(mesh)
        full = fallback_descriptors(closed, d, time_samples, n_eigs)
        return FeatureSet(full.descriptors[:mesh.n_vertices])
    if d < 1:
        raise FeatureError("descriptor dimension must be positive")
    ts = d if time_samples is None else int(time_samples)
    if ts < d:
        raise FeatureError("time_samples must be at least d")
    n = mesh.n_vertices
    if n < d + 1:
        raise FeatureError("mesh has too few vertices for the requested dimension")
    k = min(n - 1, 60) if n_eigs is None else min(n_eigs, n)
    try:
        vals, vecs = laplace_spectrum(mesh, k)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise FeatureError(f"eigen-solver failure: {exc}") from exc
    lam1 = vals[vals > 1e-10 * max(vals[-1], 1e-300)]
    if len(lam1) == 0:
        raise FeatureError("no positive Laplacian eigenvalue")
    tmin = 4 * np.log(10) / vals[-1]
    tmax = 4 * np.log(10) / lam1[0]
    times = np.geomspace(tmin, tmax, ts)
    hks = (vecs ** 2) @ np.exp(-np.outer(vals, times))
    if ts > d:
        bins = np.array_split(np.arange(ts), d)
        hks = np.stack([hks[:, b].mean(axis=1) for b in bins], axis=1)
    hks /= hks.mean(axis=0, keepdims=True)
    return FeatureSet(hks)


# --- lifting and costs -----------------------------------------------------

def lift_to_triangles(features: FeatureSet, ext: ExtendedElements) -> np.ndarray:
    """Mean descriptor of each extended triangle, shape (|F_ext|, d)."""
    w = features.descriptors
    m = ext.mesh
    if len(w) != m.n_vertices:
        raise FeatureError("feature rows do not match the mesh")
    e = m.directed_edges
    edge_u = 0.5 * (w[e[:, 0]] + w[e[:, 1]]) if len(e) else np.zeros((0, w.shape[1]))
    tri_u = w[m.triangles].mean(axis=1) if m.n_triangles else np.zeros((0, w.shape[1]))
    return np.vstack([w, edge_u, tri_u])


def build_costs(uX: np.ndarray, uY: np.ndarray, prod, chunk: int = 1 << 18) -> np.ndarray:
    """Euclidean distance between lifted descriptors for every column."""
    if uX.shape[1] != uY.shape[1]:
        raise FeatureError("descriptor dimensions differ")
    # cost depends on the element pair only
    pairs = prod.pairs
    pc = np.empty(len(pairs))
    for s in range(0, len(pairs), chunk):
        p = pairs[s:s + chunk]
        pc[s:s + chunk] = np.linalg.norm(uX[p[:, 0]] - uY[p[:, 1]], axis=1)
    return pc[prod.pair_index] if len(pairs) else np.zeros(0)


def hole_feature_assignment(features: FeatureSet, closed: Mesh, log) -> FeatureSet:
    """Give each hole-centroid vertex the mean descriptor of its boundary loop."""
    w = features.descriptors
    centroids = [c for _, c in log.closed_holes]
    n_orig = closed.n_vertices - len(centroids)
    if len(w) == closed.n_vertices:
        out = w.copy()
    elif len(w) == n_orig:
        out = np.vstack([w, np.zeros((len(centroids), w.shape[1]))])
    else:
        raise FeatureError("feature rows match neither the open nor the closed mesh")
    for c in centroids:
        if c >= closed.n_vertices:
            raise FeatureError(f"centroid vertex {c} not in mesh")
        loop = closed.neighbors(c)
        out[c] = w[loop].mean(axis=0)
    return FeatureSet(out)
