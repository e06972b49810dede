"""Independent reference implementations used by the tests.

Nothing here imports the product-space or solver code. Product triangles
are rebuilt from raw vertex triples, their boundary chains are formed from
vertex pairs, and the ILP is solved by exhaustive residual-driven search.
"""
from __future__ import annotations

import itertools

import numpy as np


def _rot(t, r):
    return tuple(t[(k + r) % 3] for k in range(3))


def _canon(px, py):
    """Cyclic-rotation-invariant key of a product triangle."""
    pairs = list(zip(px, py))
    return min(tuple(pairs[(k + r) % 3] for k in range(3)) for r in range(3))


def shape_simplices(tris):
    tris = [tuple(int(v) for v in t) for t in tris]
    verts = sorted({v for t in tris for v in t})
    dedges = []
    for t in tris:
        for k in range(3):
            e = (t[k], t[(k + 1) % 3])
            if e not in dedges:
                dedges.append(e)
    und = {}
    for a, b in dedges:
        und[frozenset((a, b))] = und.get(frozenset((a, b)), 0) + 1
    boundary = {e for e, n in und.items() if n == 1}
    return verts, dedges, tris, boundary


def enumerate_product(trisX, trisY):
    """All oriented product triangles as ``(xv, yv, x_kind, y_kind)``.

    Kinds: 0 vertex, 1 edge, 2 triangle. Duplicates under simultaneous
    cyclic rotation are dropped.
    """
    vx, ex, fx, _ = shape_simplices(trisX)
    vy, ey, fy, _ = shape_simplices(trisY)
    deg_x = [((a, a, a), 0) for a in vx] + [((a, a, b), 1) for a, b in ex]
    deg_y = [((c, c, c), 0) for c in vy] + [((c, c, d), 1) for c, d in ey]
    seen = {}
    for tx in fx:
        for ty, ky in deg_y + [(t, 2) for t in fy]:
            for r in range(3):
                key = _canon(tx, _rot(ty, r))
                seen.setdefault(key, (tx, _rot(ty, r), 2, ky))
    for tx, kx in deg_x:
        for ty in fy:
            for r in range(3):
                key = _canon(tx, _rot(ty, r))
                seen.setdefault(key, (tx, _rot(ty, r), kx, 2))
    return list(seen.values())


def count_formulas(trisX, trisY):
    """Closed-form pair-level counts ``(|F|, |E|)`` from element counts."""
    vx, ex, fx, _ = shape_simplices(trisX)
    vy, ey, fy, _ = shape_simplices(trisY)
    ext_fy = len(vy) + len(ey) + len(fy)
    ext_ex = len(vx) + len(ex)
    ext_ey = len(vy) + len(ey)
    n_f = len(fx) * ext_fy + ext_ex * len(fy)
    n_e = len(ex) * ext_ey + len(vx) * len(ey)
    return n_f, n_e


def enumerate_pair_sets(trisX, trisY):
    """Direct set enumeration of element pairs (no realizations)."""
    vx, ex, fx, _ = shape_simplices(trisX)
    vy, ey, fy, _ = shape_simplices(trisY)
    ext_tri_x = [("v", v) for v in vx] + [("e", e) for e in ex] + [("f", f) for f in fx]
    ext_tri_y = [("v", v) for v in vy] + [("e", e) for e in ey] + [("f", f) for f in fy]
    F = {(a, b) for a in ext_tri_x for b in ext_tri_y if a[0] == "f" or b[0] == "f"}
    ext_e_x = [("v", v) for v in vx] + [("e", e) for e in ex]
    ext_e_y = [("v", v) for v in vy] + [("e", e) for e in ey]
    E = {(a, b) for a in ext_e_x for b in ext_e_y if not (a[0] == "v" and b[0] == "v")}
    return F, E


def chain(xv, yv, boundaryY):
    """Boundary 1-chain of a product triangle on interior product edges.

    Returns ``{edge_key: coefficient}`` where an edge key is a canonical
    ``((xa, xb), (ya, yb))`` and the coefficient is +-1 per occurrence.
    """
    out = {}
    for k in range(3):
        xa, xb = xv[k], xv[(k + 1) % 3]
        ya, yb = yv[k], yv[(k + 1) % 3]
        if xa == xb and ya == yb:
            continue
        if ya != yb and frozenset((ya, yb)) in boundaryY:
            continue
        e, rev = ((xa, xb), (ya, yb)), ((xb, xa), (yb, ya))
        key, s = (e, 1) if e <= rev else (rev, -1)
        out[key] = out.get(key, 0) + s
    return {k: v for k, v in out.items() if v}


class BruteForce:
    """Exhaustive minimum-cost search over feasible indicator vectors.

    Columns are chosen one at a time: first one per uncovered Y triangle,
    then, while some product edge has nonzero boundary sum, one column that
    cancels it. Every feasible selection contains such a subset with no
    greater cost (costs must be nonnegative), so the search is exact.
    """

    def __init__(self, trisX, trisY, columns, costs):
        _, _, fx, _ = shape_simplices(trisX)
        _, _, fy, self.boundaryY = shape_simplices(trisY)
        self.columns = columns
        self.costs = np.asarray(costs, float)
        if np.any(self.costs < 0):
            raise ValueError("oracle needs nonnegative costs")
        self.fx = {t: i for i, t in enumerate(fx)}
        self.fy = {t: i for i, t in enumerate(fy)}
        self.chains = [chain(xv, yv, self.boundaryY) for xv, yv, *_ in columns]
        self.x_tri = [self._face_id(self.fx, xv) for xv, *_ in columns]
        self.y_tri = [self._face_id(self.fy, yv) for _, yv, *_ in columns]
        self.by_edge = {}
        for j, ch in enumerate(self.chains):
            for e, s in ch.items():
                self.by_edge.setdefault(e, []).append((j, s))
        self.by_y = {}
        for j, t in enumerate(self.y_tri):
            if t is not None:
                self.by_y.setdefault(t, []).append(j)
        self.n_y = len(fy)
        self.n_feasible_leaves = 0

    @staticmethod
    def _face_id(table, tri):
        if len(set(tri)) < 3:
            return None
        for r in range(3):
            t = _rot(tri, r)
            if t in table:
                return table[t]
        return None

    def solve(self):
        self.best = float("inf")
        self.best_set = None
        self._dfs(frozenset(), 0.0, {}, set(), set())
        return self.best, self.best_set

    def _ok(self, j, chosen, used_x, used_y):
        if j in chosen:
            return False
        xt, yt = self.x_tri[j], self.y_tri[j]
        return (xt is None or xt not in used_x) and (yt is None or yt not in used_y)

    def _dfs(self, chosen, cost, residual, used_x, used_y):
        if cost >= self.best - 1e-12:
            return
        # every violated constraint must be repaired by some unchosen column,
        # so branching on the most constrained one loses nothing
        options = []
        for t in range(self.n_y):
            if t not in used_y:
                options.append([j for j in self.by_y.get(t, [])
                                if self._ok(j, chosen, used_x, used_y)])
        bound = cost + sum(min((self.costs[j] for j in o), default=np.inf) for o in options)
        if bound >= self.best - 1e-12:
            return
        for e in sorted(e for e, v in residual.items() if v):
            need = -np.sign(residual[e])
            options.append([j for j, s in self.by_edge.get(e, [])
                            if s == need and self._ok(j, chosen, used_x, used_y)])
        if not options:
            self.n_feasible_leaves += 1
            self.best, self.best_set = cost, sorted(chosen)
            return
        cands = min(options, key=len)
        for j in sorted(cands, key=lambda j: (self.costs[j], j)):
            xt, yt = self.x_tri[j], self.y_tri[j]
            res = dict(residual)
            for e, s in self.chains[j].items():
                res[e] = res.get(e, 0) + s
            self._dfs(chosen | {j}, cost + self.costs[j], res,
                      used_x | ({xt} if xt is not None else set()),
                      used_y | ({yt} if yt is not None else set()))


def is_feasible(trisX, trisY, selected):
    """Direct check of the three constraint families on a list of columns."""
    _, _, fx, _ = shape_simplices(trisX)
    _, _, fy, by = shape_simplices(trisY)
    tx = {t: k for k, t in enumerate(fx)}
    ty = {t: k for k, t in enumerate(fy)}
    cx, cy, res = {}, {}, {}
    for xv, yv in selected:
        i = BruteForce._face_id(tx, xv)
        j = BruteForce._face_id(ty, yv)
        if i is not None:
            cx[i] = cx.get(i, 0) + 1
        if j is not None:
            cy[j] = cy.get(j, 0) + 1
        for e, s in chain(xv, yv, by).items():
            res[e] = res.get(e, 0) + s
    return (all(v <= 1 for v in cx.values()) and all(cy.get(j, 0) == 1 for j in range(len(fy)))
            and not any(res.values()))


def flatten_svd_distortion(p, q):
    """sigma1/sigma2 + sigma2/sigma1 of the affine map between 3D triangles p -> q.

    Each triangle is flattened isometrically into the plane by an
    orthonormal frame built from its first edge.
    """
    def flat(t):
        t = np.asarray(t, float)
        e1 = t[1] - t[0]
        e2 = t[2] - t[0]
        u = e1 / np.linalg.norm(e1)
        n = np.cross(e1, e2)
        v = np.cross(n / np.linalg.norm(n), u)
        return np.array([[e1 @ u, e2 @ u], [e1 @ v, e2 @ v]])
    A = flat(q) @ np.linalg.inv(flat(p))
    s = np.linalg.svd(A, compute_uv=False)
    return s[0] / s[1] + s[1] / s[0]


def dijkstra_reference(n, edges, weights, src):
    """Plain O(V^2) Dijkstra on an undirected weighted graph."""
    adj = [[] for _ in range(n)]
    for (a, b), w in zip(edges, weights):
        adj[a].append((b, w))
        adj[b].append((a, w))
    dist = [float("inf")] * n
    dist[src] = 0.0
    done = [False] * n
    for _ in range(n):
        u = min((d, i) for i, d in enumerate(dist) if not done[i])[1] if not all(done) else None
        if u is None or dist[u] == float("inf"):
            break
        done[u] = True
        for v, w in adj[u]:
            if dist[u] + w < dist[v]:
                dist[v] = dist[u] + w
    return np.array(dist)


def all_binary_vectors(n):
    return itertools.product((0, 1), repeat=n)
