"""Multi-resolution driver: exact coarse solve, then pruned refinements.

Each level decimates X to a face target and Y to the matching partial
budget. Level 0 is solved on the full product space; every later level only
admits product triangles whose vertex pairs lie near the previous level's
matches.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import solver as S
from .decimation import decimate_levels, partial_face_budget, transfer_features
from .features import FeatureSet, build_costs, lift_to_triangles
from .io import CorrespondenceFile, load_correspondences, save_correspondences
from .mesh import Mesh, extend
from .product import (build_constraint_system, build_product_space, check_feasible,
                      realization)

logger = logging.getLogger(__name__)


class OverPrunedError(RuntimeError):
    def __init__(self, y_triangle: int, message: str = ""):
        self.y_triangle = int(y_triangle)
        super().__init__(message or f"Y triangle {y_triangle} has no admissible product triangle")


class PipelineFailure(RuntimeError):
    pass


@dataclass
class LevelSchedule:
    targets: list
    fallback_target: int = 100
    radius: int = 1
    max_radius: int = 3
    budgets: list | None = None
    total_budget: float = 7200.0

    def __post_init__(self):
        self.targets = [int(t) for t in self.targets]
        if not self.targets:
            raise ValueError("schedule needs at least one level")
        if any(b <= a for a, b in zip(self.targets, self.targets[1:])):
            raise ValueError("face targets must be strictly increasing")
        if self.radius < 1 or self.max_radius < self.radius:
            raise ValueError("radius must be >= 1 and <= max_radius")
        if self.budgets is not None and len(self.budgets) != len(self.targets):
            raise ValueError("one budget per level")


@dataclass
class CandidateMask:
    """Admissible vertex pairs; a product triangle survives iff all three pairs do."""

    allowed: np.ndarray
    radius: int

    def admits(self, xv: np.ndarray, yv: np.ndarray) -> np.ndarray:
        a = self.allowed
        return a[xv[:, 0], yv[:, 0]] & a[xv[:, 1], yv[:, 1]] & a[xv[:, 2], yv[:, 2]]


def ring_matrix(mesh: Mesh, radius: int) -> sparse.csr_matrix:
    """Boolean matrix of vertices within ``radius`` edge hops (self included)."""
    n = mesh.n_vertices
    step = (mesh.adjacency != 0).astype(np.int32) + sparse.identity(n, dtype=np.int32, format="csr")
    R = sparse.identity(n, dtype=np.int32, format="csr")
    for _ in range(radius):
        R = ((R @ step) > 0).astype(np.int32)
    return R.tocsr()


def vertex_pairs(records) -> list:
    """Vertex correspondences ``(x, y)`` implied by triangle-level records."""
    out = []
    for r in records:
        out.extend(zip(r["x_vertices"], r["y_vertices"]))
    return sorted(set(out))


def prolong(coarse_matching, mapX, mapY, fineX: Mesh, fineY: Mesh, radius: int = 1,
            n_coarse=None) -> CandidateMask:
    """Candidate mask on the fine level from a coarse matching.

    ``mapX[v]`` / ``mapY[v]`` give the coarse vertex each fine vertex belongs
    to. A fine pair (x, y) is admissible iff some x' within ``radius`` rings
    of x and some y' within ``radius`` rings of y have coarse images that the
    coarse matching pairs.

    Raises
    ------
    OverPrunedError
        If some fine Y triangle has no admissible product triangle.
    """
    if not coarse_matching:
        raise ValueError("coarse matching is empty")
    mapX, mapY = np.asarray(mapX), np.asarray(mapY)
    ncx = int(mapX.max()) + 1 if n_coarse is None else n_coarse[0]
    ncy = int(mapY.max()) + 1 if n_coarse is None else n_coarse[1]
    pairs = np.array(vertex_pairs(coarse_matching), dtype=np.int64)
    C = sparse.csr_matrix((np.ones(len(pairs), np.int32), (pairs[:, 0], pairs[:, 1])),
                          shape=(max(ncx, pairs[:, 0].max() + 1), max(ncy, pairs[:, 1].max() + 1)))
    PX = sparse.csr_matrix((np.ones(len(mapX), np.int32), (np.arange(len(mapX)), mapX)),
                           shape=(len(mapX), C.shape[0]))
    PY = sparse.csr_matrix((np.ones(len(mapY), np.int32), (np.arange(len(mapY)), mapY)),
                           shape=(len(mapY), C.shape[1]))
    RX = ring_matrix(fineX, radius)
    RY = ring_matrix(fineY, radius)
    allowed = ((RX @ PX) @ C @ (RY @ PY).T).toarray() > 0
    mask = CandidateMask(allowed, radius)
    bad = uncovered_y_triangles(mask, fineX, fineY)
    if len(bad):
        raise OverPrunedError(bad[0])
    return mask


def _x_patterns(mesh: Mesh) -> np.ndarray:
    v = np.arange(mesh.n_vertices)
    e = mesh.directed_edges
    return np.concatenate([np.stack([v, v, v], 1), np.stack([e[:, 0], e[:, 0], e[:, 1]], 1),
                           mesh.triangles]).astype(np.int64)


def uncovered_y_triangles(mask: CandidateMask, meshX: Mesh, meshY: Mesh) -> np.ndarray:
    """Y triangles with no admissible product triangle under ``mask``."""
    pat = _x_patterns(meshX)
    a = mask.allowed
    bad = []
    for f, (p, q, r) in enumerate(meshY.triangles.tolist()):
        ok = False
        for s in range(3):
            x0, x1, x2 = pat[:, s], pat[:, (s + 1) % 3], pat[:, (s + 2) % 3]
            if np.any(a[x0, p] & a[x1, q] & a[x2, r]):
                ok = True
                break
        if not ok:
            bad.append(f)
    return np.array(bad, dtype=np.int64)


# --- hierarchy ---------------------------------------------------------------

class _Hierarchy:
    """Decimated copies of one mesh at several face targets."""

    def __init__(self, mesh: Mesh, targets):
        self.mesh = mesh
        self.targets = sorted(set(int(t) for t in targets))
        below = [t for t in self.targets if t < mesh.n_triangles]
        self.trace = None
        self.levels = {}
        if below:
            meshes, trace = decimate_levels(mesh, below)
            self.trace = trace
            for t, m, snap in zip(sorted(below, reverse=True), meshes, trace.snapshots):
                self.levels[t] = (m, snap)
        for t in self.targets:
            if t >= mesh.n_triangles:
                self.levels[t] = (mesh, None)

    def get(self, target) -> Mesh:
        return self.levels[target][0]

    def vertex_ids(self, target) -> np.ndarray:
        snap = self.levels[target][1]
        return np.arange(self.mesh.n_vertices) if snap is None else snap.vertex_ids

    def map_down(self, fine_target, coarse_target) -> np.ndarray:
        """Coarse-level vertex of each fine-level vertex."""
        snap = self.levels[coarse_target][1]
        ids = self.vertex_ids(fine_target)
        if snap is None:
            return ids
        return snap.fine_to_coarse[ids]

    def features(self, feat: FeatureSet, target) -> FeatureSet:
        snap_i = self._snap_index(target)
        if snap_i is None:
            return feat
        return transfer_features(feat, self.trace, level=snap_i)

    def _snap_index(self, target):
        snap = self.levels[target][1]
        if snap is None:
            return None
        return next(i for i, s in enumerate(self.trace.snapshots) if s is snap)


# --- pipeline ----------------------------------------------------------------

@dataclass
class LevelResult:
    level: int
    target_x: int
    target_y: int
    faces_x: int
    faces_y: int
    status: str
    radius: int
    n_columns: int
    objective: float
    lower_bound: float
    nodes: int
    wall_time: float
    budget: float
    message: str = ""
    records: list = field(default_factory=list, repr=False)
    bits: np.ndarray | None = field(default=None, repr=False)


@dataclass
class PipelineResult:
    levels: list
    records: list
    status: str  # optimal, timeout_with_incumbent or failed
    meshX: Mesh | None = None
    meshY: Mesh | None = None

    @property
    def failed(self) -> bool:
        return self.status == "failed"


def _level_instance(mX, mY, fX, fY, allowed, budget):
    extX, extY = extend(mX), extend(mY)
    prod = build_product_space(extX, extY, allowed=allowed)
    system = build_constraint_system(prod)
    costs = build_costs(lift_to_triangles(fX, extX), lift_to_triangles(fY, extY), prod)
    inst = S.IlpInstance(costs, system, time_budget=budget, pruned=allowed is not None)
    return prod, inst


def solve_level(mX, mY, fX, fY, budget, allowed=None, backend="builtin"):
    prod, inst = _level_instance(mX, mY, fX, fY, allowed, budget)
    res = S.solve(inst, backend=backend)
    if res.incumbent is not None and not check_feasible(inst.system, res.incumbent).ok:
        raise S.SolverError("solver returned an infeasible incumbent")
    return prod, inst, res


def _record(level, tx, ty, mX, mY, radius, prod, res, budget) -> LevelResult:
    recs = S.extract_matching(res, prod) if res.incumbent is not None else []
    return LevelResult(level, tx, ty, mX.n_triangles, mY.n_triangles, res.status, radius,
                       prod.n_columns, res.objective, res.lower_bound, res.nodes, res.wall_time,
                       budget, res.message, recs,
                       res.incumbent.bits if res.incumbent is not None else None)


def run_pipeline(fullX: Mesh, partialY: Mesh, featX: FeatureSet, featY: FeatureSet,
                 schedule: LevelSchedule, run_dir=None, backend: str = "builtin",
                 start_level: int = 0, prior=None) -> PipelineResult:
    """Solve level 0 exactly, then refine level by level under candidate masks.

    ``start_level``/``prior`` resume a run: ``prior`` is the record list of
    level ``start_level - 1``.
    """
    if len(featX) != fullX.n_vertices or len(featY) != partialY.n_vertices:
        raise ValueError("features must be given at the finest resolution")
    t0 = time.perf_counter()
    targets = list(schedule.targets)
    fb = schedule.fallback_target
    budget_y = {t: partial_face_budget(fullX, partialY, t) for t in targets + [fb]}
    hx = _Hierarchy(fullX, targets + ([fb] if fb < targets[0] else []))
    hy = _Hierarchy(partialY, list(budget_y.values()))
    run_dir = Path(run_dir) if run_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_json(run_dir / "schedule.json", asdict(schedule))

    def level_budget(k):
        if schedule.budgets is not None:
            return float(schedule.budgets[k])
        # remaining time split over remaining levels; unused time rolls forward
        spent = time.perf_counter() - t0
        return max(schedule.total_budget - spent, 0.0) / (len(targets) - k)

    results = []
    prev_records, prev_target = prior, (targets[start_level - 1] if start_level > 0 else None)
    if prev_records is not None:
        prev_records = _with_vertices(prev_records, hx.get(prev_target),
                                      hy.get(budget_y[prev_target]))
    last = None
    for k in range(start_level, len(targets)):
        tx = targets[k]
        ty = budget_y[tx]
        mX, mY = hx.get(tx), hy.get(ty)
        fX, fY = hx.features(featX, tx), hy.features(featY, ty)
        if prev_records is None:
            budget = level_budget(k)
            prod, inst, res = solve_level(mX, mY, fX, fY, budget, backend=backend)
            lr = _record(k, tx, ty, mX, mY, 0, prod, res, budget)
            if res.status in (S.TIMEOUT_NO_INCUMBENT, S.TIMEOUT_WITH_INCUMBENT) and fb < tx:
                logger.info("level %d timed out at %d faces, falling back to %d", k, tx, fb)
                results.append(lr)
                if run_dir is not None:
                    _save_level(run_dir, lr, mX, mY, tag="fallback_from")
                tx, ty = fb, budget_y[fb]
                mX, mY = hx.get(tx), hy.get(ty)
                fX, fY = hx.features(featX, tx), hy.features(featY, ty)
                budget = max(schedule.total_budget - (time.perf_counter() - t0), 0.0) \
                    / (len(targets) - k)
                prod, inst, res = solve_level(mX, mY, fX, fY, budget, backend=backend)
                lr = _record(k, tx, ty, mX, mY, 0, prod, res, budget)
        else:
            mapX = hx.map_down(tx, prev_target)
            mapY = hy.map_down(ty, budget_y[prev_target])
            ncoarse = (hx.get(prev_target).n_vertices, hy.get(budget_y[prev_target]).n_vertices)
            radius = schedule.radius
            lr = None
            while radius <= schedule.max_radius:
                budget = level_budget(k)
                try:
                    mask = prolong(prev_records, mapX, mapY, mX, mY, radius, ncoarse)
                except OverPrunedError as exc:
                    logger.info("level %d radius %d: %s", k, radius, exc)
                    radius += 1
                    continue
                prod, inst, res = solve_level(mX, mY, fX, fY, budget, mask.allowed, backend)
                lr = _record(k, tx, ty, mX, mY, radius, prod, res, budget)
                if run_dir is not None:
                    np.savez_compressed(run_dir / f"level_{k}_mask_r{radius}.npz",
                                        allowed=mask.allowed)
                if res.status != S.INFEASIBLE:
                    break
                radius += 1
            if lr is None:
                lr = LevelResult(k, tx, ty, mX.n_triangles, mY.n_triangles, S.INFEASIBLE,
                                 schedule.max_radius, 0, float("inf"), float("inf"), 0, 0.0, 0.0,
                                 "over-pruned at every radius")
        results.append(lr)
        if run_dir is not None:
            _save_level(run_dir, lr, mX, mY)
        if not lr.records:
            break
        prev_records, prev_target = lr.records, tx
        last = (mX, mY)

    if not results:
        raise ValueError("nothing to do: start level is past the last level")
    final = results[-1]
    if not final.records:
        status = "failed"
        out = PipelineResult(results, [], status)
    else:
        incomplete = any(r.status != S.OPTIMAL for r in results if r.records)
        status = "timeout_with_incumbent" if incomplete else "optimal"
        out = PipelineResult(results, final.records, status, *last)
    if run_dir is not None:
        _write_json(run_dir / "status.json", {"status": out.status,
                                              "levels_completed": sum(bool(r.records) for r in results)})
    return out


def _with_vertices(records, mX: Mesh, mY: Mesh) -> list:
    extX, extY = extend(mX), extend(mY)
    out = []
    for r in records:
        if "x_vertices" not in r:
            xv, yv = realization(extX, extY, r["x_id"], r["y_id"], r["pairing"])
            r = {**r, "x_vertices": xv, "y_vertices": yv}
        out.append(r)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True, default=float) + "\n")


def _save_level(run_dir: Path, lr: LevelResult, mX: Mesh, mY: Mesh, tag="level") -> None:
    meta = {k: v for k, v in asdict(lr).items() if k not in ("records", "bits")}
    _write_json(run_dir / f"{tag}_{lr.level}.json", meta)
    if lr.records:
        cf = CorrespondenceFile(lr.records, mX.checksum(), mY.checksum(), lr.level, lr.status,
                                lr.objective)
        save_correspondences(run_dir / f"{tag}_{lr.level}.corr", cf)


def resume_state(run_dir):
    """Last completed level and its records from a run directory, or ``(0, None)``."""
    run_dir = Path(run_dir)
    k = 0
    records = None
    while (run_dir / f"level_{k}.corr").exists():
        records = load_correspondences(run_dir / f"level_{k}.corr").records
        k += 1
    return k, records
