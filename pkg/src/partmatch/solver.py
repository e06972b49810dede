"""Exact branch and bound for the matching ILP.

The LP relaxations are solved with HiGHS (dual simplex, warm started from
the previous basis after each bound change). Branching, node selection,
pruning and the exact integer feasibility certificate are done here.
"""
from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import highspy
import numpy as np
from scipy import sparse

from .product import (ConstraintSystem, MatchingIndicator, ProductSpace,
                      check_feasible)

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
TIMEOUT_WITH_INCUMBENT = "timeout_with_incumbent"
TIMEOUT_NO_INCUMBENT = "timeout_no_incumbent"
STATUSES = (OPTIMAL, INFEASIBLE, TIMEOUT_WITH_INCUMBENT, TIMEOUT_NO_INCUMBENT)


class SolverError(RuntimeError):
    """The constraint system is numerically inconsistent."""


@dataclass
class IlpInstance:
    costs: np.ndarray
    system: ConstraintSystem
    time_budget: float = 7200.0
    warm_start: MatchingIndicator | None = None
    pruned: bool = False

    def __post_init__(self):
        self.costs = np.asarray(self.costs, dtype=np.float64)
        if self.costs.ndim != 1 or len(self.costs) != self.system.n_columns:
            raise ValueError("cost vector length must equal the number of product triangles")
        if not np.all(np.isfinite(self.costs)):
            raise ValueError("non-finite cost")

    @property
    def n_variables(self) -> int:
        return len(self.costs)


@dataclass
class SolveResult:
    status: str
    incumbent: MatchingIndicator | None
    lower_bound: float
    nodes: int = 0
    wall_time: float = 0.0
    message: str = ""

    @property
    def objective(self) -> float:
        return self.incumbent.objective_value if self.incumbent is not None else float("inf")


@dataclass
class LpResult:
    bound: float
    x: np.ndarray | None
    status: str  # "optimal", "infeasible" or "timeout"


# --- LP oracle -------------------------------------------------------------

def _stack(system: ConstraintSystem):
    """Constraint matrix with empty boundary rows removed, plus row bounds."""
    B = system.boundary_rows
    nonempty = np.diff(B.indptr) > 0
    B = B[nonempty]
    px, py = system.proj_X, system.proj_Y
    A = sparse.vstack([B, px, py], format="csc").astype(np.float64)
    nb, nx, ny = B.shape[0], px.shape[0], py.shape[0]
    lo = np.concatenate([np.zeros(nb), np.full(nx, -highspy.kHighsInf), np.ones(ny)])
    hi = np.concatenate([np.zeros(nb), np.ones(nx), np.ones(ny)])
    return A, lo, hi


class _LpOracle:
    """Persistent HiGHS model whose column bounds encode the branching fixings."""

    def __init__(self, costs: np.ndarray, system: ConstraintSystem, integral: bool = False):
        A, lo, hi = _stack(system)
        n = A.shape[1]
        self.n = n
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", 0)
        h.passModel(highs_lp(A, lo, hi, costs, [True] * n if integral else None))
        self.h = h
        self.touched: set[int] = set()

    def set_fixings(self, fixed: dict):
        reset = [j for j in self.touched if j not in fixed]
        if reset:
            idx = np.array(sorted(reset), dtype=np.int32)
            self.h.changeColsBounds(len(idx), idx, np.zeros(len(idx)), np.ones(len(idx)))
        if fixed:
            idx = np.array(sorted(fixed), dtype=np.int32)
            val = np.array([float(fixed[j]) for j in idx])
            self.h.changeColsBounds(len(idx), idx, val, val)
        self.touched = set(fixed)

    def solve(self, time_limit: float = float("inf")) -> LpResult:
        self.h.setOptionValue("time_limit", max(float(time_limit), 1e-3)
                              if np.isfinite(time_limit) else highspy.kHighsInf)
        self.h.run()
        st = self.h.getModelStatus()
        S = highspy.HighsModelStatus
        if st == S.kOptimal:
            x = np.clip(np.asarray(self.h.getSolution().col_value), 0.0, 1.0)
            return LpResult(float(self.h.getInfo().objective_function_value), x, "optimal")
        if st in (S.kInfeasible, S.kUnboundedOrInfeasible):
            return LpResult(float("inf"), None, "infeasible")
        if st in (S.kTimeLimit, S.kInterrupt, S.kIterationLimit):
            return LpResult(-float("inf"), None, "timeout")
        raise SolverError(f"LP solver returned {self.h.modelStatusToString(st)}")


def lp_relax(instance: IlpInstance, fixed: dict | None = None) -> LpResult:
    """Continuous relaxation ``0 <= x <= 1`` under the given 0/1 fixings."""
    fixed = dict(fixed or {})
    for j, v in fixed.items():
        if v not in (0, 1):
            raise ValueError(f"variable {j} fixed to {v}")
    if _empty_y_rows(instance.system).size:
        return LpResult(float("inf"), None, "infeasible")
    oracle = _LpOracle(instance.costs, instance.system)
    oracle.set_fixings(fixed)
    return oracle.solve()


def branch_select(x, costs) -> int:
    """Most fractional variable; ties by larger cost, then lower id."""
    x = np.asarray(x, dtype=np.float64)
    frac = np.abs(x - np.round(x)) > INTEGRALITY_TOL
    if not frac.any():
        raise ValueError("solution is integral, nothing to branch on")
    idx = np.flatnonzero(frac)
    dist = np.abs(x[idx] - 0.5)
    c = np.asarray(costs)[idx]
    # lexsort: last key is primary
    order = np.lexsort((idx, -c, dist))
    return int(idx[order[0]])


def _empty_y_rows(system: ConstraintSystem) -> np.ndarray:
    return np.flatnonzero(np.diff(system.proj_Y.indptr) == 0)


# --- branch and bound ------------------------------------------------------

@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    fixed: dict = field(compare=False)


def _verify(instance: IlpInstance, x: np.ndarray) -> MatchingIndicator | None:
    bits = (np.round(x) > 0.5).astype(np.int8)
    if check_feasible(instance.system, bits):
        return None
    return MatchingIndicator(bits, float(instance.costs @ bits))


def solve(instance: IlpInstance, backend: str = "builtin") -> SolveResult:
    """Solve the ILP to global optimality within ``instance.time_budget`` seconds.

    Node order is a depth-first plunge (up branch first) until the first
    incumbent, then best bound. ``backend="external"`` hands the whole
    problem to the HiGHS MIP solver instead.
    """
    if backend == "external":
        return solve_external(instance)
    if backend != "builtin":
        raise ValueError(f"unknown backend {backend!r}")
    t0 = time.perf_counter()
    costs = instance.costs
    incumbent = None
    if instance.warm_start is not None:
        ws = np.asarray(instance.warm_start.bits)
        if len(ws) == instance.n_variables and np.all((ws == 0) | (ws == 1)) \
                and check_feasible(instance.system, ws).ok:
            incumbent = MatchingIndicator(ws.astype(np.int8), float(costs @ ws))
        else:
            logger.info("warm start rejected: not feasible for this instance")

    def result(status, lb, nodes, msg=""):
        return SolveResult(status, incumbent, lb, nodes, time.perf_counter() - t0, msg)

    empty = _empty_y_rows(instance.system)
    if empty.size:
        why = ("over-pruned candidate mask" if instance.pruned else "no candidate product triangles")
        return result(INFEASIBLE, float("inf"), 0,
                      f"{why}: Y triangle rows {empty.tolist()[:10]} have no columns")
    if instance.time_budget <= 0:
        st = TIMEOUT_WITH_INCUMBENT if incumbent is not None else TIMEOUT_NO_INCUMBENT
        return result(st, -float("inf"), 0, "time budget exhausted before solving")

    deadline = t0 + instance.time_budget
    oracle = _LpOracle(costs, instance.system)
    seq = 0
    stack = [_Node(-float("inf"), 0, {})]
    heap: list[_Node] = []
    nodes = 0

    def cutoff():
        if incumbent is None:
            return float("inf")
        v = incumbent.objective_value
        return v - 1e-9 * max(1.0, abs(v))

    while stack or heap:
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            break
        if incumbent is None and stack:
            node = stack.pop()
        else:
            if stack:
                for nd in stack:
                    heapq.heappush(heap, nd)
                stack = []
            node = heapq.heappop(heap)
        if node.bound >= cutoff():
            continue
        oracle.set_fixings(node.fixed)
        lp = oracle.solve(remaining)
        nodes += 1
        if lp.status == "timeout":
            if incumbent is None:
                stack.append(node)
            else:
                heapq.heappush(heap, node)
            break
        if lp.status == "infeasible" or lp.bound >= cutoff():
            continue
        bound = max(lp.bound, node.bound)
        x = lp.x
        frac = np.abs(x - np.round(x)) > INTEGRALITY_TOL
        if not frac.any():
            cand = _verify(instance, x)
            if cand is None:
                raise SolverError("integral LP solution violates the constraints exactly")
            if incumbent is None or cand.objective_value < incumbent.objective_value:
                incumbent = cand
            continue
        j = branch_select(x, costs)
        down = _Node(bound, seq + 1, {**node.fixed, j: 0})
        up = _Node(bound, seq + 2, {**node.fixed, j: 1})
        seq += 2
        if incumbent is None:
            stack.append(down)
            stack.append(up)
        else:
            heapq.heappush(heap, up)
            heapq.heappush(heap, down)

    open_bounds = [n.bound for n in stack + heap if n.bound < cutoff()]
    if not open_bounds:
        if incumbent is None:
            return result(INFEASIBLE, float("inf"), nodes,
                          "infeasible under candidate mask" if instance.pruned else "infeasible")
        return result(OPTIMAL, incumbent.objective_value, nodes)
    lb = min(open_bounds)
    if incumbent is None:
        return result(TIMEOUT_NO_INCUMBENT, lb, nodes, "time budget exhausted")
    return result(TIMEOUT_WITH_INCUMBENT, min(lb, incumbent.objective_value), nodes,
                  "time budget exhausted")


# --- external backend adapter ---------------------------------------------

def highs_lp(A: sparse.spmatrix, row_lower, row_upper, costs, binary=None) -> highspy.HighsLp:
    """HiGHS model for ``min c.x, row_lower <= A x <= row_upper, 0 <= x <= 1``."""
    A = sparse.csc_matrix(A, dtype=np.float64)
    n = A.shape[1]
    lp = highspy.HighsLp()
    lp.num_col_, lp.num_row_ = n, A.shape[0]
    lp.col_cost_ = np.asarray(costs, float)
    lp.col_lower_ = np.zeros(n)
    lp.col_upper_ = np.ones(n)
    lp.row_lower_ = np.asarray(row_lower, float)
    lp.row_upper_ = np.asarray(row_upper, float)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    if binary is not None:
        lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous
                           for b in binary]
    return lp


def highs_mip_backend(A: sparse.spmatrix, row_lower, row_upper, costs, binary,
                      time_budget: float):
    """Adapter contract: (triplets, bounds, objective, binary markers, budget) -> (status, x, bound).

    ``status`` is one of :data:`STATUSES`.
    """
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", 1)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 0.0)
    h.setOptionValue("time_limit", max(float(time_budget), 1e-3))
    h.passModel(highs_lp(A, row_lower, row_upper, costs, binary))
    h.run()
    st = h.getModelStatus()
    S = highspy.HighsModelStatus
    info = h.getInfo()
    has_x = info.primal_solution_status == 2
    x = np.asarray(h.getSolution().col_value) if has_x else None
    if st == S.kOptimal:
        return OPTIMAL, x, float(info.mip_dual_bound)
    if st in (S.kInfeasible, S.kUnboundedOrInfeasible):
        return INFEASIBLE, None, float("inf")
    bound = float(info.mip_dual_bound)
    return (TIMEOUT_WITH_INCUMBENT if x is not None else TIMEOUT_NO_INCUMBENT), x, bound


def solve_external(instance: IlpInstance) -> SolveResult:
    t0 = time.perf_counter()
    if instance.time_budget <= 0:
        return SolveResult(TIMEOUT_NO_INCUMBENT, None, -float("inf"), 0, 0.0,
                           "time budget exhausted before solving")
    if _empty_y_rows(instance.system).size:
        return SolveResult(INFEASIBLE, None, float("inf"), 0, 0.0, "empty Y coverage row")
    A, lo, hi = _stack(instance.system)
    status, x, bound = highs_mip_backend(A, lo, hi, instance.costs,
                                         np.ones(A.shape[1], bool), instance.time_budget)
    inc = None
    if x is not None:
        inc = _verify(instance, x)
        if inc is None:
            raise SolverError("backend returned a solution that fails the exact check")
    if status == OPTIMAL:
        bound = inc.objective_value
    return SolveResult(status, inc, bound, 0, time.perf_counter() - t0, "highs-mip")


# --- reading the result ----------------------------------------------------

def extract_matching(result: SolveResult, prod: ProductSpace) -> list[dict]:
    """One record per selected product triangle, in column order."""
    if result.incumbent is None:
        raise ValueError("solve result has no incumbent")
    cols = result.incumbent.support
    if len(cols) == 0:
        raise ValueError("incumbent selects no product triangles")
    return [prod.column(int(j)) for j in cols]
