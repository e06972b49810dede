"""MILP export/import in free MPS, for cross-checks with third-party solvers.

Layout written by HiGHS: ``NAME``, ``ROWS`` (``N obj`` then one row per
constraint), ``COLUMNS`` with every variable inside an integer marker block,
``RHS``, ``RANGES`` where needed and ``BOUNDS`` (all variables in [0, 1]).
Row order is the solver's: non-empty boundary rows (``= 0``), then
``proj_X`` rows (``<= 1``), then ``proj_Y`` rows (``= 1``). Column ``t<j>`` is
product triangle j; rows are named ``b<i>``, ``x<i>`` and ``y<i>`` by family.
"""
from __future__ import annotations

from pathlib import Path

import highspy
import numpy as np
from scipy import sparse

from .solver import IlpInstance, _stack, highs_lp


class MpsError(ValueError):
    pass


def _quiet() -> highspy.Highs:
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    return h


def export_mps(instance: IlpInstance, path) -> None:
    path = Path(path)
    if path.suffix.lower() != ".mps":
        raise MpsError("export path must end in .mps")
    A, lo, hi = _stack(instance.system)
    lp = highs_lp(A, lo, hi, instance.costs, [True] * A.shape[1])
    nb = A.shape[0] - instance.system.proj_X.shape[0] - instance.system.proj_Y.shape[0]
    nx = instance.system.proj_X.shape[0]
    lp.col_names_ = [f"t{j}" for j in range(A.shape[1])]
    lp.row_names_ = ([f"b{i}" for i in range(nb)] + [f"x{i}" for i in range(nx)]
                     + [f"y{i}" for i in range(A.shape[0] - nb - nx)])
    h = _quiet()
    h.passModel(lp)
    if h.writeModel(str(path)) == highspy.HighsStatus.kError:
        raise MpsError(f"could not write {path}")


def import_mps(path):
    """Read a model back.

    Returns
    -------
    A : scipy.sparse.csc_matrix
    row_lower, row_upper, costs : ndarray
    binary : ndarray of bool
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    h = _quiet()
    if h.readModel(str(path)) == highspy.HighsStatus.kError:
        raise MpsError(f"could not read {path}")
    lp = h.getLp()
    m, n = lp.num_row_, lp.num_col_
    a = lp.a_matrix_
    A = sparse.csc_matrix((np.asarray(a.value_), np.asarray(a.index_), np.asarray(a.start_)),
                          shape=(m, n))
    integ = list(lp.integrality_)
    binary = np.array([bool(integ) and integ[j] == highspy.HighsVarType.kInteger
                       for j in range(n)], dtype=bool)
    return (A, np.asarray(lp.row_lower_), np.asarray(lp.row_upper_),
            np.asarray(lp.col_cost_), binary)
