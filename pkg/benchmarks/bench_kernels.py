"""Compare the compiled and numpy kernels on product-space assembly.

Usage::

    python benchmarks/bench_kernels.py [--sizes 40,80,120] [--repeat 3]

For each X face target the partial Y is a cap-removed copy. Reported times
are the best of ``--repeat`` runs of building the product space and its
constraint system, once over the full space and once under a ring mask.
``kernel`` columns count only time spent inside the two kernels; ``total``
columns include the surrounding numpy and sparse-matrix work.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from partmatch import _kernels_py, kernels
from partmatch import synthetic as SY
from partmatch.coarse_to_fine import prolong
from partmatch.decimation import decimate
from partmatch.mesh import extend
from partmatch.product import build_constraint_system, build_product_space


def _timed(fn, acc):
    def run(*args):
        t0 = time.perf_counter()
        out = fn(*args)
        acc[0] += time.perf_counter() - t0
        return out
    return run


def assemble(impl, extX, extY, allowed):
    """(kernel seconds, total seconds, (columns, boundary nnz))"""
    acc = [0.0]
    kernels.pair_realizations = _timed(impl.pair_realizations, acc)
    kernels.boundary_triplets = _timed(impl.boundary_triplets, acc)
    t0 = time.perf_counter()
    prod = build_product_space(extX, extY, allowed)
    system = build_constraint_system(prod)
    return acc[0], time.perf_counter() - t0, (prod.n_columns, system.boundary.nnz)


def best_of(fn, repeat):
    runs = [fn() for _ in range(repeat)]
    return min(r[0] for r in runs), min(r[1] for r in runs), runs[0][2]


def ring_mask(X, Y, kept):
    # ground-truth pairs widened by two rings, as a refinement level would see
    recs = [{"x_vertices": tuple(kept[t]), "y_vertices": tuple(t)} for t in Y.triangles.tolist()]
    return prolong(recs, np.arange(X.n_vertices), np.arange(Y.n_vertices), X, Y, 2).allowed


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="40,80,120")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    try:
        from partmatch import _kernels as compiled
    except ImportError:
        raise SystemExit("compiled kernels not built; run `pip install -e . --no-build-isolation`")

    saved = kernels.pair_realizations, kernels.boundary_triplets
    print(f"{'faces X/Y':>10} {'mask':>5} {'columns':>9}  {'kernel numpy/cython s':>22} {'x':>5}"
          f"  {'total numpy/cython s':>21} {'x':>5}")
    try:
        for n in (int(s) for s in args.sizes.split(",")):
            X, _ = decimate(SY.bumpy_sphere(3, seed=1), n)
            Y, kept = SY.remove_cap(X, (0, 0, 1), 0.7)
            extX, extY = extend(X), extend(Y)
            for name, allowed in (("none", None), ("ring", ring_mask(X, Y, kept))):
                kp, tp, a = best_of(lambda: assemble(_kernels_py, extX, extY, allowed), args.repeat)
                kc, tc, b = best_of(lambda: assemble(compiled, extX, extY, allowed), args.repeat)
                if a != b:
                    raise SystemExit(f"kernel outputs differ at {n} faces ({a} vs {b})")
                print(f"{X.n_triangles:>4}/{Y.n_triangles:<5} {name:>5} {a[0]:>9}  "
                      f"{kp:>10.3f} /{kc:>9.3f} {kp / kc:>5.1f}"
                      f"  {tp:>10.3f} /{tc:>8.3f} {tp / tc:>5.1f}")
    finally:
        kernels.pair_realizations, kernels.boundary_triplets = saved


if __name__ == "__main__":
    main()
