"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``PARTMATCH_PURE_PYTHON=1`` to force the numpy implementations.
"""
import logging
import os

from . import _kernels_py

logger = logging.getLogger(__name__)

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("PARTMATCH_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        logger.debug("compiled kernels unavailable, using numpy fallback")

pair_realizations = _impl.pair_realizations
boundary_triplets = _impl.boundary_triplets

__all__ = ["BACKEND", "pair_realizations", "boundary_triplets"]
