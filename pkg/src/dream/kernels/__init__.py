"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly, unless the environment
variable ``DREAM_DISABLE_NUMBA`` is set to a non-empty value other than ``0``.
Both paths are importable directly as ``dream.kernels.numpy_impl`` and
``dream.kernels.numba_impl`` (the latter is ``None`` without numba).
"""

import os

from . import _numpy as numpy_impl

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba_impl = None

_flag = os.environ.get("DREAM_DISABLE_NUMBA", "")
USE_NUMBA = numba_impl is not None and _flag in ("", "0")

backend = numba_impl if USE_NUMBA else numpy_impl
BACKEND_NAME = "numba" if USE_NUMBA else "numpy"

spmm_coo = backend.spmm_coo
topk_rows = backend.topk_rows
pair_membership = backend.pair_membership

__all__ = ["spmm_coo", "topk_rows", "pair_membership", "USE_NUMBA", "BACKEND_NAME",
           "numpy_impl", "numba_impl"]
