"""Hot-loop kernels with a numba fast path and a pure-numpy fallback.

Set ``PLASMOFLOW_NUMBA=0`` to force the numpy implementations (useful on
platforms where numba is unavailable or for debugging).  The active backend
is exported as ``BACKEND``.  ``benchmarks/bench_kernels.py`` compares the
two implementations head to head.
"""

import os

from ._numpy_impl import UNKNOWN

_want_numba = os.environ.get("PLASMOFLOW_NUMBA", "1").lower() not in ("0", "false", "no")

if _want_numba:
    try:
        from ._numba_impl import accumulate_flow_tensors, scan_trip_runs_batch
        BACKEND = "numba"
    except ImportError:
        from ._numpy_impl import accumulate_flow_tensors, scan_trip_runs_batch
        BACKEND = "numpy"
else:
    from ._numpy_impl import accumulate_flow_tensors, scan_trip_runs_batch
    BACKEND = "numpy"

__all__ = ["UNKNOWN", "BACKEND", "scan_trip_runs_batch", "accumulate_flow_tensors"]
