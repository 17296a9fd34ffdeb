"""Process-level numerics knobs."""

from __future__ import annotations

import ctypes
import glob
import os

_SYMBOLS = (
    "scipy_openblas_set_num_threads64_",
    "scipy_openblas_set_num_threads",
    "openblas_set_num_threads64_",
    "openblas_set_num_threads",
)


def limit_blas_threads(n: int = 1) -> bool:
    """Pin the BLAS thread pool to n threads (default 1).

    The training loops multiply small matrices; on small machines the pool's
    synchronization costs more than the parallelism returns, and a fixed
    thread count keeps repeated runs byte-identical. PREFOPT_BLAS_THREADS
    overrides the requested count. Returns True when a knob was found.
    """
    if os.environ.get("PREFOPT_BLAS_THREADS"):
        n = int(os.environ["PREFOPT_BLAS_THREADS"])
    import numpy as np

    pattern = os.path.join(os.path.dirname(np.__file__), "..", "numpy.libs",
                           "libscipy_openblas*.so*")
    for path in sorted(glob.glob(pattern)):
        try:
            lib = ctypes.CDLL(path)
        except OSError:
            continue
        for name in _SYMBOLS:
            setter = getattr(lib, name, None)
            if setter is not None:
                setter(int(n))
                return True
    return False
