"""Worker-thread cap, applied before numpy first loads.

FDTN_THREADS=N pins the BLAS/OpenMP pools numpy spins up at import time,
which is why this module must be imported before anything numeric. 0 or
unset keeps the library defaults; explicitly set pool variables win over
the cap.
"""

import os

_POOL_VARS = (
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "OMP_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def apply_thread_cap(environ=os.environ):
    raw = environ.get("FDTN_THREADS", "").strip()
    if not raw or raw == "0":
        return
    if not raw.isdigit():
        raise ValueError(f"FDTN_THREADS must be a non-negative integer, got {raw!r}")
    for var in _POOL_VARS:
        environ.setdefault(var, raw)


apply_thread_cap()
