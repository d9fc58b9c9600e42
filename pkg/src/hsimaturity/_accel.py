"""Backend selection for the compiled kernels.

Set ``HSIMATURITY_DISABLE_NUMBA=1`` before import to force the pure-numpy
kernels even when numba is installed.
"""

import os

_DISABLED = os.environ.get("HSIMATURITY_DISABLE_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError
    import numba
    from numba import njit, prange
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # the bundled TBB is often too old; workqueue is always present
        numba.config.THREADING_LAYER = "workqueue"
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func
        return decorator

BACKEND = "numba" if HAVE_NUMBA else "numpy"


def njit_options(parallel=False):
    # fastmath stays off: bitwise reproducibility matters more than speed here
    return dict(cache=True, nogil=True, fastmath=False, parallel=parallel)
