"""Optional numba acceleration.

Hot kernels are compiled with ``numba.njit`` when numba imports and the
``ROBUST_CONSENSUS_BACKEND`` environment variable is not ``numpy``. In that
case a pure-numpy implementation of each kernel is used instead.
``ROBUST_CONSENSUS_THREADS`` caps the number of numba worker threads.
"""

import logging
import os

logger = logging.getLogger(__name__)

BACKEND_ENV = "ROBUST_CONSENSUS_BACKEND"
THREADS_ENV = "ROBUST_CONSENSUS_THREADS"

_requested = os.environ.get(BACKEND_ENV, "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    logger.warning("unknown %s=%r, using numba", BACKEND_ENV, _requested)
    _requested = "numba"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested == "numba"

if HAVE_NUMBA:
    njit = numba.njit
    prange = numba.prange
    _threads = os.environ.get(THREADS_ENV)
    if _threads:
        try:
            numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, _threads)
else:  # pragma: no cover

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap

    prange = range


def backend() -> str:
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


def thread_cap() -> int:
    """Parallelism cap from ``ROBUST_CONSENSUS_THREADS`` (0 when unset)."""
    try:
        return max(0, int(os.environ.get(THREADS_ENV, "0")))
    except ValueError:
        return 0
