"""Numba availability probing and the numpy-fallback switch.

Hot statevector kernels exist in two flavors: numba ``@njit`` loops in
``mqr._kernels`` and vectorized numpy code. The numba path is used when numba
imports cleanly and the environment variable ``MQR_NO_NUMBA`` is unset (or
"0"); setting ``MQR_NO_NUMBA=1`` forces the pure-numpy path. The switch can
also be flipped at runtime, which is how the benchmark times both paths in
one process.
"""

import os

try:
    import numba  # noqa: F401
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

_ENV_DISABLED = os.environ.get("MQR_NO_NUMBA", "0").lower() in ("1", "true", "yes")

_use_numba = HAVE_NUMBA and not _ENV_DISABLED


def numba_enabled():
    """True when the numba kernel path is active."""
    return _use_numba


def set_numba_enabled(flag):
    """Flip the kernel path at runtime. Returns the previous setting."""
    global _use_numba
    previous = _use_numba
    _use_numba = bool(flag) and HAVE_NUMBA
    return previous
