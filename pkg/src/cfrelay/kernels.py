"""Backend dispatch for the hot kernels.

The numba path is the default; set CFRELAY_DISABLE_NUMBA=1 (or uninstall
numba) to run on the pure-numpy reference implementations instead.  Both
backends stay importable side by side so tests and benchmarks can compare
them directly via get_backend().
"""

from __future__ import annotations

import os

from . import _kernels_numpy

_flag = os.environ.get("CFRELAY_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag in ("1", "true", "yes", "on")

HAS_NUMBA = False
_impl = _kernels_numpy
if not _disabled:
    try:
        from . import _kernels_numba

        _impl = _kernels_numba
        HAS_NUMBA = True
    except ImportError:
        pass

BACKEND = "numba" if _impl is not _kernels_numpy else "numpy"

spa_update = _impl.spa_update
viterbi = _impl.viterbi
bcjr = _impl.bcjr


def get_backend(name: str):
    """Return the kernel module for an explicit backend name."""
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba
    raise ValueError(f"unknown backend: {name!r}")
