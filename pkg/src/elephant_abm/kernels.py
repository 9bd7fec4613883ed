"""Backend selection for the numeric hot loops.

The compiled Cython module is used when it imports cleanly. Setting the
environment variable ``ELEPHANT_ABM_BACKEND=python`` forces the pure-Python
fallback, which is also used automatically when no compiler was available
at install time.
"""
from __future__ import annotations

import os

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("ELEPHANT_ABM_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        _compiled = None
    else:
        _impl = _compiled
        BACKEND = "cython"
else:
    _compiled = None

forward_log = _impl.forward_log
backward_log = _impl.backward_log
viterbi = _impl.viterbi
edt_squared = _impl.edt_squared
sector_costs = _impl.sector_costs


def available_backends() -> dict:
    """Map backend name to module for every backend importable here."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:  # pragma: no cover
        pass
    else:
        out["cython"] = _ckernels
    return out
