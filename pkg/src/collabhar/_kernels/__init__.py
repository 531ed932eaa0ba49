"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it was built and importable. Setting
``COLLABHAR_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels

try:
    if os.environ.get("COLLABHAR_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

propagate_potential = _impl.propagate_potential
window_majority = _impl.window_majority
soft_vote = _impl.soft_vote


def backends():
    """Map backend name to module for every backend available here."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found


__all__ = ["BACKEND", "backends", "propagate_potential", "soft_vote", "window_majority"]
