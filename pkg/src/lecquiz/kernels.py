"""Kernel backend selection.

The compiled extension is used when it was built; setting
``LECQUIZ_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("LECQUIZ_PURE_PYTHON"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
levenshtein = _compiled.levenshtein if _compiled is not None else _kernels_py.levenshtein

__all__ = ["BACKEND", "levenshtein", "available_backends"]


def available_backends() -> dict:
    """Map backend name to its ``levenshtein`` implementation."""
    backends = {"python": _kernels_py.levenshtein}
    if _compiled is not None:
        backends["cython"] = _compiled.levenshtein
    return backends
