"""Kernel backend selection.

The compiled extension is used when it imports; set ``KTUNE_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

if _compiled is not None and not os.environ.get("KTUNE_PURE_PYTHON"):
    DEFAULT = "cython"
else:
    DEFAULT = "python"


def get(name: str | None = None):
    name = name or DEFAULT
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable (have: {', '.join(BACKENDS)})") from None
