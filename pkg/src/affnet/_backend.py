"""Select the kernel implementation at import time.

The compiled extension is preferred; ``AFF_BACKEND=python`` forces the numpy
fallback (handy for debugging and for the compiled-vs-python benchmark).
"""

import logging
import os

from . import _fallback

log = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

_choice = os.environ.get("AFF_BACKEND", "auto").lower()
if _choice == "python" or _compiled is None:
    if _choice == "compiled":
        raise ImportError("AFF_BACKEND=compiled but affnet._kernels is not built")
    kernels = _fallback
else:
    kernels = _compiled

log.debug("affnet kernel backend: %s", kernels.NAME)


def available():
    """Names of the backends importable in this environment."""
    return ["python"] if _compiled is None else ["compiled", "python"]


def get(name):
    if name == "python":
        return _fallback
    if name == "compiled":
        if _compiled is None:
            raise ImportError("compiled backend not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")
