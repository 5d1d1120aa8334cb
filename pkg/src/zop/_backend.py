"""Kernel backend selection.

The compiled extension is used when it imports; setting ``ZOP_PURE_PYTHON=1``
forces the numpy fallback.
"""

import logging
import os

from . import _kernels_py

log = logging.getLogger(__name__)


def _load():
    if os.environ.get("ZOP_PURE_PYTHON", "").strip() not in ("", "0"):
        return _kernels_py
    try:
        from . import _kernels
    except ImportError:
        log.debug("compiled kernels unavailable, using the numpy fallback")
        return _kernels_py
    return _kernels


kernels = _load()
BACKEND = kernels.BACKEND
