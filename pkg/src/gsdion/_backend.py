"""Select the kernel implementation at import time.

Set ``GSDION_PURE_PYTHON=1`` to force the fallback even when the compiled
extension is present.
"""

import os

from . import _kernels_py

if os.environ.get("GSDION_PURE_PYTHON"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
