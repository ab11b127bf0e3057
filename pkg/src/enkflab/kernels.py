"""Backend selection for the Euler-Maruyama hot loops.

The compiled extension is used when it imports; otherwise the NumPy twin.
Set ``ENKFLAB_PURE_PYTHON=1`` to force the NumPy path.
"""
import os

from . import _kernels_py

try:
    if os.environ.get("ENKFLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

em_lorenz96 = _impl.em_lorenz96
em_lorenz63 = _impl.em_lorenz63

BACKENDS = {"python": _kernels_py}
if BACKEND == "compiled":
    BACKENDS["compiled"] = _impl
