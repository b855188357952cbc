"""Select the compiled kernels when available, else the numpy fallback.

Set ``MPFEM_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

if os.environ.get("MPFEM_PURE_PYTHON") == "1":
    kernels = _kernels_py
    NAME = "python"
else:
    try:
        from . import _kernels as kernels
        NAME = "compiled"
    except ImportError:
        kernels = _kernels_py
        NAME = "python"

BACKENDS = {"python": _kernels_py}
if NAME == "compiled":
    BACKENDS["compiled"] = kernels
