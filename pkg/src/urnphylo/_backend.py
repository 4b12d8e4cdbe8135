"""Select the kernel implementation at import time.

The compiled module is used when it is importable, unless
``URNPHYLO_PURE_PYTHON=1`` is set in the environment.
"""

import os

from . import _pykernels

if os.environ.get("URNPHYLO_PURE_PYTHON") == "1":
    kernels = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = _pykernels
        BACKEND = "python"


def get_kernels(name: str | None = None):
    """Return the kernel module called ``name`` ("cython"/"python"), or the default."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
