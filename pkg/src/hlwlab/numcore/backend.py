"""Kernel backend selection.

The compiled extension is preferred when present; the numpy fallback is
always available. ``HLWLAB_KERNELS`` overrides: "c" requires the compiled
kernels, "py" forces the fallback, "auto" (default) picks compiled when it
imports cleanly.
"""

import os

from . import _pykernels


def _select():
    choice = os.environ.get("HLWLAB_KERNELS", "auto").lower()
    if choice == "py":
        return _pykernels
    try:
        from . import _ckernels
        return _ckernels
    except ImportError:
        if choice == "c":
            raise ImportError(
                "HLWLAB_KERNELS=c but the compiled kernels are not built")
        return _pykernels


kernels = _select()


def backend_name() -> str:
    return kernels.BACKEND


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
        return True
    except ImportError:
        return False
