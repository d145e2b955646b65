"""Backend selection for the hot kernels.

The compiled extension is used when importable; otherwise the numpy
fallback. Set ``ROTOR_TF_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("ROTOR_TF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

bessel_i = _impl.bessel_i
bessel_i_table = _impl.bessel_i_table
rrr_iterate = _impl.rrr_iterate


def backends():
    """Mapping of available backend names to kernel modules."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        out["cython"] = _kernels
    return out
