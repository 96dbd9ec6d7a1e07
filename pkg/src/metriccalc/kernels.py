"""Backend selection for the hot loops.

The compiled extension ``metriccalc._core`` is used when it imports; set
``METRICCALC_PURE=1`` to force the numpy fallback.
"""
import os

from . import _kernels_py

BALL_RTOL = _kernels_py.BALL_RTOL

_backend = _kernels_py
BACKEND = "python"
if os.environ.get("METRICCALC_PURE", "") in ("", "0"):
    try:
        from . import _core as _backend  # noqa: F811

        BACKEND = "cython"
    except ImportError:  # extension not built
        _backend = _kernels_py

scale_maxima = _backend.scale_maxima
max_slope_coords = _backend.max_slope_coords
max_slope_dense = _backend.max_slope_dense
mcshane_coords = _backend.mcshane_coords
mcshane_dense = _backend.mcshane_dense
cross_dist = _backend.cross_dist


def get_backend(name):
    """Return the kernel module named ``"python"`` or ``"cython"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
