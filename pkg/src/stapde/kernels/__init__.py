"""Hot numeric kernels with two interchangeable backends.

The numba backend compiles the inner loops; the numpy backend expresses the
same contracts with vectorized slices and BLAS. Selection is by the
STAPDE_BACKEND environment variable: "numba" (default when numba imports),
"numpy", or "auto". `benchmarks/bench_backends.py` times the two side by side.

All kernels are pure functions of ndarrays (FDTD updates mutate their state
arrays in place); nothing here knows about multivectors or models.
"""

import os

from ..errors import ConfigError

_KERNEL_NAMES = [
    "conv2d_forward", "conv2d_backward_x", "conv2d_backward_w",
    "conv3d_forward", "conv3d_backward_x", "conv3d_backward_w",
    "fdtd2d_update_b", "fdtd2d_update_e",
    "fdtd3d_update_b", "fdtd3d_update_e",
]


def _load(requested: str):
    if requested not in ("auto", "numba", "numpy"):
        raise ConfigError(f"STAPDE_BACKEND must be auto|numba|numpy, got {requested!r}")
    if requested in ("auto", "numba"):
        try:
            from . import numba_impl
            return numba_impl, "numba"
        except ImportError:
            if requested == "numba":
                raise ConfigError("STAPDE_BACKEND=numba but numba is not importable") from None
    from . import numpy_impl
    return numpy_impl, "numpy"


_threads = os.environ.get("STAPDE_THREADS")
if _threads and _threads.isdigit():
    os.environ.setdefault("NUMBA_NUM_THREADS", _threads)

_impl, BACKEND = _load(os.environ.get("STAPDE_BACKEND", "auto").lower())

for _name in _KERNEL_NAMES:
    globals()[_name] = getattr(_impl, _name)


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND


def get_impl(name: str):
    """Load a specific backend module (used by the benchmark)."""
    impl, _ = _load(name)
    return impl


__all__ = _KERNEL_NAMES + ["BACKEND", "backend_name", "get_impl"]
