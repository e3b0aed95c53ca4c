"""Hot-kernel dispatch: compiled Cython core with a pure-numpy fallback.

The compiled module is preferred when importable; set ``DIVR_PURE_PYTHON=1``
to force the fallback (used by the benchmark and the equivalence tests).
``BACKEND`` records which implementation is live.
"""

import os

from . import _numpy_impl

if os.environ.get("DIVR_PURE_PYTHON", "") == "1":
    _impl = _numpy_impl
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _numpy_impl
        BACKEND = "numpy"

farthest_point_sample = _impl.farthest_point_sample
ball_group = _impl.ball_group
ecc_forward = _impl.ecc_forward
ecc_backward = _impl.ecc_backward

__all__ = [
    "BACKEND",
    "farthest_point_sample",
    "ball_group",
    "ecc_forward",
    "ecc_backward",
]
