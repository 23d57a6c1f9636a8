"""Hot-kernel backend selection.

Prefers the compiled extension, falls back to the pure-Python twin.
Set GAMESYNC_PURE=1 to force the pure backend (used by the parity tests
and the benchmark).
"""

import os

if os.environ.get("GAMESYNC_PURE"):
    from gamesync import _kernels_py as _impl
else:
    try:
        from gamesync import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from gamesync import _kernels_py as _impl

BACKEND: str = _impl.BACKEND

rng_step = _impl.rng_step
predict = _impl.predict
converge_blend = _impl.converge_blend
ewma = _impl.ewma
dist = _impl.dist
