"""Hot-kernel backend selection.

The compiled extension (``_fast``, Cython) and the numpy fallback (``_slow``)
implement the same three functions. The extension is preferred when it
imports; set MSPROG_KERNELS=slow or MSPROG_KERNELS=fast to force a backend
(fast raises if the extension is missing — used by the benchmark and the
parity tests).
"""

import os

_forced = os.environ.get("MSPROG_KERNELS", "").strip().lower()
if _forced not in ("", "fast", "slow"):
    raise RuntimeError(f"MSPROG_KERNELS must be 'fast' or 'slow', got {_forced!r}")

if _forced == "slow":
    from . import _slow as _impl
    BACKEND = "slow"
else:
    try:
        from . import _fast as _impl  # type: ignore[attr-defined]
        BACKEND = "fast"
    except ImportError:
        if _forced == "fast":
            raise
        from . import _slow as _impl
        BACKEND = "slow"

best_split = _impl.best_split
conv1d_fwd = _impl.conv1d_fwd
conv1d_bwd = _impl.conv1d_bwd

__all__ = ["BACKEND", "best_split", "conv1d_fwd", "conv1d_bwd"]
