"""Backend selection for the detection-chain kernels.

The compiled extension is used when importable; ``TRIPLETSIM_BACKEND=python``
forces the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
event_block = _kernels_py.event_block
dead_time_mask = _kernels_py.dead_time_mask

if os.environ.get("TRIPLETSIM_BACKEND", "").lower() != "python":
    try:
        from . import _kernels
    except ImportError:  # pragma: no cover - depends on build
        pass
    else:
        BACKEND = "cython"
        event_block = _kernels.event_block
        dead_time_mask = _kernels.dead_time_mask


def get_backend(name: str | None = None):
    """Return a ``(event_block, dead_time_mask)`` pair for ``name`` (default: active)."""
    if name is None:
        name = BACKEND
    if name == "python":
        return _kernels_py.event_block, _kernels_py.dead_time_mask
    if name == "cython":
        from . import _kernels

        return _kernels.event_block, _kernels.dead_time_mask
    raise ValueError(f"unknown backend {name!r}")
