"""Kernel backend selection.

The training hot paths (network forward/backward, Adam, discounted
returns) exist twice: a compiled Cython extension and a NumPy fallback.
One backend is selected when this package is imported:

* ``ESIL_BACKEND=compiled`` forces the extension (ImportError if absent),
* ``ESIL_BACKEND=numpy`` forces the fallback,
* unset: the extension is used when importable.

Reproducibility note: runs are deterministic per backend; the two
backends agree to floating-point roundoff, not bit-for-bit.
"""

from __future__ import annotations

import os

from . import numpy_backend


def _load_compiled():
    from . import _core

    return _core


_forced = os.environ.get("ESIL_BACKEND", "").strip().lower()
if _forced == "numpy":
    _impl = numpy_backend
elif _forced == "compiled":
    _impl = _load_compiled()
elif _forced:
    raise ValueError(
        f"ESIL_BACKEND={_forced!r} not recognised (expected 'compiled' or 'numpy')"
    )
else:
    try:
        _impl = _load_compiled()
    except ImportError:
        _impl = numpy_backend

BACKEND: str = _impl.NAME

mlp_forward = _impl.mlp_forward
mlp_backward = _impl.mlp_backward
adam_update = _impl.adam_update
discounted_returns = _impl.discounted_returns


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        _load_compiled()
        names.append("compiled")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Look up a backend module by name, independent of the active one."""
    if name == "numpy":
        return numpy_backend
    if name == "compiled":
        return _load_compiled()
    raise ValueError(f"unknown backend {name!r}")
