"""Backend selection for the Monte-Carlo sampling kernel.

The compiled ``_ckernels`` module is used when it imports; otherwise the numpy
implementation in ``_pykernels``. Set ``MUBQKD_PURE_PYTHON=1`` to force the
fallback. Both produce identical counts for identical inputs.
"""

from __future__ import annotations

import os

from . import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("MUBQKD_PURE_PYTHON", "") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels

tally_block = _impl.tally_block
key_from_seed = _impl.key_from_seed
uniforms = _impl.uniforms


def get_backend(name: str | None = None):
    """Return the kernel module named ``"cython"`` or ``"python"`` (default: active)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    out = ["python"]
    try:
        from . import _ckernels  # noqa: F401

        out.insert(0, "cython")
    except ImportError:  # pragma: no cover
        pass
    return out
