"""Kernel selection: the compiled Cython kernel when importable, otherwise the
pure-Python fallback. Set ``LOWSWITCH_PURE_PYTHON=1`` to force the fallback."""

import os

from . import _fallback

try:
    if os.environ.get("LOWSWITCH_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend forced by environment")
    from . import _kernel as _compiled
except ImportError:
    _compiled = None

kernel = _compiled if _compiled is not None else _fallback
NAME = "cython" if _compiled is not None else "python"


def get(name: str | None = None):
    """Return the kernel module for ``name`` (``"cython"``, ``"python"`` or default)."""
    if name is None:
        return kernel
    if name == "python":
        return _fallback
    if name == "cython":
        if _compiled is None:
            raise ImportError("Cython kernel is not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])
