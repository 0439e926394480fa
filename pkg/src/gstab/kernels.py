"""Kernel selection: compiled path enumeration when built, pure Python otherwise.

Set ``GSTAB_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pathenum_py

if os.environ.get("GSTAB_PURE_PYTHON") == "1":
    _impl = _pathenum_py
    COMPILED = False
else:
    try:
        from . import _pathenum as _impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pathenum_py
        COMPILED = False

simple_path_ends = _impl.simple_path_ends
count_simple_paths = _impl.count_simple_paths

__all__ = ["COMPILED", "simple_path_ends", "count_simple_paths"]
