"""Kernel backend selection.

The compiled extension (``_core``) carries the hot loops; ``pure`` is a
pure-Python twin with identical arithmetic. The compiled backend is used when
importable unless ``VRSGD_PURE_PYTHON=1`` forces the fallback.
"""

import os

from . import pure

if os.environ.get("VRSGD_PURE_PYTHON", "") not in ("", "0"):
    _default = pure
else:
    try:
        from . import _core as _default  # type: ignore[attr-defined]
    except ImportError:
        _default = pure

_active = _default


def get_backend():
    return _active


def set_backend(name):
    """Switch the active backend ('cython' or 'python'); returns the module."""
    global _active
    if name == "python":
        _active = pure
    elif name == "cython":
        from . import _core

        _active = _core
    else:
        raise ValueError(f"unknown backend {name!r}")
    return _active


def available_backends():
    names = ["python"]
    try:
        from . import _core  # noqa: F401

        names.insert(0, "cython")
    except ImportError:
        pass
    return names
