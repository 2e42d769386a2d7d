"""Backend selection for the closed-loop inner kernel.

The compiled Cython kernel handles linear input/output plants with the
reciprocal gain map; everything else goes through the generic pure-Python
loop in zohfunnel.sim. Set ZOHFUNNEL_PURE_PYTHON=1 to ignore the compiled
kernel even when it is importable (the benchmark uses this to compare the
two engines).
"""

import os

_FORCED_PYTHON = os.environ.get("ZOHFUNNEL_PURE_PYTHON", "") not in ("", "0")

try:
    from . import _core  # compiled at install time from _core.pyx
except ImportError:  # pure-Python install, or in-place source tree without build
    _core = None


def compiled_available() -> bool:
    return _core is not None and not _FORCED_PYTHON


def backend_name() -> str:
    return "compiled" if compiled_available() else "python"


def core():
    if _core is None:
        raise RuntimeError("compiled kernel is not available")
    return _core
