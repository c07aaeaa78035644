"""Pick the closed-loop kernel at import time.

The compiled extension is used when it has been built; set
``SMITHSAFE_BACKEND=python`` to force the pure-Python loop.
"""
import os

try:
    from . import _core as core
except ImportError:  # extension not built
    core = None

_requested = os.environ.get("SMITHSAFE_BACKEND", "").strip().lower()
if _requested in ("python", "compiled"):
    DEFAULT = _requested
else:
    DEFAULT = "compiled" if core is not None else "python"
