"""Hot numeric kernels: compiled core with a pure-NumPy fallback.

The compiled extension (built from ``_core.pyx``) is preferred when
importable; otherwise the NumPy/SciPy implementations in ``_fallback`` are
used. Selection happens once at import and can be forced with the
``COSMIC_KERNELS`` environment variable:

* ``auto`` (default)  compiled if available, else fallback
* ``ext``             require the compiled core, fail otherwise
* ``py``              force the fallback

Both implementations share signatures and semantics; ``USING_EXT`` reports
which one is active.
"""

import os

_choice = os.environ.get("COSMIC_KERNELS", "auto")
if _choice not in ("auto", "ext", "py"):
    raise ValueError(f"COSMIC_KERNELS must be auto/ext/py, got {_choice!r}")

if _choice == "py":
    from . import _fallback as _impl
    USING_EXT = False
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        USING_EXT = True
    except ImportError:
        if _choice == "ext":
            raise
        from . import _fallback as _impl
        USING_EXT = False

ppr_scores = _impl.ppr_scores
induced_block = _impl.induced_block

__all__ = ["ppr_scores", "induced_block", "USING_EXT"]
