"""Select the BM25 accumulation backend at import.

The compiled extension is used when it was built; setting
``ATTRIBIAS_PURE_PYTHON=1`` forces the Python fallback.
"""
import os

from . import _bm25_py

if os.environ.get("ATTRIBIAS_PURE_PYTHON"):
    accumulate = _bm25_py.accumulate
    BACKEND = "python"
else:
    try:
        from ._bm25_core import accumulate
        BACKEND = "cython"
    except ImportError:
        accumulate = _bm25_py.accumulate
        BACKEND = "python"

BACKENDS = {"python": _bm25_py.accumulate}
try:
    from ._bm25_core import accumulate as _compiled
    BACKENDS["cython"] = _compiled
except ImportError:
    pass
