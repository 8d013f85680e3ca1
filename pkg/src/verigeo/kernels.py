"""Kernel dispatch: compiled extension when available, pure Python otherwise.

Set ``VERIGEO_PURE_PYTHON=1`` to force the fallback.  ``BACKEND`` names the
implementation in use.
"""
import os

from . import _kernels_py

MEDIAN_IQR = _kernels_py.MEDIAN_IQR
MEAN_SD = _kernels_py.MEAN_SD

_impl = _kernels_py
BACKEND = "python"
if not os.environ.get("VERIGEO_PURE_PYTHON"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

square_neighbors = _impl.square_neighbors
neighborhood_summaries = _impl.neighborhood_summaries
pair_bins = _impl.pair_bins

__all__ = ["BACKEND", "MEDIAN_IQR", "MEAN_SD", "square_neighbors",
           "neighborhood_summaries", "pair_bins"]
