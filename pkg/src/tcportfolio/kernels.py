"""Backend selection for the scenario-loop kernels.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``TCPORTFOLIO_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"

if not os.environ.get("TCPORTFOLIO_PURE"):
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on build
        _impl = _pykernels
else:
    _impl = _pykernels

branch_sums = _impl.branch_sums
upper_fraction = _impl.upper_fraction
wealth_paths = _impl.wealth_paths

__all__ = ["BACKEND", "branch_sums", "upper_fraction", "wealth_paths"]
