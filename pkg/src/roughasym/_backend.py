"""Select the compiled kernel extension or the numpy fallback at import time.

Set ROUGHASYM_BACKEND=python (or =compiled) to force a choice; the default
prefers the compiled module and silently falls back when it is absent.
"""

import os

from . import _kernels_py

_requested = os.environ.get("ROUGHASYM_BACKEND", "").strip().lower()

if _requested == "python":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_py
        BACKEND = "python"

fill_level_pairs = _impl.fill_level_pairs
pair_holder_max = _impl.pair_holder_max
path_holder_max = _impl.path_holder_max
cell_cross_sums = _impl.cell_cross_sums
