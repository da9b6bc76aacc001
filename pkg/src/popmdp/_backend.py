"""Selects the compiled path kernels when available.

The compiled extension `popmdp._kernels` and the fallback
`popmdp._kernels_py` implement the same functions with bit-identical
arithmetic; which one is active only changes speed.  Set
POPMDP_PURE_PYTHON=1 to force the fallback.
"""

from __future__ import annotations

import os

if os.environ.get("POPMDP_PURE_PYTHON") == "1":
    from popmdp import _kernels_py as kernels

    BACKEND = "python"
else:
    try:
        from popmdp import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        from popmdp import _kernels_py as kernels  # type: ignore[no-redef]

        BACKEND = "python"
