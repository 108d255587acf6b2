"""Kernel selection: compiled extension when available, pure Python otherwise.

Set ``CROWDGATE_PURE=1`` to force the pure kernel (used by the parity tests
and the benchmark).
"""

import os

if os.environ.get("CROWDGATE_PURE") == "1":
    from ._pure import smooth_counts

    BACKEND = "pure"
else:
    try:
        from ._fast import smooth_counts

        BACKEND = "compiled"
    except ImportError:
        from ._pure import smooth_counts

        BACKEND = "pure"

__all__ = ["smooth_counts", "BACKEND"]
