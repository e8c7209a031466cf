"""Select the kernel implementation at import.

Set ``PERMLAB_BACKEND=python`` to force the numpy fallback, or
``PERMLAB_BACKEND=cython`` to fail loudly when the extension is missing.
"""

from __future__ import annotations

import os

from . import _fallback

_choice = os.environ.get("PERMLAB_BACKEND", "").strip().lower()

if _choice == "python":
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise
        kernels = _fallback

BACKEND: str = kernels.BACKEND
