"""Hot numeric kernels with backend selection at import time.

The compiled extension is preferred; the numpy fallback keeps the package
fully functional without a compiler. Set SPARSEDOC_PURE_PYTHON=1 to force the
fallback (the benchmark suite uses this to compare both).
"""

import os

from . import pykernels

if os.environ.get("SPARSEDOC_PURE_PYTHON"):
    _impl = pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = pykernels
        BACKEND = "python"

train_epoch = _impl.train_epoch
accumulate_doc = _impl.accumulate_doc


def backends() -> dict:
    """Importable kernel implementations keyed by backend name."""
    found = {"python": pykernels}
    try:
        from . import _ckernels

        found["compiled"] = _ckernels
    except ImportError:
        pass
    return found
