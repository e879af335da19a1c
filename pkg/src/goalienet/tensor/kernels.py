"""Backend selection for the hot kernels.

The compiled Cython module is preferred; the numpy fallback is used when the
extension was not built or when ``GOALIENET_PURE_PYTHON=1`` is set before
import. Both backends expose the same six functions.
"""

import os

from goalienet.tensor import _pykernels

if os.environ.get("GOALIENET_PURE_PYTHON") == "1":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from goalienet.tensor import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"


def available_backends():
    """Map backend name -> kernel module for every backend importable here."""
    found = {"python": _pykernels}
    try:
        from goalienet.tensor import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found


im2col = _impl.im2col
col2im = _impl.col2im
maxpool2x2 = _impl.maxpool2x2
maxpool2x2_backward = _impl.maxpool2x2_backward
upsample2x = _impl.upsample2x
upsample2x_backward = _impl.upsample2x_backward
