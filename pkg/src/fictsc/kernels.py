"""Kernel backend selection.

The compiled extension is used when it was built; set ``FICTSC_PURE_PYTHON=1``
to force the numpy fallback.
"""

import os

from fictsc import _kernels_py

if os.environ.get("FICTSC_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from fictsc import _kernels as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

im2col1d = _impl.im2col1d
col2im1d = _impl.col2im1d
maxpool1d_same = _impl.maxpool1d_same
maxpool1d_backward = _impl.maxpool1d_backward
w1_sorted = _impl.w1_sorted
