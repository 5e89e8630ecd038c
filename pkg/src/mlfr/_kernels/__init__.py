"""Hot numerical kernels with a compiled core and a pure-Python fallback.

The Cython extension ``_core`` is preferred when importable; otherwise the
NumPy/Python twin in ``_pure`` is used. Set ``MLFR_PURE_PYTHON=1`` to force
the fallback (useful for debugging and for the backend benchmark).

The conv kernels always take the im2col+BLAS route: benchmarks/bench_kernels.py
shows it beats the naive compiled loops at realistic sizes, so there the
numpy implementation *is* the fast path. Cython carries the loops BLAS
cannot express (quickshift, pooling argmax, coordinate descent).
"""

import os

from . import _pure

if os.environ.get("MLFR_PURE_PYTHON"):
    _impl = _pure
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _pure

BACKEND = _impl.BACKEND_NAME

conv2d_forward = _pure.conv2d_forward
conv2d_lrp_epsilon = _pure.conv2d_lrp_epsilon
conv2d_lrp_alphabeta = _pure.conv2d_lrp_alphabeta
maxpool2d_forward = _impl.maxpool2d_forward
quickshift_density = _impl.quickshift_density
quickshift_link = _impl.quickshift_link
cd_nnlasso = _impl.cd_nnlasso
