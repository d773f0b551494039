"""Backend selection for the feedforward critic kernels.

The compiled Cython extension is used when it was built; otherwise the numpy
reference implementation takes over with identical semantics. Set the
environment variable ``POLARGRAD_PURE_PYTHON=1`` to force the fallback.
"""

import os

if os.environ.get("POLARGRAD_PURE_PYTHON"):
    from . import _mlpref as _backend

    BACKEND = "python"
else:
    try:
        from . import _fastmlp as _backend

        BACKEND = "cython"
    except ImportError:
        from . import _mlpref as _backend

        BACKEND = "python"

forward = _backend.forward
forward_cached = _backend.forward_cached
param_grads = _backend.param_grads
sgd_mse_step = _backend.sgd_mse_step
