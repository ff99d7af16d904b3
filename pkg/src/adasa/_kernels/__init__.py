"""Kernel backend selection.

Imports the compiled extension when it is built, otherwise the numpy
fallback.  ADASA_BACKEND=python forces the fallback; ADASA_BACKEND=compiled
makes a missing extension an error instead of a silent downgrade.  The two
implementations are bit-compatible, so the choice affects speed only.
"""

from __future__ import annotations

import os

from . import _numpy as _python_impl

PRECOND_IDENTITY = _python_impl.PRECOND_IDENTITY
PRECOND_ADAGRAD = _python_impl.PRECOND_ADAGRAD
PRECOND_RMSPROP = _python_impl.PRECOND_RMSPROP
BIAS_FIXED = _python_impl.BIAS_FIXED
BIAS_TOWARD_GRADIENT = _python_impl.BIAS_TOWARD_GRADIENT

_requested = os.environ.get("ADASA_BACKEND", "auto")
if _requested not in ("auto", "compiled", "python"):
    raise ImportError(f"ADASA_BACKEND must be auto, compiled, or python; got {_requested!r}")

_compiled_impl = None
if _requested in ("auto", "compiled"):
    try:
        from . import _fast as _compiled_impl
    except ImportError:
        if _requested == "compiled":
            raise

if _compiled_impl is None:
    BACKEND = "python"
    _impl = _python_impl
else:
    BACKEND = "compiled"
    _impl = _compiled_impl

asa_quadratic_chunk = _impl.asa_quadratic_chunk
amsgrad_quadratic_chunk = _impl.amsgrad_quadratic_chunk


def load_backend(name: str):
    """Switch the active implementation; tests and the benchmark use this.

    Rebinds the chunk functions this module exports, so code that calls
    through `_kernels.asa_quadratic_chunk` (the driver does) picks up the
    choice immediately.  Returns the module now active.
    """
    global BACKEND, asa_quadratic_chunk, amsgrad_quadratic_chunk
    if name == "auto":
        impl = _compiled_impl if _compiled_impl is not None else _python_impl
    elif name == "python":
        impl = _python_impl
    elif name == "compiled":
        if _compiled_impl is None:
            raise ImportError("compiled kernel extension is not built")
        impl = _compiled_impl
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = "compiled" if impl is _compiled_impl else "python"
    asa_quadratic_chunk = impl.asa_quadratic_chunk
    amsgrad_quadratic_chunk = impl.amsgrad_quadratic_chunk
    return impl
