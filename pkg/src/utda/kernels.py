"""Hot-kernel dispatch: compiled ``_kernels`` when importable, NumPy otherwise.

Set ``UTDA_PURE_PYTHON=1`` to force the NumPy fallback.
"""

import os

import numpy as np

from . import _fallback

_compiled = None
if os.environ.get("UTDA_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "numpy"


def available_backends():
    return ["cython", "numpy"] if _compiled is not None else ["numpy"]


def backend_module(name=None):
    name = name or BACKEND
    if name == "numpy":
        return _fallback
    if name == "cython" and _compiled is not None:
        return _compiled
    raise ValueError(f"kernel backend {name!r} is not available")


def soft_threshold(z, beta, backend=None):
    z = np.asarray(z, dtype=np.float64)
    mod = backend_module(backend)
    if mod is _fallback:
        return _fallback.soft_threshold(z, beta)
    shape = z.shape
    z2 = z.reshape(-1, shape[-1]) if z.ndim > 1 else z.reshape(1, -1)
    b2 = np.broadcast_to(np.asarray(beta, dtype=np.float64), shape).reshape(z2.shape)
    return mod.soft_threshold(z2, b2).reshape(shape)


def topl_support(v, L, backend=None):
    v = np.ascontiguousarray(v, dtype=np.float64)
    L = np.ascontiguousarray(L, dtype=np.int64)
    return backend_module(backend).topl_support(v, L)


def pr_newton(A, u, y, support, backend=None):
    A = np.ascontiguousarray(A, dtype=np.float64)
    return backend_module(backend).pr_newton(
        A,
        np.asarray(u, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
        np.ascontiguousarray(support, dtype=np.int64),
    )
