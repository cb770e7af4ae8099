"""Backend selection for the hot loops.

The compiled Cython module is used when it imports cleanly; setting
``PDVOICE_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("PDVOICE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def get_backend(name=None):
    """Return the kernel module for ``name`` ('cython', 'python' or the default)."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def relief_weights(Z, codes, samples, k, priors, backend=None):
    return get_backend(backend).relief_weights(Z, codes, samples, k, priors)


def smo_solve(K, y, C, eps, tol, max_iter, patience, record=False, backend=None):
    import numpy as np

    impl = get_backend(backend)
    if impl is not _pykernels and not isinstance(K, np.ndarray):
        impl = _pykernels  # streamed kernel columns only work in the fallback
    return impl.smo_solve(K, y, C, eps, tol, max_iter, patience, record)


def lstm_cell_forward(A, c_prev, gates, c_out, h_out, backend=None):
    # numpy's SIMD tanh beats a compiled scalar loop here, so there is no
    # compiled forward cell; ``backend`` is accepted for a uniform signature
    _pykernels.lstm_cell_forward(A, c_prev, gates, c_out, h_out)


def lstm_cell_backward(dh, dc, gates, c_prev, dA, backend=None):
    get_backend(backend).lstm_cell_backward(dh, dc, gates, c_prev, dA)


def adam_inplace(theta, grad, m, v, t, lr, beta1, beta2, eps, backend=None):
    get_backend(backend).adam_inplace(theta, grad, m, v, int(t), lr, beta1, beta2, eps)
