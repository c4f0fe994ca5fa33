"""Input validation helpers.

Small checks shared by the library surface, in the spirit of scikit-learn's
``check_array``: normalize inputs to complex ndarrays and fail early with a
clear message instead of deep inside a linear-algebra call.
"""

import numpy as np

from .exceptions import DimensionError, StructureError

__all__ = [
    "as_complex_matrix",
    "as_complex_vector",
    "check_rng",
    "check_square",
    "check_hermitian",
    "check_shape",
]


def as_complex_matrix(a, name="a"):
    """Coerce to a 2-D complex ndarray."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got ndim={arr.ndim}")
    return arr


def as_complex_vector(a, name="a"):
    """Coerce to a 1-D complex ndarray."""
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got ndim={arr.ndim}")
    return arr


def check_rng(rng):
    """Require an explicit numpy Generator (no hidden global state)."""
    if not isinstance(rng, np.random.Generator):
        raise TypeError(
            "rng must be a numpy.random.Generator; create one with "
            "numpy.random.default_rng(seed)"
        )
    return rng


def check_square(a, name="a"):
    a = as_complex_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def check_hermitian(a, name="a", tol=1e-9):
    """Require ``a == a.conj().T`` up to ``tol`` relative to its norm."""
    a = check_square(a, name)
    scale = max(1.0, np.linalg.norm(a))
    if np.linalg.norm(a - a.conj().T) > tol * scale:
        raise StructureError(f"{name} is not Hermitian to tolerance {tol}")
    return a


def check_shape(a, shape, name="a"):
    a = np.asarray(a)
    if a.shape != tuple(shape):
        raise DimensionError(f"{name} must have shape {tuple(shape)}, got {a.shape}")
    return a
