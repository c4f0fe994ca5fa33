"""Dense complex linear algebra and structured-matrix constructors.

Everything downstream (channel synthesis, the SDP solver, subspace frequency
extraction, Fisher-information assembly) is written against this small
surface.  All functions are pure; arrays are never modified in place.
"""

import numpy as np
import scipy.linalg

from .exceptions import DimensionError, StructureError
from .validation import as_complex_matrix, as_complex_vector, check_hermitian

__all__ = [
    "toeplitz_from_generator",
    "diagonal_averages",
    "kron",
    "khatri_rao",
    "vec",
    "unvec",
    "pinv",
    "svd",
    "eig_hermitian",
]

#: imaginary part allowed on a Hermitian-Toeplitz leading element
_LEADING_IMAG_TOL = 1e-12


def toeplitz_from_generator(gen):
    """Materialize the Hermitian Toeplitz matrix whose first row is ``gen``.

    Entry (i, j) equals ``gen[j - i]`` above the diagonal and
    ``conj(gen[i - j])`` below it, so the result depends only on j - i and
    equals its own conjugate transpose.  ``gen[0]`` must be (numerically)
    real.
    """
    g = as_complex_vector(gen, "gen")
    if g.size == 0:
        raise DimensionError("gen must be nonempty")
    if abs(g[0].imag) > _LEADING_IMAG_TOL:
        raise StructureError(
            f"leading generator element must be real, got imag={g[0].imag:g}"
        )
    g = g.copy()
    g[0] = g[0].real
    return scipy.linalg.toeplitz(np.conj(g), g)


def diagonal_averages(a):
    """Average each superdiagonal of a square matrix into a generator.

    Adjoint-like inverse of :func:`toeplitz_from_generator`: for Hermitian
    input, ``toeplitz_from_generator(diagonal_averages(a))`` is the closest
    Hermitian Toeplitz matrix to ``a`` in Frobenius norm.  Entry ``k`` of the
    result is the mean of the k-th superdiagonal.
    """
    a = as_complex_matrix(a, "a")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"a must be square, got {a.shape}")
    return np.array([np.trace(a, offset=k) / (n - k) for k in range(n)])


def kron(a, b):
    """Kronecker product."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def khatri_rao(a, b):
    """Column-wise Kronecker product; requires equal column counts."""
    a = as_complex_matrix(a, "a")
    b = as_complex_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"column counts must match, got {a.shape[1]} and {b.shape[1]}"
        )
    return scipy.linalg.khatri_rao(a, b)


def vec(a):
    """Column-major vectorization, so that vec(A X B) = (B^T kron A) vec(X)."""
    return np.asarray(a, dtype=complex).ravel(order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    v = as_complex_vector(v, "v")
    if v.size != rows * cols:
        raise DimensionError(f"cannot reshape length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


def pinv(a, rcond=1e-12):
    """Moore-Penrose inverse (rank-deficient inputs allowed)."""
    return np.linalg.pinv(as_complex_matrix(a, "a"), rcond=rcond)


def _fix_vector_phases(u, companion=None, tol=1e-12):
    # Rotate each column so its first significantly nonzero entry is
    # real-positive; the companion (paired singular vectors) gets the same
    # rotation to preserve the factorization.
    u = u.copy()
    companion = None if companion is None else companion.copy()
    for k in range(u.shape[1]):
        col = u[:, k]
        idx = np.flatnonzero(np.abs(col) > tol * max(1.0, np.abs(col).max()))
        if idx.size == 0:
            continue
        rot = np.exp(-1j * np.angle(col[idx[0]]))
        u[:, k] = col * rot
        if companion is not None:
            companion[:, k] = companion[:, k] * rot
    return u if companion is None else (u, companion)


def svd(a):
    """SVD with descending singular values and a deterministic sign convention.

    Returns ``(u, s, v)`` with ``a = u @ diag(s) @ v.conj().T``.  The first
    nonzero entry of each left-singular vector is made real-positive (the
    paired right vector is rotated identically), so repeated runs produce
    bit-identical factors.
    """
    a = as_complex_matrix(a, "a")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    v = vh.conj().T
    u, v = _fix_vector_phases(u, v)
    return u, s, v


def eig_hermitian(a, tol=1e-9):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Raises :class:`StructureError` when the input is not Hermitian to
    ``tol`` (relative).  Eigenvector phases follow the same convention as
    :func:`svd`.
    """
    a = check_hermitian(a, "a", tol=tol)
    w, q = np.linalg.eigh(a)
    order = np.argsort(w)[::-1]
    w = w[order]
    q = _fix_vector_phases(q[:, order])
    return w, q
