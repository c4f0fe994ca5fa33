"""Fisher information and estimation lower bounds for both recovery stages.

The vectorized noiseless observation of either stage is a linear combination
of Kronecker-propagated steering vectors, one term per path, so the Fisher
information over the real parameter vector

    (aod_1..aod_L, aoa_1..aoa_L, Re gain_1..Re gain_L, Im gain_1..Im gain_L)

is (2/sigma^2) * Re(Jmu^H Jmu) with Jmu the complex Jacobian of that mean.
Complex gains are treated as two real parameters; the reported gain bound is
the sum of the real and imaginary slots, matching a complex-modulus MSE.
A finite-difference Jacobian is provided for self-verification.
"""

from dataclasses import dataclass

import numpy as np

from .channel import steering, steering_derivative
from .exceptions import DimensionError

__all__ = [
    "FimReport",
    "stage1_mean",
    "stage1_jacobian",
    "fim_stage1",
    "stage2_mean",
    "stage2_jacobian",
    "fim_stage2",
    "angle_bounds",
    "gain_bounds",
    "fd_jacobian",
    "fim_from_jacobian",
]

_SINGULAR_COND = 1e12


@dataclass(frozen=True)
class FimReport:
    """Fisher information matrix, its inverse's diagonal, and slot labels.

    ``crlb_diag[i]`` lower-bounds the variance of an unbiased estimator of
    the parameter named by ``labels[i]`` (radians^2 for angles).  When the
    matrix is numerically singular the pseudo-inverse is used and
    ``singular`` is set.
    """

    fim: np.ndarray
    crlb_diag: np.ndarray
    labels: tuple
    singular: bool

    @property
    def n_paths(self):
        return len(self.labels) // 4


def _propagated_columns(left, right, aod, aoa, scale, derivative=None):
    # scale * kron(right^T @ conj(a_tx), left @ a_rx) for each path, with the
    # tx or rx steering optionally swapped for its index-weighted derivative.
    n_rx = left.shape[1]
    n_tx = right.shape[0]
    cols = []
    for t, p in zip(aod, aoa):
        a_tx = steering(n_tx, np.sin(t))
        a_rx = steering(n_rx, np.sin(p))
        if derivative == "aod":
            a_tx = steering_derivative(n_tx, np.sin(t))
        elif derivative == "aoa":
            a_rx = steering_derivative(n_rx, np.sin(p))
        cols.append(scale * np.kron(right.T @ a_tx.conj(), left @ a_rx))
    return np.stack(cols, axis=1)


def _mean(left, right, aod, aoa, gains, scale):
    return _propagated_columns(left, right, aod, aoa, scale) @ np.asarray(gains, dtype=complex)


def _jacobian(left, right, aod, aoa, gains, scale):
    aod = np.atleast_1d(np.asarray(aod, dtype=float))
    aoa = np.atleast_1d(np.asarray(aoa, dtype=float))
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if not (aod.size == aoa.size == gains.size):
        raise DimensionError("aod, aoa and gains must have equal length")

    base = _propagated_columns(left, right, aod, aoa, scale)
    d_tx = _propagated_columns(left, right, aod, aoa, scale, derivative="aod")
    d_rx = _propagated_columns(left, right, aod, aoa, scale, derivative="aoa")

    # Differentiating the conjugated departure steering flips the sign of the
    # chain-rule factor; the arrival side keeps it positive.
    cols_aod = d_tx * (gains * (-1j * np.pi * np.cos(aod)))
    cols_aoa = d_rx * (gains * (1j * np.pi * np.cos(aoa)))
    cols_re = base
    cols_im = 1j * base
    return np.hstack([cols_aod, cols_aoa, cols_re, cols_im])


def fim_from_jacobian(jacobian, sigma2):
    """Real Fisher information (2/sigma^2) * Re(J^H J) from a complex Jacobian."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return (2.0 / sigma2) * np.real(jacobian.conj().T @ jacobian)


def _labels(n_paths):
    return tuple(
        [f"aod_{l}" for l in range(n_paths)]
        + [f"aoa_{l}" for l in range(n_paths)]
        + [f"gain_re_{l}" for l in range(n_paths)]
        + [f"gain_im_{l}" for l in range(n_paths)]
    )


def _report(jacobian, sigma2, n_paths):
    fim = fim_from_jacobian(jacobian, sigma2)
    singular = np.linalg.cond(fim) > _SINGULAR_COND
    if singular:
        inv = np.linalg.pinv(fim)
    else:
        inv = np.linalg.inv(fim)
    return FimReport(
        fim=fim, crlb_diag=np.diag(inv).copy(), labels=_labels(n_paths), singular=singular
    )


def stage1_mean(aod, aoa, gains, pilots, selection, scale):
    """Noiseless vectorized active-element observation for given parameters."""
    return _mean(selection, pilots, np.atleast_1d(aod), np.atleast_1d(aoa),
                 np.atleast_1d(gains), scale)


def stage1_jacobian(aod, aoa, gains, pilots, selection, scale):
    """Analytic complex Jacobian of :func:`stage1_mean` over the real parameters."""
    return _jacobian(selection, pilots, aod, aoa, gains, scale)


def fim_stage1(aod, aoa, gains, pilots, selection, scale, sigma2):
    """Fisher information report for the first-hop parameters."""
    n_paths = np.atleast_1d(aod).size
    return _report(stage1_jacobian(aod, aoa, gains, pilots, selection, scale),
                   sigma2, n_paths)


def stage2_mean(aod, aoa, gains, reflected_pilots, combiner, scale):
    """Noiseless vectorized base-station observation for given parameters.

    ``reflected_pilots`` must be built from the true first-hop channel and
    the actual phase schedule (the bound treats the first hop as known).
    """
    return _mean(combiner.conj().T, reflected_pilots, np.atleast_1d(aod),
                 np.atleast_1d(aoa), np.atleast_1d(gains), scale)


def stage2_jacobian(aod, aoa, gains, reflected_pilots, combiner, scale):
    """Analytic complex Jacobian of :func:`stage2_mean` over the real parameters."""
    return _jacobian(combiner.conj().T, reflected_pilots, aod, aoa, gains, scale)


def fim_stage2(aod, aoa, gains, reflected_pilots, combiner, scale, sigma2):
    """Fisher information report for the second-hop parameters."""
    n_paths = np.atleast_1d(aod).size
    return _report(
        stage2_jacobian(aod, aoa, gains, reflected_pilots, combiner, scale),
        sigma2, n_paths,
    )


def angle_bounds(report, side):
    """Per-path variance bounds for one angle class, ``side`` in {"aod", "aoa"}."""
    if side not in ("aod", "aoa"):
        raise ValueError("side must be 'aod' or 'aoa'")
    idx = [i for i, name in enumerate(report.labels) if name.startswith(side + "_")]
    return report.crlb_diag[idx]


def gain_bounds(report):
    """Per-path complex-gain bounds: real-slot plus imaginary-slot variance."""
    re_idx = [i for i, name in enumerate(report.labels) if name.startswith("gain_re_")]
    im_idx = [i for i, name in enumerate(report.labels) if name.startswith("gain_im_")]
    return report.crlb_diag[re_idx] + report.crlb_diag[im_idx]


def fd_jacobian(mean_fn, aod, aoa, gains, step=1e-6):
    """Central-difference Jacobian of a mean function over the real parameters.

    ``mean_fn(aod, aoa, gains)`` must return the complex mean vector.  Used
    to verify the analytic Jacobians; the column order matches
    :func:`stage1_jacobian`.
    """
    aod = np.atleast_1d(np.asarray(aod, dtype=float))
    aoa = np.atleast_1d(np.asarray(aoa, dtype=float))
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    n_paths = aod.size
    cols = []

    def diff(plus_args, minus_args):
        return (mean_fn(*plus_args) - mean_fn(*minus_args)) / (2.0 * step)

    for l in range(n_paths):
        e = np.zeros(n_paths)
        e[l] = step
        cols.append(diff((aod + e, aoa, gains), (aod - e, aoa, gains)))
    for l in range(n_paths):
        e = np.zeros(n_paths)
        e[l] = step
        cols.append(diff((aod, aoa + e, gains), (aod, aoa - e, gains)))
    for l in range(n_paths):
        e = np.zeros(n_paths, dtype=complex)
        e[l] = step
        cols.append(diff((aod, aoa, gains + e), (aod, aoa, gains - e)))
    for l in range(n_paths):
        e = np.zeros(n_paths, dtype=complex)
        e[l] = 1j * step
        cols.append(diff((aod, aoa, gains + e), (aod, aoa, gains - e)))
    return np.stack(cols, axis=1)
