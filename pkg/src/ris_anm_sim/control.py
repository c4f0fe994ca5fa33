"""Reflector phase design and terminal beamforming from estimated parameters.

The reflector phase vector is chosen to maximize the Frobenius power of the
coupling between the two hops.  That power is a Hermitian quadratic form in
the phase vector, so the design reduces to the unit-modulus projection of
the top eigenvector of a small Gram matrix built from the estimated angle
differences and gain products.
"""

from dataclasses import dataclass

import numpy as np

from .channel import steering
from .exceptions import DegenerateInputError, DimensionError
from .numerics import eig_hermitian, svd

__all__ = [
    "PhaseDesign",
    "phase_design_matrix",
    "coupling_power",
    "design_phases",
    "design_beamformers",
]


@dataclass(frozen=True)
class PhaseDesign:
    """Designed unit-modulus phase vector and the coupling power it achieves."""

    omega: np.ndarray
    objective: float


def phase_design_matrix(n_r, delta_vec, rho_prod):
    """Steering-times-gain matrix whose Gram drives the phase design.

    Column i is steering(n_r, sin(delta_vec[i])) * rho_prod[i]; evaluating
    the steering vector at the spatial frequency sin of the angle difference
    makes the quadratic form below equal the coupling-matrix power exactly.
    """
    delta_vec = np.atleast_1d(np.asarray(delta_vec, dtype=float)).ravel()
    rho_prod = np.atleast_1d(np.asarray(rho_prod, dtype=complex)).ravel()
    if delta_vec.size != rho_prod.size:
        raise DimensionError("delta_vec and rho_prod must have equal length")
    cols = [steering(n_r, np.sin(d)) * r for d, r in zip(delta_vec, rho_prod)]
    return np.stack(cols, axis=1)


def coupling_power(omega, delta_vec, rho_prod):
    """Total coupling power sum_i |rho_prod[i] * omega^T steering(sin(delta_i))|^2."""
    omega = np.asarray(omega, dtype=complex)
    c = phase_design_matrix(omega.size, delta_vec, rho_prod)
    return float(np.sum(np.abs(omega @ c) ** 2))


def design_phases(n_r, delta_vec, rho_prod):
    """Unit-modulus phase vector maximizing the coupling power.

    The power equals omega^H conj(G) omega with G the Gram of
    :func:`phase_design_matrix`, so the unconstrained maximizer is the
    conjugate of G's top eigenvector; it is projected onto unit modulus by
    keeping only its phases.  The global phase is fixed by making the first
    entry real-positive.  Scaling all gains by a positive constant leaves
    the design unchanged.
    """
    rho_prod = np.atleast_1d(np.asarray(rho_prod, dtype=complex)).ravel()
    if not np.any(rho_prod != 0):
        raise DegenerateInputError("all gain products are zero; no phase design exists")
    c = phase_design_matrix(n_r, delta_vec, rho_prod)
    _, vecs = eig_hermitian(c @ c.conj().T)
    omega = np.exp(-1j * np.angle(vecs[:, 0]))
    omega = omega * np.exp(-1j * np.angle(omega[0]))
    return PhaseDesign(omega=omega, objective=coupling_power(omega, delta_vec, rho_prod))


def design_beamformers(h_cascaded):
    """Leading singular-vector beamformers of the (estimated) cascaded channel.

    Returns ``(w, f)``: unit-norm receive and transmit vectors with
    ``|w^H H f|`` equal to the channel's largest singular value.
    """
    h = np.asarray(h_cascaded, dtype=complex)
    if not np.any(h != 0):
        raise DegenerateInputError("cascaded channel is zero; beamformers undefined")
    u, s, v = svd(h)
    return u[:, 0], v[:, 0]
