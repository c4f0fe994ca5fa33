"""Geometric mmWave channel synthesis for half-wavelength uniform linear arrays.

A propagation channel is a sum of L rank-one outer products of steering
vectors, one per path, weighted by complex path gains.  Spatial frequency
means sin(angle): the per-element phase progression rate of the array
response.  Scenes are drawn with a guaranteed minimum spatial-frequency
separation so that gridless recovery is well posed.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError
from .validation import check_rng

__all__ = [
    "SPEED_OF_LIGHT",
    "PathSet",
    "Topology",
    "PathLossModel",
    "steering",
    "steering_derivative",
    "synth_channel",
    "cascade",
    "effective_channel",
    "sample_scene",
    "path_loss",
]

SPEED_OF_LIGHT = 3.0e8  # m/s


@dataclass(frozen=True)
class PathSet:
    """Per-hop path parameters: departure/arrival angles (rad) and complex gains."""

    aod: np.ndarray
    aoa: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "aod", np.atleast_1d(np.asarray(self.aod, dtype=float)))
        object.__setattr__(self, "aoa", np.atleast_1d(np.asarray(self.aoa, dtype=float)))
        object.__setattr__(self, "gains", np.atleast_1d(np.asarray(self.gains, dtype=complex)))
        if not (self.aod.shape == self.aoa.shape == self.gains.shape):
            raise DimensionError("aod, aoa and gains must have equal length")
        for name in ("aod", "aoa"):
            ang = getattr(self, name)
            if np.any(ang < 0) or np.any(ang >= np.pi):
                raise ConfigurationError(f"{name} angles must lie in [0, pi)")

    @property
    def n_paths(self):
        return self.aod.size


@dataclass(frozen=True)
class Topology:
    """Planar geometry: terminal separation and the reflector's offsets, meters."""

    d_t: float
    d_x: float
    d_y: float

    @property
    def d1(self):
        """Mobile-to-reflector distance."""
        return float(np.hypot(self.d_x, self.d_y))

    @property
    def d2(self):
        """Reflector-to-base distance."""
        return float(np.hypot(self.d_t - self.d_x, self.d_y))

    def __post_init__(self):
        if self.d1 <= 0 or self.d2 <= 0:
            raise ConfigurationError("both hop distances must be positive")


@dataclass(frozen=True)
class PathLossModel:
    """Power-law path loss: gain beta0 * (d0 / d)**gamma relative to d0."""

    d0: float = 1.0
    gamma: float = 3.0
    fc: float = 28e9

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.fc

    @property
    def beta0(self):
        """Free-space power gain at the reference distance."""
        return (self.wavelength / (4.0 * np.pi * self.d0)) ** 2


def steering(n, f):
    """Array response of an n-element half-wavelength ULA at spatial frequency f.

    Entry k (k = 0..n-1) is exp(j*pi*k*f).
    """
    if n < 1:
        raise ConfigurationError("element count must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * f)


def steering_derivative(n, f):
    """Element-index-weighted steering sequence: entry k is k*exp(j*pi*k*f).

    This is the frequency-direction part of the array-response gradient;
    differentiating steering(n, sin(theta)) w.r.t. theta multiplies it by
    j*pi*cos(theta).
    """
    if n < 1:
        raise ConfigurationError("element count must be >= 1")
    k = np.arange(n)
    return k * np.exp(1j * np.pi * k * f)


def synth_channel(paths, n_rx, n_tx):
    """Multipath channel matrix A(aoa) diag(gains) A(aod)^H, shape (n_rx, n_tx)."""
    a_rx = np.stack([steering(n_rx, np.sin(a)) for a in paths.aoa], axis=1)
    a_tx = np.stack([steering(n_tx, np.sin(a)) for a in paths.aod], axis=1)
    return (a_rx * paths.gains) @ a_tx.conj().T


def cascade(h_rb, omega, h_mr):
    """End-to-end two-hop channel h_rb @ omega @ h_mr with a diagonal reflector."""
    h_rb = np.asarray(h_rb, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    h_mr = np.asarray(h_mr, dtype=complex)
    if omega.ndim == 1:
        omega = np.diag(omega)
    if h_rb.shape[1] != omega.shape[0] or omega.shape[1] != h_mr.shape[0]:
        raise DimensionError(
            f"incompatible cascade dims {h_rb.shape} x {omega.shape} x {h_mr.shape}"
        )
    return h_rb @ omega @ h_mr


def effective_channel(rho_rb, theta_rb, omega, phi_mr, rho_mr):
    """Reflector-coupling matrix between path pairs.

    Entry (l, p) is rho_rb[l] * omega^T steering(sin(phi_mr[p]) - sin(theta_rb[l]))
    * rho_mr[p]: the composite gain the reflector phase vector applies to the
    pair (outgoing path l, incoming path p).  Shape (len(rho_rb), len(rho_mr)).
    """
    rho_rb = np.atleast_1d(np.asarray(rho_rb, dtype=complex))
    rho_mr = np.atleast_1d(np.asarray(rho_mr, dtype=complex))
    omega = np.asarray(omega, dtype=complex)
    n_r = omega.size
    a_out = np.stack([steering(n_r, np.sin(t)) for t in np.atleast_1d(theta_rb)], axis=1)
    a_in = np.stack([steering(n_r, np.sin(p)) for p in np.atleast_1d(phi_mr)], axis=1)
    return (a_out.conj().T * rho_rb[:, None]) @ np.diag(omega) @ (a_in * rho_mr)


def sample_scene(rng, n_paths, n_tx, n_rx, min_sep_tx=None, min_sep_rx=None,
                 max_tries=10000):
    """Draw a random scene with guaranteed spatial-frequency separation.

    Angles are drawn uniformly on [0, pi/2) and rejected until the sines on
    each side are pairwise separated by at least 4/N of the array they
    address (overridable).  Gains are i.i.d. circular complex normal with
    unit variance.

    The upper angle limit pi/2 keeps sin(angle) injective on the support, so
    an angle is recoverable from its spatial frequency; sines still cover
    the full frequency support [0, 1).
    """
    check_rng(rng)
    if min_sep_tx is None:
        min_sep_tx = 4.0 / n_tx
    if min_sep_rx is None:
        min_sep_rx = 4.0 / n_rx
    if n_paths * max(min_sep_tx, min_sep_rx) >= 1.0:
        raise ConfigurationError(
            f"cannot separate {n_paths} frequencies by "
            f"{max(min_sep_tx, min_sep_rx):g} inside [0, 1)"
        )

    def draw(min_sep):
        for _ in range(max_tries):
            ang = rng.uniform(0.0, np.pi / 2.0, size=n_paths)
            s = np.sort(np.sin(ang))
            if n_paths == 1 or np.min(np.diff(s)) >= min_sep:
                return ang
        raise ConfigurationError("rejection sampling failed to find separated angles")

    aod = draw(min_sep_tx)
    aoa = draw(min_sep_rx)
    gains = (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths)) / np.sqrt(2.0)
    return PathSet(aod=aod, aoa=aoa, gains=gains)


def path_loss(topology, model):
    """Amplitude attenuation factors for the two sounding routes.

    Returns ``(beta1, beta2)`` where ``beta1**2`` is the power gain of the
    single-hop mobile-to-reflector route, beta0*(d0/d1)**gamma, and
    ``beta2**2`` that of the full reflected route, beta0*(d0/(d1*d2))**gamma.
    Both shrink monotonically with distance.
    """
    b0, d0, g = model.beta0, model.d0, model.gamma
    power_1 = b0 * (d0 / topology.d1) ** g
    power_2 = b0 * (d0 / (topology.d1 * topology.d2)) ** g
    return float(np.sqrt(power_1)), float(np.sqrt(power_2))
