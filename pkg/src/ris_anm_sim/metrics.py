"""Mean-square-error and effective spectral-efficiency metrics.

MSE for a parameter class is the trial average of the squared error norm
divided by the path count (radians^2 for angles, squared modulus for complex
gains).  Effective spectral efficiency discounts the per-trial rate by the
fraction of the coherence interval spent on training, with the channel
estimation error entering the SINR denominator through its variance across
trials.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError

__all__ = [
    "TrialRecord",
    "squared_error",
    "mse",
    "sine_mse",
    "effective_se",
]


@dataclass(frozen=True)
class TrialRecord:
    """Link-scale quantities of one trial needed for the rate metric.

    ``signal_power``: |w^H H_hat f|^2 with the cascaded channel estimate at
    physical scale (transmit amplitude and route attenuation applied).
    ``error_scalar``: w^H H_err f at the same scale, H_err the difference
    between the true phase-configured cascade and its estimate.
    """

    signal_power: float
    error_scalar: complex


def squared_error(estimate, truth):
    """Squared error norm divided by the parameter count, for one trial."""
    estimate = np.atleast_1d(np.asarray(estimate))
    truth = np.atleast_1d(np.asarray(truth))
    if estimate.shape != truth.shape:
        raise DimensionError("estimate and truth must have equal shape")
    return float(np.sum(np.abs(truth - estimate) ** 2) / truth.size)


def mse(estimates, truths):
    """Trial-averaged squared error; inputs are per-trial aligned sequences."""
    estimates = list(estimates)
    truths = list(truths)
    if len(estimates) != len(truths):
        raise DimensionError("need one truth per estimate")
    if not estimates:
        raise ConfigurationError("need at least one trial")
    return float(np.mean([squared_error(e, t) for e, t in zip(estimates, truths)]))


def sine_mse(estimates, truths):
    """Same as :func:`mse` but in the sine (spatial-frequency) domain."""
    return mse([np.sin(e) for e in estimates], [np.sin(t) for t in truths])


def effective_se(trials, sigma2, t_c, t_h):
    """Average effective spectral efficiency in bits/s/Hz over trials.

    R = (t_c - t_h)/t_c * mean over trials of
        log2(1 + signal_power / (sigma2 + var(error_scalar))),
    where the variance is the population variance of the complex error
    scalar across the supplied trials.
    """
    trials = list(trials)
    if not trials:
        raise ConfigurationError("need at least one trial")
    if t_h >= t_c:
        raise ConfigurationError(f"training t_h={t_h} must be shorter than t_c={t_c}")
    errors = np.array([t.error_scalar for t in trials], dtype=complex)
    err_var = float(np.var(errors))
    prefactor = (t_c - t_h) / t_c
    rates = [np.log2(1.0 + t.signal_power / (sigma2 + err_var)) for t in trials]
    return float(prefactor * np.mean(rates))
