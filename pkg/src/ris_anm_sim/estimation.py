"""Two-stage parameter recovery from hybrid sounding records.

Stage one recovers the mobile-to-reflector hop from the active-element
observations; stage two reuses that estimate to rebuild the reflected pilot
matrix and recovers the reflector-to-base hop from the combined base-station
observations.  Each stage solves an atomic-norm SDP, reads path frequencies
off the Toeplitz certificates with root-MUSIC, and refits the complex path
gains by least squares.

Path count and path order are treated as known prior information; in
evaluation mode the estimates are aligned to the ground truth by the
error-minimizing permutation, one per angle side.
"""

import warnings as _warnings
from dataclasses import dataclass

import numpy as np
import scipy.optimize
from sklearn.base import BaseEstimator

from . import anm
from .channel import PathSet, steering, synth_channel
from .exceptions import (
    ConvergenceError,
    DimensionError,
    IllConditionedError,
    ModelOrderError,
)
from .numerics import vec
from .validation import check_hermitian

__all__ = [
    "EstimationResult",
    "freqs_from_toeplitz",
    "pair_and_order",
    "ls_gains_stage1",
    "ls_gains_stage2",
    "build_reflected_pilots",
    "angle_differences",
    "gain_products",
    "two_stage_estimate",
    "TwoStageChannelEstimator",
]

#: selected roots farther than this from the unit circle flag a degenerate certificate
DEGENERATE_ROOT_TOL = 0.2

#: regressor condition number above which gain least squares refuses to answer
_LS_COND_LIMIT = 1e10


@dataclass(frozen=True)
class EstimationResult:
    """Everything the two-stage pipeline recovers for one sounding record.

    Angles are radians in [0, pi); ``delta`` holds the reflector-side angle
    differences, shape (len(theta_rb), len(phi_mr)), and ``rho_prod`` the
    per-pair gain products ``kron(rho_rb, rho_mr)`` whose C-order flattening
    aligns index-by-index with ``delta.ravel()``.
    """

    h_mr_hat: np.ndarray
    h_rb_hat: np.ndarray
    theta_mr: np.ndarray
    phi_mr: np.ndarray
    rho_mr: np.ndarray
    theta_rb: np.ndarray
    phi_rb: np.ndarray
    rho_rb: np.ndarray
    delta: np.ndarray
    rho_prod: np.ndarray
    stage1: anm.AnmSolution
    stage2: anm.AnmSolution
    warnings: tuple = ()


def freqs_from_toeplitz(t_mat, order, root_tol=DEGENERATE_ROOT_TOL):
    """Extract spatial frequencies from a Hermitian Toeplitz certificate.

    Root-MUSIC: the polynomial built from the noise-subspace projector's
    diagonal sums vanishes at z = exp(j*pi*f) for every signal frequency f.
    Among roots inside the unit disc the ``order`` closest to the circle are
    kept, their phases mapped to frequencies in [0, 1), ascending.

    Returns ``(freqs, degenerate)``; ``degenerate`` is set when any selected
    root sits farther than ``root_tol`` from the unit circle (no usable
    signal-subspace gap, e.g. a white spectrum).
    """
    t_mat = check_hermitian(t_mat, "t_mat", tol=1e-8)
    n = t_mat.shape[0]
    if order >= n:
        raise ModelOrderError(f"order {order} leaves no noise subspace for size {n}")
    if order < 1:
        raise ModelOrderError("order must be >= 1")

    eigval, eigvec = np.linalg.eigh(0.5 * (t_mat + t_mat.conj().T))
    noise = eigvec[:, : n - order]  # ascending order: smallest eigenvalues first
    proj = noise @ noise.conj().T

    coeffs = np.array([np.trace(proj, offset=k) for k in range(n - 1, -n, -1)])
    roots = np.roots(coeffs)

    inside = roots[np.abs(roots) < 1.0]
    candidates = inside if inside.size >= order else roots
    dist = np.abs(np.abs(candidates) - 1.0)
    picked = candidates[np.argsort(dist)[:order]]
    degenerate = bool(np.max(np.abs(np.abs(picked) - 1.0)) > root_tol)

    freqs = np.angle(picked) / np.pi
    freqs = np.mod(freqs, 2.0)
    freqs[freqs >= 1.5] -= 2.0  # wrap-around below zero rather than aliasing
    freqs = np.clip(freqs, 0.0, np.nextafter(1.0, 0.0))
    return np.sort(freqs), degenerate


def pair_and_order(est_f, est_g, truth=None):
    """Turn the two per-side frequency lists into aligned angle estimates.

    With ``truth`` (a :class:`PathSet`), each side is permuted to minimize
    its total absolute frequency error against the true sines (evaluation
    mode); without truth both sides are simply sorted ascending.  Returns
    ``(aod_angles, aoa_angles)`` in radians.
    """
    est_f = np.asarray(est_f, dtype=float)
    est_g = np.asarray(est_g, dtype=float)
    if est_f.size != est_g.size:
        raise DimensionError("frequency lists must have equal length")
    if truth is not None:
        if truth.n_paths != est_f.size:
            raise DimensionError("truth path count does not match estimates")
        est_f = _align(est_f, np.sin(truth.aod))
        est_g = _align(est_g, np.sin(truth.aoa))
    else:
        est_f = np.sort(est_f)
        est_g = np.sort(est_g)
    return _freq_to_angle(est_f), _freq_to_angle(est_g)


def _align(est, target):
    cost = np.abs(est[None, :] - target[:, None])
    _, perm = scipy.optimize.linear_sum_assignment(cost)
    return est[perm]


def _freq_to_angle(f):
    return np.arcsin(np.clip(f, 0.0, 1.0))


def _gain_regressor(left, right, aod, aoa, scale):
    # Column l is scale * vec(left @ a_rx(aoa_l) @ a_tx(aod_l)^H @ right),
    # assembled as a Kronecker product of the two propagated steering vectors.
    n_left = left.shape[1]
    n_right = right.shape[0]
    cols = []
    for t, p in zip(np.atleast_1d(aod), np.atleast_1d(aoa)):
        a_tx = steering(n_right, np.sin(t))
        a_rx = steering(n_left, np.sin(p))
        cols.append(scale * np.kron(right.T @ a_tx.conj(), left @ a_rx))
    return np.stack(cols, axis=1)


def _ls_gains(y_vec, regressor):
    if not np.any(y_vec):
        return np.zeros(regressor.shape[1], dtype=complex)
    sv = np.linalg.svd(regressor, compute_uv=False)
    if sv[0] == 0.0 or sv[0] / max(sv[-1], np.finfo(float).tiny) > _LS_COND_LIMIT:
        raise IllConditionedError(
            f"gain regressor condition number exceeds {_LS_COND_LIMIT:g}"
        )
    return np.linalg.lstsq(regressor, y_vec, rcond=None)[0]


def ls_gains_stage1(y_vec, pilots, selection, aod, aoa, scale):
    """Least-squares path gains of the first hop given its angle estimates."""
    return _ls_gains(y_vec, _gain_regressor(selection, pilots, aod, aoa, scale))


def ls_gains_stage2(y_vec, reflected_pilots, combiner, aod, aoa, scale):
    """Least-squares path gains of the second hop given its angle estimates."""
    return _ls_gains(
        y_vec, _gain_regressor(combiner.conj().T, reflected_pilots, aod, aoa, scale)
    )


def build_reflected_pilots(schedule, h_mr, pilots):
    """Stack the per-block reflector outputs Omega_k @ h_mr @ pilots horizontally."""
    h_mr = np.asarray(h_mr, dtype=complex)
    if h_mr.shape[0] != schedule.n_r:
        raise DimensionError("h_mr row count must match the schedule")
    base = h_mr @ np.asarray(pilots, dtype=complex)
    return np.hstack([schedule.phases[k][:, None] * base for k in range(schedule.n_blocks)])


def angle_differences(phi_mr, theta_rb, slack=1e-12):
    """Reflector-side composite angles asin(sin(phi_mr) - sin(theta_rb)).

    Entry (l, p) pairs outgoing path l with incoming path p, matching the
    C-order flattening of :func:`gain_products`.  Arguments drifting past
    [-1, 1] by at most ``slack`` are clamped silently, farther with a warning.
    """
    phi_mr = np.atleast_1d(np.asarray(phi_mr, dtype=float))
    theta_rb = np.atleast_1d(np.asarray(theta_rb, dtype=float))
    arg = np.sin(phi_mr)[None, :] - np.sin(theta_rb)[:, None]
    overshoot = np.maximum(np.abs(arg) - 1.0, 0.0).max()
    if overshoot > slack:
        _warnings.warn(
            f"angle-difference argument exceeded [-1, 1] by {overshoot:.3e}; clamped",
            RuntimeWarning,
            stacklevel=2,
        )
    return np.arcsin(np.clip(arg, -1.0, 1.0))


def gain_products(rho_rb, rho_mr):
    """Per-pair gain products kron(rho_rb, rho_mr)."""
    return np.kron(np.atleast_1d(rho_rb), np.atleast_1d(rho_mr))


def _stage_regularization(sigma, n_a, n_b, reg_scale, noiseless_reg, scale,
                          problem_grad_norm):
    if sigma > 0.0:
        # The noise-calibrated weight presumes a unit-amplitude data term, so
        # it is multiplied by the link amplitude of this stage's fit term.
        return scale * anm.regularization_weight(sigma, n_a, n_b, c=reg_scale)
    # Noiseless data: keep a vanishing pull toward the atomic set so the SDP
    # selects the minimum-atomic-norm interpolant instead of an arbitrary
    # least-squares completion.
    return noiseless_reg * problem_grad_norm


def _solve_stage(sensing_left, sensing_right, observations, scale, reg,
                 grad_norm, solver_options, h_init=None):
    """Solve one stage's SDP, by continuation when the weight is vanishing.

    The recovery bias shrinks linearly with the regularization weight, but a
    cold start at a vanishing weight leaves the objective too flat to select
    the atomic solution.  Walking the weight down a decade at a time from
    1e-3 of the data-gradient norm, warm-started, keeps the iterate in the
    atomic basin while removing the bias.
    """

    def make(reg_value):
        return anm.AnmProblem(
            sensing_left=sensing_left, sensing_right=sensing_right,
            observations=observations, scale=scale, reg=reg_value,
        )

    start = 1e-3 * grad_norm
    if reg >= start or grad_norm == 0.0:
        return anm.solve(make(reg), solver_options, h_init=h_init)
    ladder = []
    value = start
    while value > reg * np.sqrt(10.0):
        ladder.append(value)
        value /= 10.0
    ladder.append(reg)
    sol = None
    for i, reg_value in enumerate(ladder):
        sol = anm.solve(make(reg_value), solver_options, warm_start=sol,
                        h_init=h_init if i == 0 else None)
    return sol


def _grad_norm(sensing_left, sensing_right, observations, scale):
    g = scale * (sensing_left.conj().T @ observations @ sensing_right.conj().T)
    return float(np.linalg.norm(g, 2))


def two_stage_estimate(record, cfg, l_mr, l_rb, truth=None, reg_scale=1.0,
                       noiseless_reg=1e-6, root_tol=DEGENERATE_ROOT_TOL,
                       solver_options=None):
    """Run the full two-stage recovery on one sounding record.

    ``truth`` is an optional ``(paths_mr, paths_rb)`` pair used only to align
    estimate order for evaluation.  ``reg_scale`` multiplies the
    noise-calibrated regularization weight of both stages; ``noiseless_reg``
    sets the vanishing weight (relative to the data-term gradient) used when
    the record is noise free.  Solver failures are re-raised with a stage tag.
    """
    notes = []
    s1 = float(np.sqrt(cfg.p_t) * record.beta1)
    s2 = float(np.sqrt(cfg.p_t) * record.beta2)
    sigma = float(np.sqrt(cfg.sigma2))

    grad1 = _grad_norm(record.selection, record.pilots, record.received_ris, s1)
    reg1 = _stage_regularization(sigma, cfg.n_r, cfg.n_m, reg_scale,
                                 noiseless_reg, s1, grad1)
    try:
        sol1 = _solve_stage(record.selection, record.pilots, record.received_ris,
                            s1, reg1, grad1, solver_options)
    except ConvergenceError as err:
        raise ConvergenceError(
            f"stage1: {err}", err.primal_residual, err.dual_residual, err.iterations
        ) from err

    t_left, t_right = anm.assemble_certificate(sol1)
    g1, deg_g1 = freqs_from_toeplitz(t_left, l_mr, root_tol)  # reflector side
    f1, deg_f1 = freqs_from_toeplitz(t_right, l_mr, root_tol)  # mobile side
    if deg_f1 or deg_g1:
        notes.append("stage1: degenerate certificate spectrum")
    theta_mr, phi_mr = pair_and_order(f1, g1, truth[0] if truth else None)
    rho_mr = ls_gains_stage1(
        vec(record.received_ris), record.pilots, record.selection, theta_mr, phi_mr, s1
    )
    h_mr_hat = synth_channel(PathSet(theta_mr, phi_mr, rho_mr), cfg.n_r, cfg.n_m)

    reflected = build_reflected_pilots(record.schedule, h_mr_hat, record.pilots)
    combiner_h = record.combiner.conj().T
    grad2 = _grad_norm(combiner_h, reflected, record.received_bs, s2)
    reg2 = _stage_regularization(sigma, cfg.n_r, cfg.n_b, reg_scale,
                                 noiseless_reg, s2, grad2)
    try:
        sol2 = _solve_stage(combiner_h, reflected, record.received_bs, s2, reg2,
                            grad2, solver_options,
                            h_init=_stage2_init(combiner_h, reflected,
                                                record.received_bs, s2))
    except ConvergenceError as err:
        raise ConvergenceError(
            f"stage2: {err}", err.primal_residual, err.dual_residual, err.iterations
        ) from err

    t_left2, t_right2 = anm.assemble_certificate(sol2)
    g2, deg_g2 = freqs_from_toeplitz(t_left2, l_rb, root_tol)  # base-station side
    f2, deg_f2 = freqs_from_toeplitz(t_right2, l_rb, root_tol)  # reflector side
    if deg_f2 or deg_g2:
        notes.append("stage2: degenerate certificate spectrum")
    theta_rb, phi_rb = pair_and_order(f2, g2, truth[1] if truth else None)
    rho_rb = ls_gains_stage2(
        vec(record.received_bs), reflected, record.combiner, theta_rb, phi_rb, s2
    )
    h_rb_hat = synth_channel(PathSet(theta_rb, phi_rb, rho_rb), cfg.n_b, cfg.n_r)

    return EstimationResult(
        h_mr_hat=h_mr_hat,
        h_rb_hat=h_rb_hat,
        theta_mr=theta_mr,
        phi_mr=phi_mr,
        rho_mr=rho_mr,
        theta_rb=theta_rb,
        phi_rb=phi_rb,
        rho_rb=rho_rb,
        delta=angle_differences(phi_mr, theta_rb),
        rho_prod=gain_products(rho_rb, rho_mr),
        stage1=sol1,
        stage2=sol2,
        warnings=tuple(notes),
    )


def _stage2_init(combiner_h, reflected, observations, scale):
    if scale <= 0.0:
        return None
    return (
        np.linalg.pinv(combiner_h) @ observations @ np.linalg.pinv(reflected) / scale
    )


class TwoStageChannelEstimator(BaseEstimator):
    """Scikit-learn style front end for the two-stage pipeline.

    Construct with a :class:`~ris_anm_sim.sounding.SoundingConfig` and model
    orders, call :meth:`fit` on a sounding record, then read the fitted
    attributes (``theta_mr_``, ``rho_rb_``, ``h_mr_``, ...).  Parameters are
    plain constructor attributes, so ``get_params``/``set_params`` and
    ``sklearn.base.clone`` work as usual.
    """

    def __init__(self, config=None, l_mr=2, l_rb=2, reg_scale=1.0,
                 noiseless_reg=1e-6, root_tol=DEGENERATE_ROOT_TOL,
                 solver_options=None):
        self.config = config
        self.l_mr = l_mr
        self.l_rb = l_rb
        self.reg_scale = reg_scale
        self.noiseless_reg = noiseless_reg
        self.root_tol = root_tol
        self.solver_options = solver_options

    def fit(self, record, truth=None):
        """Estimate both hops from one sounding record; returns self."""
        if self.config is None:
            raise ValueError("config must be set before fitting")
        result = two_stage_estimate(
            record, self.config, self.l_mr, self.l_rb, truth=truth,
            reg_scale=self.reg_scale, noiseless_reg=self.noiseless_reg,
            root_tol=self.root_tol, solver_options=self.solver_options,
        )
        self.result_ = result
        self.h_mr_ = result.h_mr_hat
        self.h_rb_ = result.h_rb_hat
        self.theta_mr_ = result.theta_mr
        self.phi_mr_ = result.phi_mr
        self.rho_mr_ = result.rho_mr
        self.theta_rb_ = result.theta_rb
        self.phi_rb_ = result.phi_rb
        self.rho_rb_ = result.rho_rb
        self.delta_ = result.delta
        self.rho_prod_ = result.rho_prod
        return self

    def predict(self, omega):
        """Cascaded channel implied by the fitted hops under phase vector omega."""
        if not hasattr(self, "result_"):
            raise RuntimeError("estimator is not fitted")
        omega = np.asarray(omega, dtype=complex)
        return self.h_rb_ @ (omega[:, None] * self.h_mr_)
