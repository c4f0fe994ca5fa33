"""Uplink training: schedules, synthesized received signals, and overheads.

The hybrid reflector observes pilots twice per block: a small active subset
of elements records the incident signal directly, while the remaining
passive elements reflect it to the base station through a per-block phase
schedule.  Pilots and the base-station combiner stay fixed across blocks;
only the reflector phases change.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError
from .validation import check_rng

__all__ = [
    "SoundingConfig",
    "PhaseSchedule",
    "SoundingRecord",
    "make_training_matrix",
    "make_combiner",
    "make_active_set",
    "make_phase_schedule",
    "sound_hybrid",
    "sound_passive",
    "overhead_hybrid",
    "overhead_passive",
    "noise_power",
]


@dataclass(frozen=True)
class SoundingConfig:
    """Array sizes, training-schedule shape and link powers for one setup.

    ``n_b``, ``n_r``, ``n_m``: element counts at base station, reflector and
    mobile.  ``m``: active reflector elements.  ``k`` blocks of ``t``
    training symbols each; ``n_cb`` combiner columns; ``n_rfb``/``n_rfr`` RF
    chains at base station / reflector.  ``p_t`` transmit power and
    ``sigma2`` noise power, both in watts.
    """

    n_b: int
    n_r: int
    n_m: int
    m: int
    k: int
    t: int
    n_cb: int
    n_rfb: int
    n_rfr: int
    p_t: float = 1.0
    sigma2: float = 0.0

    def __post_init__(self):
        if not (0 < self.m <= self.n_r):
            raise ConfigurationError(f"need 0 < m <= n_r, got m={self.m}, n_r={self.n_r}")
        if self.n_cb > self.n_b:
            raise ConfigurationError("combiner cannot have more columns than antennas")
        if self.t < 1 or self.k < 1:
            raise ConfigurationError("t and k must be >= 1")
        if self.n_rfb < 1 or self.n_rfr < 1:
            raise ConfigurationError("RF-chain counts must be positive")
        if self.p_t < 0 or self.sigma2 < 0:
            raise ConfigurationError("powers must be nonnegative")


@dataclass(frozen=True)
class PhaseSchedule:
    """Per-block reflector phases with each block's active (non-reflecting) subset.

    ``phases`` has shape (k, n_r); row k holds the diagonal of the k-th
    block's phase control matrix: unit-modulus entries on passive elements,
    exactly zero on that block's active elements.  ``active_sets`` has shape
    (k, m); active elements may be re-switched between blocks (repeating one
    row pins them).
    """

    phases: np.ndarray
    active_sets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "phases", np.asarray(self.phases, dtype=complex))
        sets = np.asarray(self.active_sets, dtype=int)
        if sets.ndim == 1:
            sets = np.tile(sets, (self.phases.shape[0] if self.phases.ndim == 2 else 1, 1))
        object.__setattr__(self, "active_sets", sets)
        if self.phases.ndim != 2:
            raise DimensionError("phases must be (k, n_r)")
        if self.active_sets.shape[0] != self.phases.shape[0]:
            raise DimensionError("need one active set per block")
        mods = np.abs(self.phases)
        for k in range(self.n_blocks):
            passive = np.ones(self.n_r, dtype=bool)
            passive[self.active_sets[k]] = False
            if not np.allclose(mods[k, passive], 1.0, atol=1e-12):
                raise ConfigurationError("passive phase entries must be unit modulus")
            if self.active_sets[k].size and not np.all(mods[k, self.active_sets[k]] == 0.0):
                raise ConfigurationError("active elements must have zero reflection")

    @property
    def n_blocks(self):
        return self.phases.shape[0]

    @property
    def n_r(self):
        return self.phases.shape[1]

    @property
    def n_active(self):
        return self.active_sets.shape[1]

    def block_matrix(self, k):
        """Full diagonal phase control matrix of block k."""
        return np.diag(self.phases[k])


@dataclass(frozen=True)
class SoundingRecord:
    """One training interval's observations plus everything that produced them.

    ``received_ris``: (m*k, t) active-element observations, blocks stacked
    vertically.  ``received_bs``: (n_cb, t*k) combined base-station
    observations, blocks stacked horizontally.  ``selection``: (m*k, n_r)
    stacked row-selection matrices.  ``combiner``: (n_b, n_cb).  ``pilots``:
    (n_m, t).  ``beta1``/``beta2`` are the amplitude attenuations applied to
    the direct and reflected routes.
    """

    received_ris: np.ndarray
    received_bs: np.ndarray
    selection: np.ndarray
    combiner: np.ndarray
    pilots: np.ndarray
    schedule: PhaseSchedule
    beta1: float
    beta2: float


def make_training_matrix(n_m, t, rng):
    """Unit-modulus random-phase pilots, scaled so every column has unit norm."""
    check_rng(rng)
    if t < 1:
        raise ConfigurationError("t must be >= 1")
    psi = rng.uniform(0.0, 2.0 * np.pi, size=(n_m, t))
    return np.exp(1j * psi) / np.sqrt(n_m)


def make_combiner(n_b, n_cb, rng):
    """Analog combiner with i.i.d. random phases, entries of modulus 1/sqrt(n_b)."""
    check_rng(rng)
    if n_cb < 1:
        raise ConfigurationError("n_cb must be >= 1")
    psi = rng.uniform(0.0, 2.0 * np.pi, size=(n_b, n_cb))
    return np.exp(1j * psi) / np.sqrt(n_b)


def make_active_set(n_r, m, rng, first_m=False):
    """Choose m distinct active element indices out of n_r.

    Uniform without replacement by default; ``first_m`` pins indices 0..m-1
    for reproduction runs (element positions do not affect accuracy).
    """
    if m > n_r:
        raise ConfigurationError(f"m={m} exceeds n_r={n_r}")
    if first_m:
        return np.arange(m)
    check_rng(rng)
    return np.sort(rng.choice(n_r, size=m, replace=False))


def make_phase_schedule(n_r, k, active_sets, rng):
    """K independent per-block phase diagonals; active entries are zeroed.

    ``active_sets`` is one index set applied to every block, or a (k, m)
    array switching the active elements per block (which spreads the direct
    observations over more reflector rows).
    """
    check_rng(rng)
    phases = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(k, n_r)))
    active_sets = np.asarray(active_sets, dtype=int)
    if active_sets.ndim == 1:
        active_sets = np.tile(active_sets, (k, 1))
    for kk in range(k):
        if active_sets[kk].size:
            phases[kk, active_sets[kk]] = 0.0
    return PhaseSchedule(phases=phases, active_sets=active_sets)


def _selection_matrix(active_set, n_r):
    sel = np.zeros((len(active_set), n_r), dtype=complex)
    sel[np.arange(len(active_set)), active_set] = 1.0
    return sel


def sound_hybrid(cfg, h_mr, h_rb, schedule, pilots, combiner, rng,
                 beta1=1.0, beta2=1.0, observe_all=False):
    """Synthesize both received signals of one hybrid training interval.

    Per block k the active elements record
    ``sqrt(p_t)*beta1 * S h_mr pilots + S Z1`` (S the row selection), and the
    base station records
    ``sqrt(p_t)*beta2 * combiner^H h_rb Omega_k h_mr pilots + combiner^H Z2``.
    Noise is i.i.d. circular complex normal with variance ``cfg.sigma2`` per
    entry, drawn at the antennas and then selected/combined; with
    ``sigma2 == 0`` the outputs are exact.

    ``observe_all`` is an idealized oracle mode: every element is observed
    directly (selection is the identity, requires ``cfg.m == cfg.n_r``)
    while the reflection stays as scheduled.  Physical hardware cannot do
    both; the mode exists to exercise the estimator at full aperture.
    """
    check_rng(rng)
    h_mr = np.asarray(h_mr, dtype=complex)
    h_rb = np.asarray(h_rb, dtype=complex)
    if h_mr.shape != (cfg.n_r, cfg.n_m):
        raise DimensionError(f"h_mr must be ({cfg.n_r}, {cfg.n_m}), got {h_mr.shape}")
    if h_rb.shape != (cfg.n_b, cfg.n_r):
        raise DimensionError(f"h_rb must be ({cfg.n_b}, {cfg.n_r}), got {h_rb.shape}")
    if pilots.shape != (cfg.n_m, cfg.t):
        raise DimensionError(f"pilots must be ({cfg.n_m}, {cfg.t}), got {pilots.shape}")
    if combiner.shape != (cfg.n_b, cfg.n_cb):
        raise DimensionError(
            f"combiner must be ({cfg.n_b}, {cfg.n_cb}), got {combiner.shape}"
        )
    if schedule.n_blocks != cfg.k or schedule.n_r != cfg.n_r:
        raise DimensionError("schedule shape does not match config")

    if observe_all and cfg.m != cfg.n_r:
        raise ConfigurationError("observe_all requires m == n_r")

    amp = np.sqrt(cfg.p_t)
    noise_scale = np.sqrt(cfg.sigma2 / 2.0)

    def cnoise(shape):
        return noise_scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    clean_ris_full = amp * beta1 * (h_mr @ pilots)
    selections = []
    ris_blocks = []
    bs_blocks = []
    for k in range(cfg.k):
        if observe_all:
            sel = np.eye(cfg.n_r, dtype=complex)
        else:
            sel = _selection_matrix(schedule.active_sets[k], cfg.n_r)
        selections.append(sel)
        block_ris = sel @ clean_ris_full
        reflected = h_rb @ (schedule.phases[k][:, None] * (h_mr @ pilots))
        block_bs = amp * beta2 * (combiner.conj().T @ reflected)
        if cfg.sigma2 > 0.0:
            block_ris = block_ris + sel @ cnoise((cfg.n_r, cfg.t))
            block_bs = block_bs + combiner.conj().T @ cnoise((cfg.n_b, cfg.t))
        ris_blocks.append(block_ris)
        bs_blocks.append(block_bs)

    return SoundingRecord(
        received_ris=np.vstack(ris_blocks),
        received_bs=np.hstack(bs_blocks),
        selection=np.vstack(selections),
        combiner=np.asarray(combiner, dtype=complex),
        pilots=np.asarray(pilots, dtype=complex),
        schedule=schedule,
        beta1=float(beta1),
        beta2=float(beta2),
    )


def sound_passive(cfg, h_mr, h_rb, phase_vectors, pilots_per_block,
                  combiners_per_block, rng, beta2=1.0):
    """Received blocks for an all-passive reflector (comparison baseline).

    Block k: ``sqrt(p_t)*beta2 * W_k^H h_rb diag(phases_k) h_mr X_k + W_k^H Z_k``.
    Every diagonal entry must be unit modulus (no active elements).
    """
    check_rng(rng)
    phase_vectors = np.asarray(phase_vectors, dtype=complex)
    if not np.allclose(np.abs(phase_vectors), 1.0, atol=1e-12):
        raise ConfigurationError("passive sounding requires full-modulus phase vectors")
    amp = np.sqrt(cfg.p_t)
    noise_scale = np.sqrt(cfg.sigma2 / 2.0)
    blocks = []
    for k in range(phase_vectors.shape[0]):
        x_k = np.asarray(pilots_per_block[k], dtype=complex)
        w_k = np.asarray(combiners_per_block[k], dtype=complex)
        if w_k.shape[0] != cfg.n_b or x_k.shape[0] != cfg.n_m:
            raise DimensionError("per-block pilot/combiner dims do not match config")
        clean = amp * beta2 * (w_k.conj().T @ h_rb @ (phase_vectors[k][:, None] * (h_mr @ x_k)))
        if cfg.sigma2 > 0.0:
            z = noise_scale * (
                rng.standard_normal((cfg.n_b, x_k.shape[1]))
                + 1j * rng.standard_normal((cfg.n_b, x_k.shape[1]))
            )
            clean = clean + w_k.conj().T @ z
        blocks.append(clean)
    return blocks


def overhead_hybrid(cfg):
    """Channel uses consumed by hybrid training: k*t*ceil(n_cb/n_rfb)*ceil(m/n_rfr)."""
    return int(cfg.k * cfg.t * np.ceil(cfg.n_cb / cfg.n_rfb) * np.ceil(cfg.m / cfg.n_rfr))


def overhead_passive(n0_beams, m0, t, l_mr, l_rb, n_rfb):
    """Channel uses consumed by the two-stage passive baseline training."""
    if n_rfb < 1:
        raise ConfigurationError("n_rfb must be positive")
    return int(n0_beams * np.ceil(m0 / n_rfb) + t * l_mr * np.ceil(l_rb / n_rfb))


def noise_power(n0_dbm_per_hz, bandwidth_hz):
    """Thermal noise power in watts for a density (dBm/Hz) over a bandwidth."""
    if bandwidth_hz <= 0:
        raise ConfigurationError("bandwidth must be positive")
    dbm = n0_dbm_per_hz + 10.0 * np.log10(bandwidth_hz)
    return float(10.0 ** ((dbm - 30.0) / 10.0))
