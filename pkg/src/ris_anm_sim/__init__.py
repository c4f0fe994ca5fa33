"""Gridless two-stage channel estimation for hybrid-reflector mmWave MIMO links.

Library layout:

- :mod:`~ris_anm_sim.numerics`: complex linear algebra and Toeplitz helpers.
- :mod:`~ris_anm_sim.channel`: geometric channels, scenes, path loss.
- :mod:`~ris_anm_sim.sounding`: training schedules, received signals, overheads.
- :mod:`~ris_anm_sim.anm`: the atomic-norm SDP and its splitting solver.
- :mod:`~ris_anm_sim.estimation`: the two-stage recovery pipeline and the
  scikit-learn style :class:`~ris_anm_sim.estimation.TwoStageChannelEstimator`.
- :mod:`~ris_anm_sim.control`: reflector phase design and beamformers.
- :mod:`~ris_anm_sim.crlb`: Fisher information and estimation lower bounds.
- :mod:`~ris_anm_sim.metrics`: MSE and effective spectral efficiency.
- :mod:`~ris_anm_sim.harness`: experiment configs, Monte Carlo runs, CLI.
"""

from . import anm, channel, control, crlb, estimation, harness, metrics, numerics, sounding
from .channel import PathLossModel, PathSet, Topology
from .estimation import EstimationResult, TwoStageChannelEstimator, two_stage_estimate
from .harness import ExperimentConfig
from .sounding import SoundingConfig, SoundingRecord

__version__ = "0.1.0"

__all__ = [
    "anm",
    "channel",
    "control",
    "crlb",
    "estimation",
    "harness",
    "metrics",
    "numerics",
    "sounding",
    "PathSet",
    "Topology",
    "PathLossModel",
    "SoundingConfig",
    "SoundingRecord",
    "EstimationResult",
    "TwoStageChannelEstimator",
    "two_stage_estimate",
    "ExperimentConfig",
    "__version__",
]
