"""Decentralized ergodic coverage for multi-agent surface patterning."""

from .batch import analyze, run_batch
from .comm import CommChannel, CommConfig, exchange
from .config import ExperimentConfig, load_config
from .controller import ControlConfig, MPCProblem, SafeRegion, plan_mpc, spectral_feedback
from .errors import *  # noqa: F401,F403
from .metrics import dimple_coeffs, ergodic_metric, heterogeneity, team_heterogeneity, trial_performance
from .render import render
from .spectral import DensityMap, SpectralBasis, TrajectoryStats, eval_basis, eval_basis_gradient, transform_density
from .swarm import TrialRecord, WorldConfig, run_trial
from .targets import builtin_target, load_density_image

__version__ = "0.1.0"
