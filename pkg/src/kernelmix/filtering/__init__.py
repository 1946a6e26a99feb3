"""Simulation-based approximate Bayesian filtering."""

from .ekf import GaussianBelief, ekf_filter
from .evaluate import evaluate_filter_nll
from .model import FilterModel, load_checkpoint, save_checkpoint
from .pairs import make_training_pairs
from .simulate import (
    OscillatorParams,
    PhaseModelParams,
    TrialRecord,
    sample_truncated_t,
    simulate_oscillator,
    simulate_phase_trial,
)
from .train import TrainConfig, train_filter

__all__ = [
    "FilterModel", "GaussianBelief", "OscillatorParams", "PhaseModelParams", "TrainConfig",
    "TrialRecord", "ekf_filter", "evaluate_filter_nll", "load_checkpoint", "make_training_pairs",
    "sample_truncated_t", "save_checkpoint", "simulate_oscillator", "simulate_phase_trial",
    "train_filter",
]
