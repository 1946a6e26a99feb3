"""Per-trial scores for learned filters and the EKF baseline."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..kernels import circular_distance
from ..mixture import LOG_FLOOR
from .ekf import ekf_filter
from .model import FilterModel
from .pairs import PairIndex
from .simulate import OscillatorParams, TrialRecord


def trial_log_density(model: FilterModel, trial: TrialRecord) -> np.ndarray:
    """log f(x_t | y_{t-L..t-1}) for every t >= L of one trial."""
    if len(trial) <= model.window:
        raise ConfigError(f"trial {trial.trial_id} is not longer than the window {model.window}")
    if trial.manifold != model.manifold:
        raise ConfigError("trial and model live on different manifolds")
    targets, windows = PairIndex([trial], model.window).gather()
    return np.maximum(model.log_density(targets, windows), LOG_FLOOR)


def evaluate_filter_nll(model: FilterModel, trials: list[TrialRecord]) -> list[float]:
    """Mean per-step NLL of the true latent for each trial."""
    return [float(-trial_log_density(model, tr).mean()) for tr in trials]


def ekf_trial_nll(trials: list[TrialRecord], params: OscillatorParams, window: int) -> list[float]:
    """EKF mean predictive NLL over the same steps a windowed filter is scored on."""
    out = []
    for tr in trials:
        res = ekf_filter(tr.observations, params, latent=tr.latent)
        out.append(float(res.nll[window:].mean()))
    return out


def posterior_modes(model: FilterModel, trial: TrialRecord, n_grid: int = 1024) -> np.ndarray:
    """Grid argmax of the conditional density at every scored time step."""
    _, windows = PairIndex([trial], model.window).gather()
    grid = model.grid(n_grid)
    modes = []
    for i in range(0, len(windows), 256):
        logd = model.log_density_grid(grid, windows[i : i + 256])
        modes.append(grid[np.argmax(logd, axis=1)])
    return np.concatenate(modes)


def circular_mode_error(model: FilterModel, trial: TrialRecord, n_grid: int = 1024) -> np.ndarray:
    """Circular distance between posterior mode and true phase, per scored step."""
    modes = posterior_modes(model, trial, n_grid)
    return np.asarray(circular_distance(modes, trial.latent[model.window :]))


def predictive_sd(model: FilterModel, trial: TrialRecord) -> np.ndarray:
    """Standard deviation of each conditional density (gaussian KMN heads)."""
    _, windows = PairIndex([trial], model.window).gather()
    return np.array([model.conditional(w).mean_and_sd()[1] for w in windows])
