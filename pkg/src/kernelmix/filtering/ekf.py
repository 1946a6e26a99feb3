"""Extended Kalman filter for the noisy anharmonic oscillator.

The state is (x, v).  Prediction follows the same explicit Euler step used by
the simulator, with its Jacobian propagating the covariance; the observation
model is y = x + N(0, obs_noise_sd^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NumericalError, ParameterError
from .simulate import OscillatorParams

PSD_TOL = 1e-12


@dataclass
class GaussianBelief:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.covariance = np.asarray(self.covariance, dtype=float)
        if self.mean.shape != (2,) or self.covariance.shape != (2, 2):
            raise ParameterError("belief must be a 2-vector with a 2x2 covariance")


@dataclass
class EKFResult:
    predicted: list[GaussianBelief]
    filtered: list[GaussianBelief]
    nll: np.ndarray | None  # per-step NLL of the true latent, if supplied


def _check_psd(p: np.ndarray, step: int) -> np.ndarray:
    p = 0.5 * (p + p.T)
    lo = np.linalg.eigvalsh(p)[0]
    if lo < -PSD_TOL * max(1.0, float(np.abs(p).max())):
        raise NumericalError(f"EKF covariance lost positive semi-definiteness at step {step}")
    return p


def ekf_filter(observations, params: OscillatorParams, initial: GaussianBelief | None = None,
               latent=None, conditioning: str = "predictive") -> EKFResult:
    """Run the EKF over ``observations``.

    ``initial`` describes the state before the first Euler step (defaults to
    the simulator's fixed start with zero covariance).  When ``latent`` is
    given, the per-step NLL of the true position is computed under the
    predictive belief (conditioned on y_1..y_{t-1}, matching the learned
    filters) or, with ``conditioning="filtered"``, under the updated belief.
    Steps whose position variance is zero get NaN.
    """
    if params.obs_noise_sd <= 0:
        raise ParameterError("EKF needs obs_noise_sd > 0")
    if conditioning not in ("predictive", "filtered"):
        raise ParameterError(f"unknown conditioning {conditioning!r}")
    y = np.asarray(observations, dtype=float)
    if initial is None:
        initial = GaussianBelief(np.array([params.x0, params.v0]), np.zeros((2, 2)))
    m = initial.mean.copy()
    p = initial.covariance.copy()
    dt = params.dt
    q = np.diag([0.0, params.noise_scale**2 * dt])
    r = params.obs_noise_sd**2
    w2 = params.omega0**2
    predicted, filtered = [], []
    for step, obs in enumerate(y, start=1):
        x, v = m
        f = np.array([[1.0, dt],
                      [(-w2 + 2 * params.k2 * x + 3 * params.k3 * x * x) * dt, 1.0 - params.beta * dt]])
        m = np.array([x + v * dt, v + params.acceleration(x, v) * dt])
        p = _check_psd(f @ p @ f.T + q, step)
        predicted.append(GaussianBelief(m.copy(), p.copy()))
        s = p[0, 0] + r
        gain = p[:, 0] / s
        m = m + gain * (obs - m[0])
        p = _check_psd(p - np.outer(gain, p[0, :]), step)
        filtered.append(GaussianBelief(m.copy(), p.copy()))
    nll = None
    if latent is not None:
        beliefs = predicted if conditioning == "predictive" else filtered
        mu = np.array([b.mean[0] for b in beliefs])
        var = np.array([b.covariance[0, 0] for b in beliefs])
        z = np.asarray(latent, dtype=float) - mu
        # a deterministic start leaves the first position variance at zero
        nll = np.full(len(var), np.nan)
        ok = var > 0
        nll[ok] = 0.5 * (z[ok] ** 2 / var[ok] + np.log(var[ok]) + math.log(2 * math.pi))
    return EKFResult(predicted, filtered, nll)
