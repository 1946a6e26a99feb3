"""Synthetic trials for the two filtering problems.

The oscillator is a damped anharmonic oscillator driven by white noise,
integrated by Euler-Maruyama and observed through additive Gaussian noise.
Its quadratic term creates a saddle near x = 1.77; trajectories that cross it
run off to a distant well and blow up under explicit Euler, so any sample
leaving ``[-escape_bound, escape_bound]`` is reported as diverged and the
dataset builder redraws it.

The phase problem observes ``f(cos theta(t))`` for a random quintic ``f`` plus
Gaussian noise, with a phase that advances at a fixed rate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ParameterError, SimulationDivergedError
from ..kernels import wrap_angle
from ..rng import derive_rng

GENERATOR_VERSION = "1"


@dataclass(frozen=True)
class OscillatorParams:
    omega0: float = 5.0
    beta: float = 0.2
    k2: float = 15.0
    k3: float = -0.5
    noise_scale: float = 5.0
    dt: float = 0.01
    duration: float = 4.0
    obs_noise_sd: float = 3.0
    x0: float = 0.0
    v0: float = 0.0
    escape_bound: float = 4.0

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= self.dt or self.omega0 <= 0:
            raise ParameterError("need dt > 0, duration > dt and omega0 > 0")
        if self.noise_scale < 0 or self.obs_noise_sd < 0:
            raise ParameterError("noise amplitudes must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))

    def acceleration(self, x, v):
        return (-self.omega0**2 * x - self.beta * v + self.k2 * x * x + self.k3 * x * x * x)


@dataclass(frozen=True)
class PhaseModelParams:
    angular_rate: float = 4.0 * math.pi
    obs_noise_sd: float = 2.0
    taylor_df: float = 3.0
    dt: float = 0.01
    duration: float = 4.0

    def __post_init__(self):
        if self.dt <= 0 or self.duration <= self.dt:
            raise ParameterError("need dt > 0 and duration > dt")
        if self.obs_noise_sd <= 0 or self.taylor_df <= 0:
            raise ParameterError("obs_noise_sd and taylor_df must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass
class TrialRecord:
    trial_id: int
    latent: np.ndarray
    observations: np.ndarray
    dt: float
    params: dict = field(default_factory=dict)
    manifold: str = "real_line"

    def __post_init__(self):
        self.latent = np.asarray(self.latent, dtype=float)
        self.observations = np.asarray(self.observations, dtype=float)
        if self.latent.shape != self.observations.shape:
            raise ParameterError("latent and observation series differ in length")

    def __len__(self):
        return len(self.latent)

    def to_json(self) -> str:
        return json.dumps({
            "trial_id": self.trial_id,
            "dt": self.dt,
            "manifold": self.manifold,
            "params": self.params,
            "latent": self.latent.tolist(),
            "observations": self.observations.tolist(),
        })

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        d = json.loads(line)
        return cls(d["trial_id"], np.array(d["latent"]), np.array(d["observations"]),
                   d["dt"], d["params"], d.get("manifold", "real_line"))


def simulate_oscillator(params: OscillatorParams, rng: np.random.Generator, trial_id: int = 0) -> TrialRecord:
    """Euler-Maruyama integration of the noisy anharmonic oscillator.

    Sample k is the position after step k (k = 1..n_steps), observed as
    ``y_k = x_k + N(0, obs_noise_sd^2)``.
    """
    n = params.n_steps
    kicks = rng.standard_normal(n) * (params.noise_scale * math.sqrt(params.dt))
    obs_noise = rng.standard_normal(n) * params.obs_noise_sd
    dt = params.dt
    x, v = float(params.x0), float(params.v0)
    xs = np.empty(n)
    for k in range(n):
        a = params.acceleration(x, v)
        x, v = x + v * dt, v + a * dt + kicks[k]
        if not (math.isfinite(x) and math.isfinite(v)) or abs(x) > params.escape_bound:
            raise SimulationDivergedError(f"oscillator left the admissible region at step {k + 1}", k + 1)
        xs[k] = x
    return TrialRecord(trial_id, xs, xs + obs_noise, dt, asdict(params), "real_line")


def sample_truncated_t(df: float, lo: float, hi: float, rng: np.random.Generator, size=None):
    """Student-t draws conditioned on (lo, hi), by rejection.

    A t variate is a standard normal over sqrt(chi2_df / df).
    """
    if df <= 0 or not lo < hi:
        raise ParameterError("need df > 0 and lo < hi")
    count = 1 if size is None else int(size)
    out = np.empty(count)
    filled = 0
    while filled < count:
        need = count - filled
        t = rng.standard_normal(need) / np.sqrt(rng.chisquare(df, need) / df)
        t = t[(t > lo) & (t < hi)]
        out[filled : filled + t.size] = t
        filled += t.size
    return float(out[0]) if size is None else out


def draw_waveform(df: float, rng: np.random.Generator) -> np.ndarray:
    """Quintic coefficients w1..w5; odd ones positive, even ones unrestricted."""
    w = np.empty(5)
    w[[0, 2, 4]] = sample_truncated_t(df, 0.0, math.inf, rng, size=3)
    w[[1, 3]] = sample_truncated_t(df, -math.inf, math.inf, rng, size=2)
    return w


def simulate_phase_trial(params: PhaseModelParams, rng: np.random.Generator, trial_id: int = 0,
                         coefficients=None, theta0: float | None = None,
                         noise: bool = True) -> TrialRecord:
    """Phase theta(t) = theta0 + rate*t at t = 0, dt, ...; y = f(cos theta) + noise."""
    n = params.n_steps
    if theta0 is None:
        theta0 = float(wrap_angle(rng.uniform(-math.pi, math.pi)))
    w = draw_waveform(params.taylor_df, rng) if coefficients is None else np.asarray(coefficients, float)
    t = np.arange(n) * params.dt
    theta = theta0 + params.angular_rate * t
    c = np.cos(theta)
    y = sum(w[k] * c ** (k + 1) for k in range(5))
    if noise:
        y = y + rng.standard_normal(n) * params.obs_noise_sd
    snapshot = asdict(params) | {"theta0": theta0, "coefficients": w.tolist()}
    return TrialRecord(trial_id, wrap_angle(theta), y, params.dt, snapshot, "circle")


def simulate_dataset(experiment: str, params, n_trials: int, seed: int, split: str,
                     max_attempts: int = 1000) -> tuple[list[TrialRecord], dict]:
    """Simulate ``n_trials`` trials, each from its own derived generator.

    Diverged oscillator trials are redrawn with the next attempt index.
    Returns the trials and summary stats (including the redraw count).
    """
    trials = []
    redraws = 0
    for trial_id in range(n_trials):
        for attempt in range(max_attempts):
            rng = derive_rng(seed, "simulate", experiment, split, trial_id, attempt)
            try:
                if experiment == "oscillator":
                    trial = simulate_oscillator(params, rng, trial_id)
                elif experiment == "phase":
                    trial = simulate_phase_trial(params, rng, trial_id)
                else:
                    raise ParameterError(f"unknown experiment {experiment!r}")
            except SimulationDivergedError:
                redraws += 1
                continue
            trials.append(trial)
            break
        else:
            raise SimulationDivergedError(f"trial {trial_id} diverged {max_attempts} times")
    return trials, {"redraws": redraws}


def write_dataset(path, trials: list[TrialRecord], manifest: dict) -> None:
    """One JSON object per line, plus a ``<path>.manifest.json`` sidecar."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for trial in trials:
            fh.write(trial.to_json())
            fh.write("\n")
    with open(manifest_path(path), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".manifest.json")


def read_dataset(path) -> list[TrialRecord]:
    with open(path, encoding="utf-8") as fh:
        return [TrialRecord.from_json(line) for line in fh if line.strip()]


def params_from_dict(experiment: str, data: dict):
    cls = OscillatorParams if experiment == "oscillator" else PhaseModelParams
    names = cls.__dataclass_fields__
    return cls(**{k: v for k, v in data.items() if k in names})
