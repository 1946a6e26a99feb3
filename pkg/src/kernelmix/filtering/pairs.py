"""Training pairs for learned filters: target x_t and the window y_{t-L..t-1}.

Windows are oldest-first.  Rather than materializing every window, a
``PairIndex`` stores (trial, t) references over a stacked observation matrix
and gathers windows per batch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError
from .simulate import TrialRecord

log = logging.getLogger(__name__)


@dataclass
class Standardizer:
    mean: np.ndarray
    sd: np.ndarray

    def __call__(self, windows: np.ndarray) -> np.ndarray:
        return (windows - self.mean) / self.sd

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "sd": self.sd.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["mean"], dtype=float), np.array(d["sd"], dtype=float))


class PairIndex:
    """All (trial, t) pairs with t >= window over a list of trials."""

    def __init__(self, trials: list[TrialRecord], window: int):
        if window < 1:
            raise ParameterError("window must be at least 1")
        self.window = window
        usable = [tr for tr in trials if len(tr) > window]
        self.skipped = len(trials) - len(usable)
        if self.skipped:
            log.warning("skipped %d trials shorter than window %d", self.skipped, window)
        if not usable:
            raise ParameterError("no trial is longer than the window")
        self.trials = usable
        lengths = {len(tr) for tr in usable}
        if len(lengths) == 1:
            # equal lengths: one matrix, cheap fancy indexing
            self._obs = np.stack([tr.observations for tr in usable])
            self._lat = np.stack([tr.latent for tr in usable])
        else:
            self._obs = None
        refs = [(i, t) for i, tr in enumerate(usable) for t in range(window, len(tr))]
        self.refs = np.array(refs, dtype=np.int64).reshape(-1, 2)

    def __len__(self):
        return len(self.refs)

    def gather(self, rows=None) -> tuple[np.ndarray, np.ndarray]:
        """Targets and raw windows for the selected pair rows (all if None)."""
        refs = self.refs if rows is None else self.refs[rows]
        if self._obs is not None:
            offs = refs[:, 1:2] - self.window + np.arange(self.window)[None, :]
            windows = self._obs[refs[:, :1], offs]
            targets = self._lat[refs[:, 0], refs[:, 1]]
            return targets, windows
        targets = np.array([self.trials[i].latent[t] for i, t in refs])
        windows = np.stack([self.trials[i].observations[t - self.window : t] for i, t in refs])
        return targets, windows

    def targets(self) -> np.ndarray:
        return self.gather()[0] if self._obs is None else self._lat[self.refs[:, 0], self.refs[:, 1]]

    def fit_standardizer(self) -> Standardizer:
        """Per-position mean and sd of the windows over every pair."""
        total = np.zeros(self.window)
        total_sq = np.zeros(self.window)
        for tr in self.trials:
            y = tr.observations
            n = len(y) - self.window
            cs = np.concatenate([[0.0], np.cumsum(y)])
            cs2 = np.concatenate([[0.0], np.cumsum(y * y)])
            k = np.arange(self.window)
            total += cs[k + n] - cs[k]
            total_sq += cs2[k + n] - cs2[k]
        count = len(self)
        mean = total / count
        sd = np.sqrt(np.maximum(total_sq / count - mean * mean, 0.0))
        sd[sd == 0] = 1.0
        return Standardizer(mean, sd)


def make_training_pairs(trials: list[TrialRecord], window: int, standardizer: Standardizer | None = None):
    """Materialize (targets, standardized windows, standardizer) for small datasets."""
    index = PairIndex(trials, window)
    if standardizer is None:
        standardizer = index.fit_standardizer()
    elif standardizer.mean.shape != (window,):
        raise ShapeError("standardizer width does not match the window")
    targets, windows = index.gather()
    return targets, standardizer(windows), standardizer
