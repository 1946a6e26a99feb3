"""Trained filters: a network plus its output head, and checkpoint I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ParameterError
from ..kernels import KernelSpec, log_kernel_matrix
from ..mixture import (
    CenterSet,
    MixtureDensity,
    QuantizedDensity,
    mixture_logpdf_rows,
    network_log_weights,
    quantized_log_density,
)
from ..ndnet import DenseNet, forward
from .pairs import Standardizer

CHECKPOINT_VERSION = 1
HEADS = ("kmn", "quantized")


@dataclass
class FilterModel:
    head: str
    net: DenseNet
    window: int
    standardizer: Standardizer
    manifold: str = "real_line"
    center_set: CenterSet | None = None
    kernel_spec: KernelSpec | None = None
    bin_edges: np.ndarray | None = None
    weight_eps: float = 1e-12
    name: str = ""

    def __post_init__(self):
        if self.head not in HEADS:
            raise ParameterError(f"unknown head {self.head!r}")
        if self.head == "kmn" and (self.center_set is None or self.kernel_spec is None):
            raise ParameterError("a kmn head needs centers and a kernel spec")
        if self.head == "quantized":
            if self.bin_edges is None:
                raise ParameterError("a quantized head needs bin edges")
            self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        if self.net.layer_dims[0] != self.window:
            raise ConfigError("network input width differs from the window length")

    def features(self, windows) -> np.ndarray:
        windows = np.atleast_2d(np.asarray(windows, dtype=float))
        if windows.shape[1] != self.window:
            raise ConfigError(f"window length {windows.shape[1]} != model window {self.window}")
        return self.standardizer(windows)

    def _quantized_targets(self, x):
        x = np.asarray(x, dtype=float)
        if self.manifold == "circle":
            # bins tile [-pi, pi); the wrapped value pi belongs to the first bin
            x = np.where(x >= self.bin_edges[-1], x - 2 * np.pi, x)
        return x

    def log_density(self, targets, windows) -> np.ndarray:
        """log f(x_q | window_q) for paired rows."""
        feats = self.features(windows)
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if self.head == "kmn":
            log_w = network_log_weights(self.net, feats, self.weight_eps)
            log_k = log_kernel_matrix(self.kernel_spec, targets, self.center_set.centers)
            return mixture_logpdf_rows(log_w, log_k)
        logits = forward(self.net, feats)
        return quantized_log_density(logits, self.bin_edges, self._quantized_targets(targets))

    def log_density_grid(self, grid, windows) -> np.ndarray:
        """log densities of shape (n_windows, len(grid))."""
        feats = self.features(windows)
        grid = np.asarray(grid, dtype=float)
        if self.head == "kmn":
            log_w = network_log_weights(self.net, feats, self.weight_eps)
            w = np.exp(log_w - log_w.max(axis=1, keepdims=True))
            # normalized kernels peak well below overflow, so linear space is safe here
            kern = np.exp(log_kernel_matrix(self.kernel_spec, grid, self.center_set.centers))
            dens = (w @ kern.T) / w.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore"):
                return np.log(dens)
        logits = forward(self.net, feats)
        g = self._quantized_targets(grid)
        return np.stack([quantized_log_density(z, self.bin_edges, g) for z in logits])

    def conditional(self, window):
        """The conditional density given one observation window."""
        feats = self.features(window)
        if self.head == "kmn":
            w = forward(self.net, feats)[0] + self.weight_eps
            return MixtureDensity(self.center_set, self.kernel_spec, w)
        return QuantizedDensity(self.bin_edges, forward(self.net, feats)[0])

    def grid(self, n: int = 1001) -> np.ndarray:
        """Evaluation grid covering the model's support; (-pi, pi] on the circle."""
        if self.manifold == "circle":
            return np.linspace(-np.pi, np.pi, n + 1)[1:]
        if self.head == "quantized":
            return np.linspace(self.bin_edges[0], self.bin_edges[-1], n)
        pad = 8.0 * max(self.kernel_spec.params)
        c = self.center_set.centers
        return np.linspace(c.min() - pad, c.max() + pad, n)

    # --- checkpoints --------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "version": CHECKPOINT_VERSION,
            "name": self.name,
            "head": self.head,
            "window": self.window,
            "manifold": self.manifold,
            "weight_eps": self.weight_eps,
            "standardizer": self.standardizer.to_dict(),
            "net": self.net.to_dict(),
        }
        if self.head == "kmn":
            d["center_set"] = self.center_set.to_dict()
            d["kernel_spec"] = self.kernel_spec.to_dict()
        else:
            d["bin_edges"] = self.bin_edges.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FilterModel":
        if d.get("version") != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version {d.get('version')!r}")
        kmn = d["head"] == "kmn"
        return cls(
            head=d["head"],
            net=DenseNet.from_dict(d["net"]),
            window=int(d["window"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            manifold=d["manifold"],
            center_set=CenterSet.from_dict(d["center_set"]) if kmn else None,
            kernel_spec=KernelSpec.from_dict(d["kernel_spec"]) if kmn else None,
            bin_edges=None if kmn else np.array(d["bin_edges"], dtype=float),
            weight_eps=float(d["weight_eps"]),
            name=d.get("name", ""),
        )


def save_checkpoint(model: FilterModel, path) -> None:
    """JSON checkpoint; floats are written with shortest round-trip repr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(model.to_dict(), fh)
        fh.write("\n")


def load_checkpoint(path) -> FilterModel:
    with open(Path(path), encoding="utf-8") as fh:
        return FilterModel.from_dict(json.load(fh))
