"""Kernel mixture densities, the kernel mixture network loss and its relatives.

A kernel mixture places every kernel of a ``KernelSpec`` on every center of
a ``CenterSet`` and mixes them with non-negative weights w_pj::

    f(x) = sum_pj w_pj K_j(x, c_p) / sum_pj w_pj

In a kernel mixture network the weights are the outputs of a ``DenseNet``
evaluated on the conditioning features.  Weight matrices are flattened
center-major, matching :func:`kernelmix.kernels.log_kernel_matrix`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDensityError, ParameterError, ShapeError
from .kernels import (
    KernelSpec,
    bin_index,
    circular_distance,
    kernel_sample,
    log_kernel_matrix,
    wrap_angle,
)
from .ndnet import DenseNet, backward, forward_cache, interleave

LOG_FLOOR = -690.7755278982137  # log(1e-300)


@dataclass(frozen=True)
class CenterSet:
    centers: np.ndarray
    delta: float = 0.0
    manifold: str = "real_line"

    def __len__(self):
        return len(self.centers)

    def to_dict(self) -> dict:
        return {"centers": self.centers.tolist(), "delta": self.delta, "manifold": self.manifold}

    @classmethod
    def from_dict(cls, data: dict) -> "CenterSet":
        return cls(np.array(data["centers"], dtype=float), float(data["delta"]), data["manifold"])


def select_centers(values, delta: float, manifold: str = "real_line") -> CenterSet:
    """Thin a set of training targets into kernel centers.

    Values are de-duplicated and sorted; the scan keeps the first value and
    then every value at distance >= ``delta`` from the last kept one.  On the
    circle, values are wrapped to (-pi, pi] and the last center is also
    checked against the first across the +-pi seam.
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        raise ParameterError("cannot select centers from an empty set")
    if delta < 0:
        raise ParameterError("delta must be non-negative")
    if manifold == "circle":
        values = np.asarray(wrap_angle(values)).ravel()
    elif manifold != "real_line":
        raise ParameterError(f"unknown manifold {manifold!r}")
    ordered = np.unique(values)
    kept = [ordered[0]]
    for v in ordered[1:]:
        gap = circular_distance(v, kept[-1]) if manifold == "circle" else v - kept[-1]
        if gap >= delta:
            kept.append(v)
    if manifold == "circle":
        while len(kept) > 1 and circular_distance(kept[-1], kept[0]) < delta:
            kept.pop()
    return CenterSet(np.array(kept), float(delta), manifold)


def _log_weights(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("mixture weights must be finite and non-negative")
    with np.errstate(divide="ignore"):
        return np.log(w)


def mixture_logpdf_rows(log_w: np.ndarray, log_k: np.ndarray) -> np.ndarray:
    """Row-wise log density from log weights and log kernel values.

    Both arguments have shape ``(n, P*J)`` (``log_w`` may be a single row).
    """
    num = logsumexp(log_w + log_k, axis=-1)
    den = logsumexp(log_w, axis=-1)
    if np.any(np.isneginf(den)):
        bad = int(np.flatnonzero(np.broadcast_to(np.isneginf(den), num.shape))[0])
        raise DegenerateDensityError(f"all mixture weights are zero for sample {bad}")
    return num - den


@dataclass(frozen=True)
class MixtureDensity:
    """An evaluable kernel mixture with fixed weights."""

    center_set: CenterSet
    kernel_spec: KernelSpec
    weights: np.ndarray  # (P, J)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        shape = (len(self.center_set), self.kernel_spec.n_kernels)
        if w.size != shape[0] * shape[1]:
            raise ShapeError(f"weights hold {w.size} entries, expected {shape}")
        w = w.reshape(shape)
        _log_weights(w)
        if not np.any(w > 0):
            raise DegenerateDensityError("all mixture weights are zero")
        object.__setattr__(self, "weights", w)

    @property
    def manifold(self) -> str:
        return self.kernel_spec.manifold

    @property
    def probabilities(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    def logpdf(self, x) -> np.ndarray:
        scalar = np.ndim(x) == 0
        log_k = log_kernel_matrix(self.kernel_spec, np.atleast_1d(x), self.center_set.centers)
        out = mixture_logpdf_rows(_log_weights(self.weights.ravel())[None, :], log_k)
        return float(out[0]) if scalar else out

    def pdf(self, x):
        out = np.exp(self.logpdf(x))
        return out if np.ndim(out) else float(out)

    def support(self) -> tuple[float, float]:
        """Domain used to integrate or grid the density."""
        if self.manifold == "circle":
            return -np.pi, np.pi
        c = self.center_set.centers
        if self.kernel_spec.family == "rectangular":
            return self.kernel_spec.params[0], self.kernel_spec.params[-1]
        pad = 8.0 * max(self.kernel_spec.params)
        return float(c.min() - pad), float(c.max() + pad)

    def mean_and_sd(self) -> tuple[float, float]:
        """First two moments on the real line (gaussian kernels only)."""
        if self.kernel_spec.family != "gaussian":
            raise ParameterError("moments are defined here for gaussian mixtures only")
        pi = self.probabilities
        c = self.center_set.centers[:, None]
        sig = np.asarray(self.kernel_spec.params)[None, :]
        mean = float((pi * c).sum())
        second = float((pi * (c * c + sig * sig)).sum())
        return mean, float(np.sqrt(max(second - mean * mean, 0.0)))

    def sample(self, rng: np.random.Generator, n: int | None = None):
        """Draw from the mixture: pick (p, j) by weight, then sample that kernel."""
        return density_sample(self, rng, n)


def kmn_density(weights, center_set: CenterSet, kernel_spec: KernelSpec, x):
    """Normalized kernel mixture density at ``x``."""
    return MixtureDensity(center_set, kernel_spec, weights).pdf(x)


def kmn_log_density(weights, center_set: CenterSet, kernel_spec: KernelSpec, x):
    """Log of :func:`kmn_density`, computed by log-sum-exp."""
    return MixtureDensity(center_set, kernel_spec, weights).logpdf(x)


# --- kernel mixture network loss --------------------------------------------


def _check_head(net: DenseNet, center_set: CenterSet, kernel_spec: KernelSpec):
    width = len(center_set) * kernel_spec.n_kernels
    if net.layer_dims[-1] != width:
        raise ShapeError(f"net emits {net.layer_dims[-1]} weights, mixture needs {width}")
    if net.activations[-1] not in ("rectified_quadratic", "exponential", "relu"):
        raise ParameterError("outer activation must be non-negative")


def network_log_weights(net: DenseNet, features, weight_eps: float = 0.0) -> np.ndarray:
    """Log mixture weights produced by ``net`` for a batch of feature rows."""
    cache = forward_cache(net, np.atleast_2d(features))
    if net.activations[-1] == "exponential":
        return cache.preacts[-1]
    return _log_weights(cache.outputs[-1] + weight_eps)


def kmn_nll(x, features, net: DenseNet, center_set: CenterSet, kernel_spec: KernelSpec,
            weight_eps: float = 0.0, log_k: np.ndarray | None = None):
    """Mean negative log likelihood of targets ``x`` and its parameter gradients.

    Per pair q the loss is ``-[log sum_pj w_pj K_j(x_q, c_p) - log sum_pj w_pj]``
    with ``w = net(features_q) + weight_eps``; the batch loss is the mean.
    Kernel values do not depend on the network, so ``log_k`` may be passed in
    precomputed.  Returns ``(loss, grads)`` with grads ordered as ``net.params``.
    """
    _check_head(net, center_set, kernel_spec)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.shape[0] != x.shape[0] or x.size == 0:
        raise ShapeError("need a non-empty batch with one feature row per target")
    n = x.shape[0]
    if log_k is None:
        log_k = log_kernel_matrix(kernel_spec, x, center_set.centers)
    cache = forward_cache(net, features)
    exponential = net.activations[-1] == "exponential"
    if exponential:
        log_w = cache.preacts[-1]
    else:
        w = cache.outputs[-1] + weight_eps
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
    num = logsumexp(log_w + log_k, axis=1)
    den = logsumexp(log_w, axis=1)
    dead = np.isneginf(den)
    if np.any(dead):
        raise DegenerateDensityError(
            f"network weights are all zero for sample {int(np.flatnonzero(dead)[0])}"
        )
    losses = den - num
    if exponential:
        grad = (np.exp(log_w - den[:, None]) - np.exp(log_w + log_k - num[:, None])) / n
    else:
        with np.errstate(over="ignore"):
            grad = (np.exp(-den)[:, None] - np.exp(log_k - num[:, None])) / n
    w_grads, b_grads = backward(net, cache, grad, wrt_preactivation=exponential)
    return float(losses.mean()), interleave(w_grads, b_grads)


def kmn_nll_samples(x, features, net: DenseNet, center_set: CenterSet, kernel_spec: KernelSpec,
                    weight_eps: float = 0.0) -> np.ndarray:
    """Per-pair negative log likelihoods, no gradients."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    log_w = network_log_weights(net, features, weight_eps)
    log_k = log_kernel_matrix(kernel_spec, x, center_set.centers)
    return -mixture_logpdf_rows(log_w, log_k)


# --- quantized softmax ------------------------------------------------------


@dataclass(frozen=True)
class QuantizedDensity:
    """Piecewise-constant density: softmax over logits spread across bins."""

    bin_edges: np.ndarray
    logits: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=float)
        logits = np.asarray(self.logits, dtype=float)
        if edges.ndim != 1 or np.any(np.diff(edges) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
        if logits.shape != (len(edges) - 1,):
            raise ShapeError(f"{len(edges) - 1} bins but {logits.shape} logits")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "logits", logits)

    def logpdf(self, x):
        return quantized_log_density(self.logits, self.bin_edges, x)

    def pdf(self, x):
        return quantized_softmax_density(self.logits, self.bin_edges, x)

    def support(self) -> tuple[float, float]:
        return float(self.bin_edges[0]), float(self.bin_edges[-1])


def quantized_log_density(logits, bin_edges, x):
    logits = np.asarray(logits, dtype=float)
    edges = np.asarray(bin_edges, dtype=float)
    scalar = np.ndim(x) == 0
    k = bin_index(np.atleast_1d(x), edges)
    log_p = logits - logsumexp(logits, axis=-1, keepdims=True)
    log_width = np.log(np.diff(edges))
    inside = k >= 0
    kk = np.where(inside, k, 0)
    if log_p.ndim == 1:
        vals = log_p[kk]
    else:
        vals = np.take_along_axis(log_p, kk[:, None], axis=1)[:, 0]
    out = np.where(inside, vals - log_width[kk], -np.inf)
    return float(out[0]) if scalar else out


def quantized_softmax_density(logits, bin_edges, x):
    """softmax(z)_k / width_k for the bin k holding x; zero outside the bins."""
    out = np.exp(quantized_log_density(logits, bin_edges, x))
    return out if np.ndim(out) else float(out)


def quantized_nll(x, features, net: DenseNet, bin_edges):
    """Mean softmax cross-entropy plus log bin width, with parameter gradients.

    This is the kernel mixture loss specialized to one rectangular kernel per
    bin and exponential weights.  Targets outside the bins are clipped into
    the end bins for training.
    """
    edges = np.asarray(bin_edges, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    features = np.atleast_2d(np.asarray(features, dtype=float))
    n_bins = len(edges) - 1
    if net.layer_dims[-1] != n_bins:
        raise ShapeError(f"net emits {net.layer_dims[-1]} logits for {n_bins} bins")
    if net.activations[-1] != "linear":
        raise ParameterError("quantized head needs a linear outer layer")
    n = x.shape[0]
    k = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    cache = forward_cache(net, features)
    z = cache.preacts[-1]
    lse = logsumexp(z, axis=1)
    log_width = np.log(np.diff(edges))
    losses = lse - z[np.arange(n), k] + log_width[k]
    grad = np.exp(z - lse[:, None])
    grad[np.arange(n), k] -= 1.0
    w_grads, b_grads = backward(net, cache, grad / n, wrt_preactivation=True)
    return float(losses.mean()), interleave(w_grads, b_grads)


# --- unconditional estimation and sampling -----------------------------------


def kde_estimate(samples, kernel_spec: KernelSpec, weights=None) -> MixtureDensity:
    """Kernel (mixture) density estimate with one center per sample.

    With a single-kernel spec this is classic KDE; with a kernel family every
    sample carries each kernel with equal share of its weight.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise ParameterError("kde_estimate needs at least one sample")
    if kernel_spec.manifold == "circle":
        samples = np.asarray(wrap_angle(samples)).ravel()
    w = np.ones(samples.size) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != samples.shape:
        raise ShapeError("one weight per sample is required")
    if np.any(w < 0) or not np.any(w > 0):
        raise ParameterError("sample weights must be non-negative and not all zero")
    order = np.argsort(samples, kind="stable")
    centers = CenterSet(samples[order], 0.0, kernel_spec.manifold)
    J = kernel_spec.n_kernels
    return MixtureDensity(centers, kernel_spec, np.repeat(w[order][:, None] / J, J, axis=1))


def density_sample(density: MixtureDensity, rng: np.random.Generator, n: int | None = None):
    """Draw ``n`` points (or one, if ``n`` is None) from a kernel mixture."""
    count = 1 if n is None else int(n)
    J = density.kernel_spec.n_kernels
    comp = rng.choice(density.weights.size, size=count, p=density.probabilities.ravel())
    p_idx, j_idx = np.divmod(comp, J)
    centers = density.center_set.centers[p_idx]
    spec = density.kernel_spec
    if spec.family == "gaussian":
        out = centers + np.asarray(spec.params)[j_idx] * rng.standard_normal(count)
    else:
        out = np.array([kernel_sample(spec, c, j, rng) for c, j in zip(centers, j_idx)])
    return float(out[0]) if n is None else out
