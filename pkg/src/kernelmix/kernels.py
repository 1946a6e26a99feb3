"""Kernel families used as mixture components.

Three families are supported:

* ``gaussian`` on the real line, parameterized by bandwidths sigma_j;
* ``von_mises`` on the circle, parameterized by concentrations kappa_j;
* ``rectangular`` on the real line, parameterized by bin edges.  A rectangular
  kernel attached to a center is the uniform density on the bin holding that
  center, which is how a quantized softmax is written as a kernel mixture.

All evaluators accept numpy arrays and broadcast.  The log-space evaluators
are the primary path; the linear ones exponentiate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

FAMILIES = ("gaussian", "von_mises", "rectangular")
MANIFOLDS = ("real_line", "circle")

_LOG_2PI = math.log(2.0 * math.pi)
_SERIES_LIMIT = 50.0


def wrap_angle(theta):
    """Map angles to the half-open interval (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.pi - np.mod(np.pi - theta, 2.0 * np.pi)
    return wrapped if wrapped.ndim else float(wrapped)


def circular_distance(a, b):
    """Absolute angular separation in [0, pi]."""
    d = np.abs(np.mod(np.asarray(a, dtype=float) - b + np.pi, 2.0 * np.pi) - np.pi)
    return d if d.ndim else float(d)


@dataclass(frozen=True)
class KernelSpec:
    """A kernel family plus its parameter grid.

    ``params`` holds bandwidths for ``gaussian``, concentrations for
    ``von_mises`` and strictly increasing bin edges for ``rectangular``.
    """

    family: str
    params: tuple[float, ...]
    manifold: str = ""

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown kernel family {self.family!r}")
        expected = "circle" if self.family == "von_mises" else "real_line"
        if not self.manifold:
            object.__setattr__(self, "manifold", expected)
        if self.manifold != expected:
            raise ParameterError(
                f"{self.family} kernels live on {expected}, not {self.manifold}"
            )
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if not params:
            raise ParameterError("kernel parameter list is empty")
        if not all(math.isfinite(p) for p in params):
            raise ParameterError("kernel parameters must be finite")
        if self.family == "rectangular":
            if len(params) < 2 or any(b <= a for a, b in zip(params, params[1:])):
                raise ParameterError("bin edges must be strictly increasing")
        elif any(p <= 0 for p in params):
            raise ParameterError(f"{self.family} parameters must be positive")

    @property
    def n_kernels(self) -> int:
        """Kernels attached to each center."""
        return 1 if self.family == "rectangular" else len(self.params)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params), "manifold": self.manifold}

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        return cls(data["family"], tuple(data["params"]), data.get("manifold", ""))


def _arith_grid(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step)) + 1
    return tuple(lo + k * step for k in range(n))


def gaussian_grid(lo: float = 0.25, hi: float = 2.75, step: float = 0.5) -> KernelSpec:
    """Gaussian bandwidths lo, lo+step, ..., hi (defaults give six kernels)."""
    return KernelSpec("gaussian", _arith_grid(lo, hi, step))


def von_mises_grid(
    lo: float = math.pi / 250, hi: float = 2 * math.pi / 25, step: float = math.pi / 250
) -> KernelSpec:
    """Von Mises kernels whose scales 1/sqrt(kappa) run from lo to hi."""
    scales = _arith_grid(lo, hi, step)
    return KernelSpec("von_mises", tuple(1.0 / s**2 for s in scales))


def rectangular_bins(lo: float = -6.0, hi: float = 6.0, width: float = 0.25) -> KernelSpec:
    """Equal-width bins covering [lo, hi]."""
    n = int(round((hi - lo) / width))
    return KernelSpec("rectangular", tuple(lo + k * width for k in range(n + 1)))


# --- Gaussian ---------------------------------------------------------------


def gaussian_logpdf(x, center, sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ParameterError("gaussian bandwidth must be positive")
    z = (np.asarray(x, dtype=float) - center) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI


def gaussian_eval(x, center, sigma):
    """Normal density with mean ``center`` and standard deviation ``sigma``."""
    out = np.exp(gaussian_logpdf(x, center, sigma))
    return out if np.ndim(out) else float(out)


# --- Bessel I0 --------------------------------------------------------------


def _i0_series(x: float) -> float:
    # sum (x/2)^{2k} / (k!)^2, stopping on the relative size of the term
    q = 0.25 * x * x
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        term *= q / (k * k)
        total += term
        if term < 1e-17 * total:
            return total


def _log_i0_asymptotic(x: float) -> float:
    # e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! (8x)^k), summed until the
    # terms stop shrinking or drop below machine precision
    total = 1.0
    term = 1.0
    k = 0
    while True:
        k += 1
        nxt = term * (2 * k - 1) ** 2 / (k * 8.0 * x)
        if nxt >= term or nxt < 1e-17:
            break
        term = nxt
        total += term
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def log_bessel_i0(x):
    """Natural log of the modified Bessel function I0, safe for large x."""
    arr = np.abs(np.asarray(x, dtype=float))
    flat = [
        math.log(_i0_series(v)) if v <= _SERIES_LIMIT else _log_i0_asymptotic(v)
        for v in arr.ravel()
    ]
    out = np.array(flat).reshape(arr.shape)
    return out if out.ndim else float(out)


def bessel_i0(x):
    """Modified Bessel function of the first kind, order zero."""
    arr = np.abs(np.asarray(x, dtype=float))
    flat = [
        _i0_series(v) if v <= _SERIES_LIMIT else math.exp(_log_i0_asymptotic(v))
        for v in arr.ravel()
    ]
    out = np.array(flat).reshape(arr.shape)
    return out if out.ndim else float(out)


# --- von Mises --------------------------------------------------------------


def von_mises_logpdf(theta, center, kappa):
    kappa = np.asarray(kappa, dtype=float)
    if np.any(kappa <= 0):
        raise ParameterError("von Mises concentration must be positive")
    delta = np.asarray(theta, dtype=float) - center
    return kappa * np.cos(delta) - _LOG_2PI - log_bessel_i0(kappa)


def von_mises_eval(theta, center, kappa):
    """Von Mises density exp(kappa cos(theta - center)) / (2 pi I0(kappa)).

    The exponent carries a plus sign so the density peaks at ``center``.
    """
    out = np.exp(von_mises_logpdf(theta, center, kappa))
    return out if np.ndim(out) else float(out)


# --- rectangular ------------------------------------------------------------


def rectangular_eval(x, lo, hi):
    """Uniform density on the half-open interval [lo, hi)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo >= hi):
        raise ParameterError("rectangular kernel needs lo < hi")
    x = np.asarray(x, dtype=float)
    out = np.where((x >= lo) & (x < hi), 1.0 / (hi - lo), 0.0)
    return out if out.ndim else float(out)


def bin_index(x, edges):
    """Index of the bin [e_k, e_{k+1}) holding each x, or -1 outside the range."""
    edges = np.asarray(edges, dtype=float)
    idx = np.searchsorted(edges, np.asarray(x, dtype=float), side="right") - 1
    return np.where((idx >= 0) & (idx < len(edges) - 1), idx, -1)


# --- kernel matrices --------------------------------------------------------


def log_kernel_matrix(spec: KernelSpec, x, centers) -> np.ndarray:
    """Log kernel values for every (point, center, kernel) triple.

    Returns an array of shape ``(len(x), len(centers) * spec.n_kernels)``,
    flattened center-major so that column ``p * J + j`` pairs center p with
    kernel j.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))[:, None, None]
    centers = np.asarray(centers, dtype=float)[None, :, None]
    if spec.family == "gaussian":
        sig = np.asarray(spec.params)[None, None, :]
        z = (x - centers) / sig
        out = -0.5 * z * z - np.log(sig) - 0.5 * _LOG_2PI
    elif spec.family == "von_mises":
        kap = np.asarray(spec.params)
        out = kap[None, None, :] * np.cos(x - centers) - (_LOG_2PI + log_bessel_i0(kap))[None, None, :]
    else:
        edges = np.asarray(spec.params)
        cbin = bin_index(centers[0, :, 0], edges)
        if np.any(cbin < 0):
            raise ParameterError("rectangular kernel centers must lie inside the bins")
        xbin = bin_index(x[:, 0, 0], edges)
        widths = np.diff(edges)[cbin]
        with np.errstate(divide="ignore"):
            out = np.where(xbin[:, None] == cbin[None, :], -np.log(widths)[None, :], -np.inf)
        out = out[:, :, None]
    return out.reshape(out.shape[0], -1)


# --- sampling ---------------------------------------------------------------


def _sample_von_mises(center: float, kappa: float, rng: np.random.Generator) -> float:
    if kappa > 1e6:
        return wrap_angle(center + rng.standard_normal() / math.sqrt(kappa))
    if kappa < 1e-5:
        r = 1.0 / kappa + kappa
    else:
        tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
        r = (1.0 + rho * rho) / (2.0 * rho)
    # Best & Fisher (1979) wrapped-Cauchy envelope rejection
    while True:
        u1, u2, u3 = rng.random(3)
        z = math.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        if c * (2.0 - c) - u2 > 0.0 or (u2 > 0.0 and math.log(c / u2) + 1.0 - c >= 0.0):
            break
    theta = math.acos(min(1.0, max(-1.0, f)))
    if u3 < 0.5:
        theta = -theta
    return wrap_angle(center + theta)


def kernel_sample(spec: KernelSpec, center: float, param_index: int, rng: np.random.Generator) -> float:
    """Draw one point from kernel ``param_index`` of ``spec`` placed at ``center``.

    Circle draws are reported in (-pi, pi].  For rectangular kernels
    ``param_index`` is ignored; the bin is the one holding ``center``.
    """
    if spec.family == "gaussian":
        return float(center + spec.params[param_index] * rng.standard_normal())
    if spec.family == "von_mises":
        return _sample_von_mises(float(center), spec.params[param_index], rng)
    k = int(bin_index(center, spec.params))
    if k < 0:
        raise ParameterError("rectangular kernel center lies outside the bins")
    return float(rng.uniform(spec.params[k], spec.params[k + 1]))
