"""Quadrature, grid divergences and CSV emission for figures and comparisons."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ParameterError, ShapeError

CLAMP = 1e-300


def fmt(value) -> str:
    """Round-trip decimal text for floats (17 significant digits)."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def integrate_density(density, lo: float, hi: float, n: int = 2001) -> float:
    """Composite Simpson integral of ``density`` over [lo, hi] with n points.

    ``density`` is a callable on arrays or an object with a ``pdf`` method.
    """
    if lo >= hi:
        raise ParameterError("integration needs lo < hi")
    if n < 3 or n % 2 == 0:
        raise ParameterError("Simpson's rule needs an odd number of points >= 3")
    f = density.pdf if hasattr(density, "pdf") else density
    x = np.linspace(lo, hi, n)
    return simpson(np.asarray(f(x), dtype=float), (hi - lo) / (n - 1))


def simpson(values, h: float) -> float:
    """Composite Simpson sum for equally spaced samples (odd count)."""
    y = np.asarray(values, dtype=float)
    if y.size < 3 or y.size % 2 == 0:
        raise ParameterError("Simpson's rule needs an odd number of points >= 3")
    return float(h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum()))


@dataclass(frozen=True)
class GridEval:
    grid: np.ndarray
    values: np.ndarray
    domain: str = "real_line"

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1:
            raise ShapeError("grid and values must be 1-D and aligned")
        if np.any(np.diff(g) <= 0):
            raise ParameterError("grid must be strictly increasing")
        if np.any(v < 0):
            raise ParameterError("density values must be non-negative")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def normalized(self) -> "GridEval":
        return GridEval(self.grid, self.values / np.trapezoid(self.values, self.grid), self.domain)


def grid_kl(p: GridEval, q: GridEval) -> float:
    """Trapezoid estimate of KL(p || q) on a shared grid."""
    if p.grid.shape != q.grid.shape or not np.array_equal(p.grid, q.grid):
        raise ShapeError("KL needs both densities on the same grid")
    if np.any((p.values > 0) & (q.values <= 0)):
        raise ParameterError("q vanishes where p has mass")
    pv = p.values
    integrand = np.where(pv > 0, pv * (np.log(np.maximum(pv, CLAMP)) - np.log(np.maximum(q.values, CLAMP))), 0.0)
    return float(np.trapezoid(integrand, p.grid))


def write_csv(rows, header, fh=None) -> str:
    """Write rows with a single header; returns the text when ``fh`` is None."""
    out = io.StringIO() if fh is None else fh
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return out.getvalue() if fh is None else ""


def emit_heatmap(model, trial, times, states=None):
    """Rows ``(t, x, density)`` of the conditional density over times x states.

    ``times`` index the trial's samples and must be >= the model window.
    """
    times = [int(t) for t in times]
    window = model.window
    for t in times:
        if t < window or t >= len(trial):
            raise ParameterError(f"time index {t} outside [{window}, {len(trial)})")
    states = model.grid() if states is None else np.asarray(states, dtype=float)
    windows = np.stack([trial.observations[t - window : t] for t in times])
    dens = np.exp(model.log_density_grid(states, windows))
    rows = []
    for t, row in zip(times, dens):
        rows.extend((t, float(x), float(d)) for x, d in zip(states, row))
    return rows


def curve_rows(curve):
    return [(int(i), split, float(loss)) for i, split, loss in curve]


def win_rate(a, b) -> float:
    """Fraction of trials where ``a`` has lower NLL than ``b``; ties count half."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeError("win rate needs aligned trial lists")
    return float(np.mean((a < b) + 0.5 * (a == b)))


def emit_comparison(entries):
    """Scatter rows plus summaries for per-trial NLL lists.

    ``entries`` is a list of ``(model_name, trial_ids, nlls)``.  Output rows
    are ``(trial_id, model, mean_nll)``: one per trial and model, then a
    ``mean`` row per model (the center of mass), then a ``winrate`` row per
    model pair ``A>B`` holding the fraction of trials A wins.
    """
    if not entries:
        return []
    ids = list(entries[0][1])
    for name, tids, nlls in entries:
        if list(tids) != ids or len(nlls) != len(ids):
            raise ShapeError(f"trials of {name!r} are not aligned with {entries[0][0]!r}")
    rows = []
    for name, tids, nlls in entries:
        rows.extend((tid, name, float(v)) for tid, v in zip(tids, nlls))
    for name, _, nlls in entries:
        rows.append(("mean", name, float(np.mean(nlls))))
    for (na, _, a), (nb, _, b) in combinations(entries, 2):
        rows.append(("winrate", f"{na}>{nb}", win_rate(a, b)))
    return rows
