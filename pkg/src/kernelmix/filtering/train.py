"""Mini-batch training of kernel-mixture and quantized filters."""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from ..kernels import KernelSpec, gaussian_grid, rectangular_bins, von_mises_grid
from ..mixture import kmn_nll, quantized_nll, select_centers
from ..ndnet import OptimizerState, init_dense_net, optimizer_step
from ..rng import derive_rng
from .model import FilterModel
from .pairs import PairIndex
from .simulate import TrialRecord

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    head: str = "kmn"
    kernel: str = "gaussian"  # gaussian | von_mises
    window: int = 128
    hidden: tuple[int, ...] = (256, 256)
    epochs: float = 1.0
    batch_size: int = 64
    learning_rate: float = 1e-3
    lr_schedule: str = "constant"  # constant | cosine
    seed: int = 0
    delta: float | None = None  # center spacing; None: a tenth of the narrowest kernel
    bin_size: float = 0.25
    bin_range: tuple[float, float] = (-6.0, 6.0)
    circle_bins: int = 48
    eval_every: int = 500
    max_valid_pairs: int = 20000
    weight_eps: float = 1e-12
    name: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    model: FilterModel
    curve: list[tuple[int, str, float]] = field(default_factory=list)
    seconds: float = 0.0


def kernel_spec_for(config: TrainConfig, manifold: str) -> KernelSpec:
    spec = von_mises_grid() if config.kernel == "von_mises" else gaussian_grid()
    if spec.manifold != manifold:
        raise ConfigError(f"{config.kernel} kernels do not fit {manifold} data")
    return spec


def default_delta(spec: KernelSpec) -> float:
    if spec.family == "von_mises":
        return 0.1 / math.sqrt(max(spec.params))
    return 0.1 * min(spec.params)


def bin_edges_for(config: TrainConfig, manifold: str) -> np.ndarray:
    if manifold == "circle":
        return np.linspace(-np.pi, np.pi, config.circle_bins + 1)
    lo, hi = config.bin_range
    return np.asarray(rectangular_bins(lo, hi, config.bin_size).params)


def build_model(config: TrainConfig, index: PairIndex, manifold: str) -> FilterModel:
    """Fresh, untrained filter whose head is sized from the training targets."""
    std = index.fit_standardizer()
    dims = [config.window, *config.hidden]
    rng = derive_rng(config.seed, "init")
    if config.head == "kmn":
        spec = kernel_spec_for(config, manifold)
        delta = default_delta(spec) if config.delta is None else config.delta
        centers = select_centers(index.targets(), delta, manifold)
        net = init_dense_net(dims + [len(centers) * spec.n_kernels], ("relu", "rectified_quadratic"), rng)
        return FilterModel("kmn", net, config.window, std, manifold, centers, spec,
                           weight_eps=config.weight_eps, name=config.name or "kmn")
    if config.head != "quantized":
        raise ConfigError(f"unknown head {config.head!r}")
    edges = bin_edges_for(config, manifold)
    net = init_dense_net(dims + [len(edges) - 1], ("relu", "linear"), rng)
    return FilterModel("quantized", net, config.window, std, manifold, bin_edges=edges,
                       weight_eps=0.0, name=config.name or "quantized")


def _batch_loss(model: FilterModel, targets, feats):
    if model.head == "kmn":
        return kmn_nll(targets, feats, model.net, model.center_set, model.kernel_spec, model.weight_eps)
    return quantized_nll(model._quantized_targets(targets), feats, model.net, model.bin_edges)


def mean_nll(model: FilterModel, targets, windows, chunk: int = 4096) -> float:
    total = 0.0
    for i in range(0, len(targets), chunk):
        lp = model.log_density(targets[i : i + chunk], windows[i : i + chunk])
        total += float(-np.maximum(lp, -690.7755278982137).sum())
    return total / len(targets)


def train_filter(config: TrainConfig, train_trials: list[TrialRecord],
                 valid_trials: list[TrialRecord], progress: bool = False) -> TrainResult:
    """Train a filter on (x_t, y_{t-L..t-1}) pairs and record loss curves.

    Curve rows are ``(iteration, split, loss)``: the running mean training
    loss since the previous evaluation and the validation NLL.  On a
    non-finite loss the error carries the last evaluated model.
    """
    start = time.perf_counter()
    manifold = train_trials[0].manifold
    if any(tr.manifold != manifold for tr in list(train_trials) + list(valid_trials)):
        raise ConfigError("training and validation trials mix manifolds")
    if config.head == "kmn":
        kernel_spec_for(config, manifold)
    index = PairIndex(train_trials, config.window)
    model = build_model(config, index, manifold)
    net = model.net

    vindex = PairIndex(valid_trials, config.window)
    vrows = np.arange(len(vindex))
    if len(vrows) > config.max_valid_pairs:
        vrows = np.sort(derive_rng(config.seed, "valid-subset").choice(len(vrows), config.max_valid_pairs, replace=False))
    v_targets, v_windows = vindex.gather(vrows)

    steps_per_epoch = max(1, len(index) // config.batch_size)
    total_steps = max(1, int(round(config.epochs * steps_per_epoch)))
    opt = OptimizerState("adam", config.learning_rate)
    params = net.params
    curve: list[tuple[int, str, float]] = [(0, "valid", mean_nll(model, v_targets, v_windows))]
    last_good = copy.deepcopy(model)
    running, running_n = 0.0, 0
    step = 0
    epoch = 0
    while step < total_steps:
        order = derive_rng(config.seed, "batches", epoch).permutation(len(index))
        for b in range(steps_per_epoch):
            if step >= total_steps:
                break
            rows = order[b * config.batch_size : (b + 1) * config.batch_size]
            targets, windows = index.gather(rows)
            loss, grads = _batch_loss(model, targets, model.standardizer(windows))
            if not math.isfinite(loss):
                err = TrainingDivergedError(f"loss became {loss} at iteration {step + 1}")
                err.last_good, err.curve = last_good, curve
                raise err
            if config.lr_schedule == "cosine":
                opt.learning_rate = config.learning_rate * 0.5 * (1 + math.cos(math.pi * step / total_steps))
            try:
                optimizer_step(opt, params, grads)
            except TrainingDivergedError as err:
                err.last_good, err.curve = last_good, curve
                raise
            step += 1
            running += loss
            running_n += 1
            if step % config.eval_every == 0 or step == total_steps:
                v = mean_nll(model, v_targets, v_windows)
                curve.append((step, "train", running / running_n))
                curve.append((step, "valid", v))
                running, running_n = 0.0, 0
                if math.isfinite(v):
                    last_good = copy.deepcopy(model)
                if progress:
                    log.info("%s step %d/%d train %.4f valid %.4f", model.name, step, total_steps,
                             curve[-2][2], v)
        epoch += 1
    return TrainResult(model, curve, time.perf_counter() - start)
