"""Command line entry point: simulate, train, evaluate, density, sample.

Every command writes ``manifest.json`` into its output directory with the
complete flag set.  Passing that manifest back through ``--config`` reruns
the command with identical settings.

Exit codes: 0 success, 2 validation, 3 I/O, 4 numerical failure.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ConfigError, KernelMixError, ParameterError, TrainingDivergedError
from .evalkit import curve_rows, emit_comparison, emit_heatmap, write_csv
from .filtering.evaluate import ekf_trial_nll, evaluate_filter_nll
from .filtering.model import load_checkpoint, save_checkpoint
from .filtering.simulate import (
    GENERATOR_VERSION,
    OscillatorParams,
    PhaseModelParams,
    params_from_dict,
    read_dataset,
    simulate_dataset,
    write_dataset,
)
from .filtering.train import TrainConfig, train_filter
from .mixture import density_sample
from .rng import derive_rng

EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("kernelmix")


def _load_config(ctx, _param, value):
    if value is None:
        return None
    try:
        data = json.loads(Path(value).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise click.BadParameter(f"cannot read config {value}: {err}") from err
    defaults = data.get("params", data)
    defaults = {k: v for k, v in defaults.items() if k != "config"}
    ctx.default_map = {**(ctx.default_map or {}), **defaults}
    return value


config_option = click.option(
    "--config", type=click.Path(dir_okay=False), callback=_load_config, is_eager=True,
    expose_value=True, help="JSON file of flag defaults (a previous manifest works).",
)
seed_option = click.option("--seed", type=int, default=0, show_default=True)
out_option = click.option("--out", type=click.Path(file_okay=False), required=True,
                          help="Output directory.")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"cannot create output directory {out}: {err}") from err
    return out


def _write_manifest(out: Path, command: str, params: dict, extra: dict | None = None) -> None:
    manifest = {"command": command, "version": __version__, "seed": params.get("seed"),
                "params": params}
    if extra:
        manifest.update(extra)
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _handled(fn):
    """Map package errors to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (ConfigError, ParameterError) as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(EXIT_VALIDATION)
        except OSError as err:
            click.echo(f"I/O error: {err}", err=True)
            sys.exit(EXIT_IO)
        except (KernelMixError, ArithmeticError) as err:
            click.echo(f"numerical error: {err}", err=True)
            sys.exit(EXIT_NUMERICAL)

    return wrapper


def _read_trials(path):
    if not Path(path).exists():
        raise OSError(f"dataset not found: {path}")
    return read_dataset(path)


def _load_model(path):
    if not Path(path).exists():
        raise OSError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in str(text).replace(",", " ").split()]
    except ValueError as err:
        raise ParameterError(f"expected a comma separated list of integers, got {text!r}") from err


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    """Kernel mixture network filters and their baselines."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")


@main.command()
@config_option
@click.option("--experiment", type=click.Choice(["oscillator", "phase"]), default="oscillator",
              show_default=True)
@click.option("--n-train", type=int, default=5000, show_default=True)
@click.option("--n-valid", type=int, default=50, show_default=True)
@click.option("--duration", type=float, default=4.0, show_default=True)
@click.option("--dt", type=float, default=0.01, show_default=True)
@click.option("--noise-scale", type=float, default=5.0, show_default=True,
              help="Oscillator driving-noise amplitude.")
@click.option("--obs-noise-sd", type=float, default=None,
              help="Observation noise sd (default 3 for oscillator, 2 for phase).")
@seed_option
@out_option
@_handled
def simulate(config, experiment, n_train, n_valid, duration, dt, noise_scale, obs_noise_sd, seed, out):
    """Simulate train/valid datasets for one experiment."""
    flags = dict(click.get_current_context().params)
    out = _out_dir(out)
    if experiment == "oscillator":
        params = OscillatorParams(noise_scale=noise_scale, dt=dt, duration=duration,
                                  obs_noise_sd=3.0 if obs_noise_sd is None else obs_noise_sd)
    else:
        params = PhaseModelParams(dt=dt, duration=duration,
                                  obs_noise_sd=2.0 if obs_noise_sd is None else obs_noise_sd)
    for split, n in (("train", n_train), ("valid", n_valid)):
        trials, stats = simulate_dataset(experiment, params, n, seed, split)
        write_dataset(out / f"{split}.jsonl", trials, {
            "experiment": experiment, "split": split, "count": n, "seed": seed,
            "generator_version": GENERATOR_VERSION, "params": asdict(params), **stats,
        })
    _write_manifest(out, "simulate", flags, {"experiment": experiment, "dt": params.dt,
                                             "params_used": asdict(params)})


@main.command()
@config_option
@click.option("--train", "train_path", type=click.Path(dir_okay=False), required=True)
@click.option("--valid", "valid_path", type=click.Path(dir_okay=False), required=True)
@click.option("--head", type=click.Choice(["kmn", "quantized"]), default="kmn", show_default=True)
@click.option("--kernel", type=click.Choice(["gaussian", "von_mises"]), default=None,
              help="Kernel family (default: gaussian on the line, von_mises on the circle).")
@click.option("--window", type=int, default=128, show_default=True)
@click.option("--hidden", default="256,256", show_default=True, help="Hidden layer widths.")
@click.option("--epochs", type=float, default=1.0, show_default=True)
@click.option("--batch-size", type=int, default=64, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--lr-schedule", type=click.Choice(["constant", "cosine"]), default="constant",
              show_default=True)
@click.option("--delta", type=float, default=None, help="Center spacing threshold.")
@click.option("--bin-size", type=float, default=0.25, show_default=True)
@click.option("--eval-every", type=int, default=500, show_default=True)
@click.option("--name", default="", help="Model name used in evaluation output.")
@seed_option
@out_option
@_handled
def train(config, train_path, valid_path, head, kernel, window, hidden, epochs, batch_size, lr,
          lr_schedule, delta, bin_size, eval_every, name, seed, out):
    """Train a kernel mixture or quantized filter."""
    flags = dict(click.get_current_context().params)
    train_trials = _read_trials(train_path)
    valid_trials = _read_trials(valid_path)
    manifold = train_trials[0].manifold
    if kernel is None:
        kernel = "von_mises" if manifold == "circle" else "gaussian"
    if head == "kmn" and (kernel == "von_mises") != (manifold == "circle"):
        raise ConfigError(f"{kernel} kernels do not match {manifold} data")
    cfg = TrainConfig(head=head, kernel=kernel, window=window, hidden=tuple(_int_list(hidden)),
                      epochs=epochs, batch_size=batch_size, learning_rate=lr,
                      lr_schedule=lr_schedule, seed=seed, delta=delta, bin_size=bin_size,
                      eval_every=eval_every, name=name or head)
    out = _out_dir(out)
    try:
        result = train_filter(cfg, train_trials, valid_trials, progress=True)
    except TrainingDivergedError as err:
        save_checkpoint(err.last_good, out / "checkpoint.json")
        with open(out / "curve.csv", "w", encoding="utf-8", newline="\n") as fh:
            write_csv(curve_rows(err.curve), ("iteration", "split", "loss"), fh)
        raise
    save_checkpoint(result.model, out / "checkpoint.json")
    with open(out / "curve.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_csv(curve_rows(result.curve), ("iteration", "split", "loss"), fh)
    _write_manifest(out, "train", flags, {"train_config": cfg.to_dict()})


@main.command()
@config_option
@click.option("--models", "model_paths", multiple=True, required=True,
              type=click.Path(dir_okay=False), help="Checkpoints to score (repeatable).")
@click.option("--valid", "valid_path", type=click.Path(dir_okay=False), required=True)
@click.option("--ekf", is_flag=True, help="Add the EKF baseline (oscillator data only).")
@seed_option
@out_option
@_handled
def evaluate(config, model_paths, valid_path, ekf, seed, out):
    """Per-trial validation NLL of each model, with win rates."""
    flags = dict(click.get_current_context().params)
    flags["model_paths"] = list(model_paths)
    trials = _read_trials(valid_path)
    ids = [tr.trial_id for tr in trials]
    entries = []
    window = None
    for path in model_paths:
        model = _load_model(path)
        window = model.window
        entries.append((model.name or Path(path).stem, ids, evaluate_filter_nll(model, trials)))
    if ekf:
        if trials[0].manifold != "real_line":
            raise ConfigError("the EKF baseline only applies to the oscillator")
        params = params_from_dict("oscillator", trials[0].params)
        entries.append(("ekf", ids, ekf_trial_nll(trials, params, window or 128)))
    out = _out_dir(out)
    with open(out / "scatter.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_csv(emit_comparison(entries), ("trial_id", "model", "mean_nll"), fh)
    _write_manifest(out, "evaluate", flags)


def _find_trial(trials, trial_id):
    for tr in trials:
        if tr.trial_id == trial_id:
            return tr
    raise ParameterError(f"trial {trial_id} not in dataset")


@main.command()
@config_option
@click.option("--model", "model_path", type=click.Path(dir_okay=False), required=True)
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True)
@click.option("--trial", "trial_id", type=int, default=0, show_default=True)
@click.option("--times", default=None, help="Comma separated time indices (default: all).")
@click.option("--n-grid", type=int, default=401, show_default=True)
@seed_option
@out_option
@_handled
def density(config, model_path, data_path, trial_id, times, n_grid, seed, out):
    """Write conditional density slices (t, x, density) for one trial."""
    flags = dict(click.get_current_context().params)
    model = _load_model(model_path)
    trial = _find_trial(_read_trials(data_path), trial_id)
    steps = range(model.window, len(trial)) if times is None else _int_list(times)
    rows = emit_heatmap(model, trial, steps, model.grid(n_grid))
    out = _out_dir(out)
    with open(out / "density.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_csv(rows, ("t", "x", "density"), fh)
    _write_manifest(out, "density", flags)


def _parse_window(text: str, width: int) -> np.ndarray:
    try:
        values = np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError as err:
        raise ParameterError(f"malformed conditioning vector: {err}") from err
    if values.size != width or not np.all(np.isfinite(values)):
        raise ParameterError(f"conditioning vector needs {width} finite values, got {values.size}")
    return values


@main.command()
@config_option
@click.option("--model", "model_path", type=click.Path(dir_okay=False), required=True)
@click.option("--data", "data_path", type=click.Path(dir_okay=False), default=None)
@click.option("--trial", "trial_id", type=int, default=0, show_default=True)
@click.option("--time", "time_index", type=int, default=None,
              help="Condition on the window ending before this index.")
@click.option("--stdin", "from_stdin", is_flag=True, help="Read the conditioning window from stdin.")
@click.option("--n", "n_samples", type=int, default=1000, show_default=True)
@seed_option
@out_option
@_handled
def sample(config, model_path, data_path, trial_id, time_index, from_stdin, n_samples, seed, out):
    """Draw samples from a conditional density."""
    flags = dict(click.get_current_context().params)
    model = _load_model(model_path)
    if from_stdin:
        window = _parse_window(sys.stdin.read(), model.window)
    else:
        if data_path is None:
            raise ParameterError("give --data or --stdin")
        trial = _find_trial(_read_trials(data_path), trial_id)
        t = len(trial) - 1 if time_index is None else time_index
        if t < model.window or t >= len(trial):
            raise ParameterError(f"time index {t} outside [{model.window}, {len(trial)})")
        window = trial.observations[t - model.window : t]
    if n_samples < 0:
        raise ParameterError("--n must be non-negative")
    cond = model.conditional(window)
    rng = derive_rng(seed, "sample")
    if n_samples == 0:
        draws = np.empty(0)
    elif model.head == "kmn":
        draws = density_sample(cond, rng, n_samples)
    else:
        probs = np.exp(cond.logits - cond.logits.max())
        probs /= probs.sum()
        k = rng.choice(len(probs), size=n_samples, p=probs)
        draws = rng.uniform(cond.bin_edges[k], cond.bin_edges[k + 1])
    out = _out_dir(out)
    with open(out / "samples.csv", "w", encoding="utf-8", newline="\n") as fh:
        write_csv(((float(v),) for v in draws), ("x",), fh)
    _write_manifest(out, "sample", flags)


if __name__ == "__main__":
    main()
