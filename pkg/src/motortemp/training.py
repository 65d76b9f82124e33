"""Mini-batch training with Adam and the grouped profile curriculum.

Long recordings do not fit one giant shuffled epoch comfortably, so training
walks the profiles in a few contiguous groups, runs a fixed number of epochs
on each, and finishes with a fine-tuning phase over a random sample of
profiles.  All shuffling and sampling comes from one seeded generator, so a
(config, seed) pair fully determines the run: repeated runs produce
bit-identical parameters and log records.

Losses are reported in standardized target units (the units the optimizer
sees).  Timing information is deliberately kept out of the returned log so
the record stays reproducible; callers that want wall-time print it to
stderr themselves.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Matrix, ShapeError, Tape
from .dataio import ConfigError, DatasetSplit
from .features import (
    FeatureConfig,
    WindowedDataset,
    build_dataset,
    fit_standardization,
)
from .models import ModelParams, count_params, forward_for_training, init_params, predict

__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainingError",
    "mse_loss",
    "adam_step",
    "epoch_batches",
    "partition_groups",
    "train_grouped",
]


class TrainingError(RuntimeError):
    """The optimizer was fed something it cannot recover from."""


@dataclass
class TrainConfig:
    """Optimizer and curriculum knobs; defaults match the reference setup."""

    batch_size: int = 256
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs_per_group: int = 25
    group_count: int = 4
    fine_tune_profiles: int = 8
    fine_tune_epochs: int | None = None  # None: same as epochs_per_group
    seed: int = 0
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.epochs_per_group < 1:
            raise ConfigError("epochs_per_group must be at least 1")
        if self.group_count < 1:
            raise ConfigError("group_count must be at least 1")
        if self.fine_tune_profiles < 0:
            raise ConfigError("fine_tune_profiles must be non-negative")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive when set")


@dataclass
class AdamState:
    """First and second moment accumulators, keyed like params.items()."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        state = cls()
        for name, mat in params.items():
            state.m[name] = np.zeros(mat.shape)
            state.v[name] = np.zeros(mat.shape)
        return state


def mse_loss(predictions, targets) -> float:
    """Mean of squared errors over every entry of two equal-shape arrays."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"mse_loss: shapes {p.shape} and {t.shape} differ")
    if p.size == 0:
        raise ShapeError("mse_loss: empty arrays")
    d = p - t
    return float(np.mean(d * d))


def _mse_graph(pred: Matrix, target: Matrix) -> Matrix:
    # Same mean-of-squares, but expressed in tape ops so it differentiates.
    from .autodiff import add, hadamard, scale, sum_reduce

    diff = add(pred, scale(target, -1.0))
    sq = hadamard(diff, diff)
    return scale(sum_reduce(sq), 1.0 / float(pred.rows * pred.cols))


def adam_step(params: ModelParams, grads: dict, state: AdamState,
              config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place.

    With t the incremented step count and g the (possibly clipped) gradient:

        m <- beta1 m + (1-beta1) g        m_hat = m / (1 - beta1^t)
        v <- beta2 v + (1-beta2) g^2      v_hat = v / (1 - beta2^t)
        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)

    Gradient blocks must align exactly with the parameter blocks; any
    non-finite gradient aborts the step.  When ``clip_norm`` is set the
    whole gradient is rescaled so its global L2 norm does not exceed it.
    """
    names = [name for name, _ in params.items()]
    if set(grads) != set(names):
        missing = sorted(set(names) - set(grads))
        surplus = sorted(set(grads) - set(names))
        raise TrainingError(
            f"gradient blocks misaligned; missing {missing}, unexpected {surplus}"
        )
    gs = {}
    for name in names:
        g = grads[name]
        arr = g.values if isinstance(g, Matrix) else np.asarray(g, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise TrainingError(f"non-finite gradient in block {name!r}")
        gs[name] = arr

    if config.clip_norm is not None:
        total = np.sqrt(sum(float((a * a).sum()) for a in gs.values()))
        if total > config.clip_norm:
            factor = config.clip_norm / total
            gs = {name: a * factor for name, a in gs.items()}

    state.step += 1
    t = state.step
    correct1 = 1.0 - config.beta1 ** t
    correct2 = 1.0 - config.beta2 ** t
    for name, mat in params.items():
        g = gs[name]
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        update = (m / correct1) / (np.sqrt(v / correct2) + config.eps)
        mat.values -= config.learning_rate * update


def epoch_batches(n_windows: int, batch_size: int, rng: np.random.Generator):
    """Seeded random batches covering every window index exactly once."""
    perm = rng.permutation(n_windows)
    return [perm[i:i + batch_size] for i in range(0, n_windows, batch_size)]


def partition_groups(frames: list, group_count: int) -> list[list]:
    """Split profiles into contiguous groups of near-equal size."""
    n = len(frames)
    if n < group_count:
        raise ConfigError(
            f"cannot split {n} profiles into {group_count} non-empty groups"
        )
    base, extra = divmod(n, group_count)
    groups, at = [], 0
    for k in range(group_count):
        size = base + (1 if k < extra else 0)
        groups.append(frames[at:at + size])
        at += size
    return groups


def _train_step(params, state, cfg, stats, inputs, raw_targets):
    targets = stats.transform_targets(raw_targets.reshape(len(inputs), -1))
    with Tape() as tape:
        pred = forward_for_training(params, inputs)
        loss = _mse_graph(pred, Matrix._wrap(targets))
    gradmap = tape.backward(loss, wrt=params.matrices())
    grads = {name: gradmap[tape.node_id(mat)] for name, mat in params.items()}
    adam_step(params, grads, state, cfg)
    return float(loss.values[0, 0])


def _dataset_loss(params, dataset: WindowedDataset, stats, batch_size: int) -> float:
    total, count = 0.0, 0
    for at in range(0, dataset.n_windows, batch_size):
        idx = np.arange(at, min(at + batch_size, dataset.n_windows))
        inputs, raw = dataset.gather(idx)
        pred = predict(params, inputs).reshape(len(idx), -1)
        targets = stats.transform_targets(raw.reshape(len(idx), -1))
        d = pred - targets
        total += float((d * d).sum())
        count += d.size
    return total / count


def _run_phase(params, state, cfg, stats, dataset, heldout, label, epochs,
               rng, logs, epoch_offset, stop_below=None):
    for _ in range(epochs):
        epoch_offset += 1
        started = time.perf_counter()
        total, count = 0.0, 0
        for idx in epoch_batches(dataset.n_windows, cfg.batch_size, rng):
            inputs, raw = dataset.gather(idx)
            loss = _train_step(params, state, cfg, stats, inputs, raw)
            total += loss * len(idx)
            count += len(idx)
        train_loss = total / count
        eval_loss = (
            _dataset_loss(params, heldout, stats, cfg.batch_size)
            if heldout is not None and heldout.n_windows > 0 else None
        )
        logs.append({
            "epoch": epoch_offset,
            "group": label,
            "train_loss": train_loss,
            "eval_loss": eval_loss,
        })
        print(
            f"[{label}] epoch {epoch_offset}: train {train_loss:.6f}"
            + (f" eval {eval_loss:.6f}" if eval_loss is not None else "")
            + f" ({time.perf_counter() - started:.1f}s)",
            file=sys.stderr,
        )
        if stop_below is not None and train_loss < stop_below:
            break
    return epoch_offset


def train_grouped(split: DatasetSplit, feature_config: FeatureConfig,
                  variant: str, config: TrainConfig, hidden: int = 100,
                  stop_below: float | None = None):
    """Train a fresh model over grouped profiles, then fine-tune.

    The training profiles are walked in ``group_count`` contiguous groups
    for ``epochs_per_group`` epochs each, followed by a fine-tuning phase on
    a seeded random sample of ``fine_tune_profiles`` training profiles.
    Standardization statistics are fitted once on all training profiles and
    reused everywhere, including the held-out evaluation after each epoch.

    ``stop_below`` optionally ends a phase early once its epoch training
    loss falls under the threshold (useful for smoke runs); the default is
    to run every epoch.

    Returns (params, logs) where logs is a list of per-epoch records with
    keys epoch, group, train_loss and eval_loss.
    """
    if not split.train:
        raise ConfigError("train_grouped: no training profiles")
    groups = partition_groups(split.train, config.group_count)

    stats = fit_standardization(split.train, feature_config)
    heldout = (
        build_dataset(split.test, feature_config, stats=stats)
        if split.test else None
    )
    if heldout is not None and heldout.n_windows == 0:
        heldout = None

    params = init_params(
        variant, config.seed,
        input_dim=feature_config.channel_count(), hidden=hidden,
    )
    state = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    logs: list[dict] = []
    epoch = 0

    for gi, group in enumerate(groups, start=1):
        dataset = build_dataset(group, feature_config, stats=stats)
        if dataset.n_windows == 0:
            raise ConfigError(
                f"group {gi} has no windows; profiles shorter than the "
                f"window {feature_config.window}?"
            )
        epoch = _run_phase(
            params, state, config, stats, dataset, heldout,
            f"group-{gi}", config.epochs_per_group, rng, logs, epoch,
            stop_below=stop_below,
        )

    ft_epochs = (
        config.fine_tune_epochs
        if config.fine_tune_epochs is not None else config.epochs_per_group
    )
    n_sample = min(config.fine_tune_profiles, len(split.train))
    if n_sample > 0 and ft_epochs > 0:
        picked = sorted(rng.choice(len(split.train), size=n_sample, replace=False))
        sample = [split.train[i] for i in picked]
        dataset = build_dataset(sample, feature_config, stats=stats)
        if dataset.n_windows > 0:
            epoch = _run_phase(
                params, state, config, stats, dataset, heldout,
                "finetune", ft_epochs, rng, logs, epoch,
                stop_below=stop_below,
            )

    print(
        f"trained {variant}: {count_params(params)} parameters, "
        f"{state.step} optimizer steps",
        file=sys.stderr,
    )
    return params, logs
