"""Feature engineering: derived electrical quantities, EWMA banks, windows.

The model never sees raw sensor columns directly.  Each profile is expanded
into a fixed channel layout: the predictor attributes plus six derived
electrical quantities, each as the raw series and as exponentially weighted
moving averages at four spans.  With the defaults that is (7 + 6) * (1 + 4)
= 65 channels.  Channels are standardized with statistics fitted on training
profiles only; targets stay in degrees Celsius until the training loop.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .dataio import ProfileFrame, SchemaError

__all__ = [
    "PREDICTORS",
    "TARGETS",
    "SYNTHETIC_SETS",
    "DEFAULT_SPANS",
    "FeatureConfig",
    "Standardization",
    "FeatureTensor",
    "WindowedDataset",
    "UndefinedCorrelationError",
    "derive_synthetic",
    "ewma",
    "avg_abs_correlation",
    "channel_matrix",
    "target_matrix",
    "fit_standardization",
    "standardize",
    "build_dataset",
    "windowize",
]

# Input attributes fed to the models, in channel order.
PREDICTORS = ("ambient", "coolant", "u_d", "u_q", "i_d", "i_q", "motor_speed")

# Temperatures the models predict, in output order.
TARGETS = ("stator_winding", "stator_tooth", "stator_yoke", "pm")

# Named selections of derived electrical quantities.
SYNTHETIC_SETS = {
    "imc-smc": ("U", "I", "S", "P", "IMC", "SMC"),
    "imm-smm": ("U", "I", "S", "P", "IMM", "SMM"),
    "all": ("U", "I", "S", "P", "IMM", "SMM", "IMC", "SMC"),
}

DEFAULT_SYNTHETIC = SYNTHETIC_SETS["imc-smc"]

# Smoothing spans in samples (11, 28, 53 and 79 minutes at 2 Hz).
DEFAULT_SPANS = (1320, 3360, 6360, 9480)

_SYNTHETIC_SOURCES = ("u_d", "u_q", "i_d", "i_q", "motor_speed", "coolant")


class UndefinedCorrelationError(ValueError):
    """Correlation against a zero-variance series is undefined."""


@dataclass(frozen=True)
class FeatureConfig:
    """Channel layout and windowing choices, hashable and serializable."""

    predictors: tuple = PREDICTORS
    synthetic: tuple = DEFAULT_SYNTHETIC
    spans: tuple = DEFAULT_SPANS
    include_raw: bool = True
    window: int = 180
    stride: int = 1
    standardize_targets: bool = True

    def __post_init__(self):
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "synthetic", tuple(self.synthetic))
        object.__setattr__(self, "spans", tuple(int(s) for s in self.spans))
        unknown = [s for s in self.synthetic if s not in SYNTHETIC_SETS["all"]]
        if unknown:
            raise ValueError(f"unknown synthetic quantities: {unknown}")
        if any(s < 1 for s in self.spans):
            raise ValueError(f"spans must be positive, got {self.spans}")
        if list(self.spans) != sorted(set(self.spans)):
            raise ValueError(f"spans must be strictly increasing, got {self.spans}")
        if self.window < 1:
            raise ValueError("window must be at least 1")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if not self.include_raw and not self.spans:
            raise ValueError("need raw channels or at least one span")

    @classmethod
    def with_synthetic_set(cls, name: str, **kwargs) -> "FeatureConfig":
        if name not in SYNTHETIC_SETS:
            raise ValueError(
                f"unknown synthetic set {name!r}; choose from {sorted(SYNTHETIC_SETS)}"
            )
        return cls(synthetic=SYNTHETIC_SETS[name], **kwargs)

    def attribute_names(self) -> tuple:
        return self.predictors + self.synthetic

    def channel_count(self) -> int:
        blocks = (1 if self.include_raw else 0) + len(self.spans)
        return len(self.attribute_names()) * blocks

    def channel_names(self) -> list[str]:
        attrs = self.attribute_names()
        names = list(attrs) if self.include_raw else []
        for span in self.spans:
            names.extend(f"{a}_ewma{span}" for a in attrs)
        return names

    def to_dict(self) -> dict:
        return {
            "predictors": list(self.predictors),
            "synthetic": list(self.synthetic),
            "spans": list(self.spans),
            "include_raw": self.include_raw,
            "window": self.window,
            "stride": self.stride,
            "standardize_targets": self.standardize_targets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


def derive_synthetic(frame: ProfileFrame, selection=DEFAULT_SYNTHETIC) -> ProfileFrame:
    """Add derived electrical quantities as new columns on a copied frame.

    U, I are the dq-frame voltage and current magnitudes, S = U*I the
    apparent power, P = u_d*i_d + u_q*i_q the active power; IMM/SMM multiply
    current and apparent power with motor speed, IMC/SMC with the coolant
    temperature.
    """
    frame.require(_SYNTHETIC_SOURCES)
    c = frame.columns
    voltage = np.hypot(c["u_d"], c["u_q"])
    current = np.hypot(c["i_d"], c["i_q"])
    apparent = voltage * current
    formulas = {
        "U": voltage,
        "I": current,
        "S": apparent,
        "P": c["u_d"] * c["i_d"] + c["u_q"] * c["i_q"],
        "IMM": current * c["motor_speed"],
        "SMM": apparent * c["motor_speed"],
        "IMC": current * c["coolant"],
        "SMC": apparent * c["coolant"],
    }
    unknown = [s for s in selection if s not in formulas]
    if unknown:
        raise ValueError(f"unknown synthetic quantities: {unknown}")
    cols = dict(frame.columns)
    for name in selection:
        cols[name] = formulas[name]
    return ProfileFrame(frame.profile_id, cols, sample_period=frame.sample_period)


def ewma(series, span: int) -> np.ndarray:
    """Exponentially weighted moving average with finite-history weights.

    With alpha = 2 / (span + 1), entry t is

        sum_{i=0..t} (1-alpha)^i x[t-i]  /  sum_{i=0..t} (1-alpha)^i

    i.e. the weights are renormalized over the samples actually seen, so
    early entries are unbiased instead of damped toward zero.  Both the
    numerator and denominator follow the same one-pole recurrence, which
    lfilter evaluates in C.
    """
    if span < 1:
        raise ValueError(f"span must be a positive sample count, got {span}")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"ewma expects a 1-D series, got shape {x.shape}")
    if x.size == 0:
        return x.copy()
    alpha = 2.0 / (span + 1.0)
    decay = 1.0 - alpha
    num = lfilter([1.0], [1.0, -decay], x)
    den = lfilter([1.0], [1.0, -decay], np.ones_like(x))
    return num / den


def avg_abs_correlation(frames, candidate: str, targets=TARGETS) -> float:
    """Mean absolute Pearson correlation of one attribute against the targets.

    Series are concatenated across the given frames before correlating.
    """
    frames = list(frames)
    if not frames:
        raise ValueError("avg_abs_correlation: no frames given")
    for f in frames:
        f.require((candidate, *targets))
    cand = np.concatenate([f.columns[candidate] for f in frames])
    if np.std(cand) == 0.0:
        raise UndefinedCorrelationError(
            f"attribute {candidate!r} has zero variance"
        )
    total = 0.0
    for tname in targets:
        tgt = np.concatenate([f.columns[tname] for f in frames])
        if np.std(tgt) == 0.0:
            raise UndefinedCorrelationError(
                f"attribute {tname!r} has zero variance"
            )
        r = np.corrcoef(cand, tgt)[0, 1]
        total += abs(r)
    return total / len(targets)


def channel_matrix(frame: ProfileFrame, config: FeatureConfig) -> np.ndarray:
    """The (n_samples, channel_count) feature block for one profile.

    Columns follow ``config.channel_names()``: the raw attributes first
    (when enabled), then one EWMA block per span.  Smoothing never crosses
    the profile boundary because it only ever sees this frame's series.
    """
    augmented = derive_synthetic(frame, config.synthetic)
    augmented.require(config.attribute_names())
    attrs = [augmented.columns[a] for a in config.attribute_names()]
    blocks = []
    if config.include_raw:
        blocks.extend(attrs)
    for span in config.spans:
        blocks.extend(ewma(a, span) for a in attrs)
    return np.column_stack(blocks)


def target_matrix(frame: ProfileFrame) -> np.ndarray:
    """The (n_samples, 4) temperature block in output order."""
    frame.require(TARGETS)
    return np.column_stack([frame.columns[t] for t in TARGETS])


@dataclass
class Standardization:
    """Affine per-channel transform fitted on training profiles."""

    channel_names: tuple
    channel_mean: np.ndarray
    channel_std: np.ndarray
    target_names: tuple
    target_mean: np.ndarray
    target_std: np.ndarray
    standardize_targets: bool = True

    def transform_channels(self, x: np.ndarray) -> np.ndarray:
        return (x - self.channel_mean) / self.channel_std

    def transform_targets(self, t: np.ndarray) -> np.ndarray:
        if not self.standardize_targets:
            return np.asarray(t, dtype=np.float64).copy()
        return (t - self.target_mean) / self.target_std

    def untransform_predictions(self, p: np.ndarray) -> np.ndarray:
        if not self.standardize_targets:
            return np.asarray(p, dtype=np.float64).copy()
        return p * self.target_std + self.target_mean

    def to_dict(self) -> dict:
        return {
            "channel_names": list(self.channel_names),
            "channel_mean": self.channel_mean.tolist(),
            "channel_std": self.channel_std.tolist(),
            "target_names": list(self.target_names),
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
            "standardize_targets": self.standardize_targets,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(
            channel_names=tuple(d["channel_names"]),
            channel_mean=np.asarray(d["channel_mean"], dtype=np.float64),
            channel_std=np.asarray(d["channel_std"], dtype=np.float64),
            target_names=tuple(d["target_names"]),
            target_mean=np.asarray(d["target_mean"], dtype=np.float64),
            target_std=np.asarray(d["target_std"], dtype=np.float64),
            standardize_targets=bool(d.get("standardize_targets", True)),
        )


# Constant channels would otherwise divide by zero; anything below this
# floor is treated as degenerate and left unscaled in practice.
STD_FLOOR = 1e-8


def fit_standardization(frames, config: FeatureConfig) -> Standardization:
    """Fit per-channel and per-target statistics over the given frames."""
    frames = list(frames)
    if not frames:
        raise ValueError("fit_standardization: no frames given")
    chans = np.concatenate([channel_matrix(f, config) for f in frames], axis=0)
    tgts = np.concatenate([target_matrix(f) for f in frames], axis=0)
    return Standardization(
        channel_names=tuple(config.channel_names()),
        channel_mean=chans.mean(axis=0),
        channel_std=np.maximum(chans.std(axis=0), STD_FLOOR),
        target_names=TARGETS,
        target_mean=tgts.mean(axis=0),
        target_std=np.maximum(tgts.std(axis=0), STD_FLOOR),
        standardize_targets=config.standardize_targets,
    )


def standardize(channel_mats, config: FeatureConfig = None, stats: Standardization = None):
    """Apply (or fit, then apply) the affine channel transform.

    Pass fitted ``stats`` to reuse training statistics on held-out data;
    otherwise ``config`` is required and statistics are computed from the
    given matrices.  Returns (transformed list, stats).
    """
    mats = [np.asarray(m, dtype=np.float64) for m in channel_mats]
    if stats is None:
        if config is None:
            raise ValueError("standardize: need a config to fit fresh stats")
        all_rows = np.concatenate(mats, axis=0)
        stats = Standardization(
            channel_names=tuple(config.channel_names()),
            channel_mean=all_rows.mean(axis=0),
            channel_std=np.maximum(all_rows.std(axis=0), STD_FLOOR),
            target_names=TARGETS,
            target_mean=np.zeros(len(TARGETS)),
            target_std=np.ones(len(TARGETS)),
            standardize_targets=config.standardize_targets,
        )
    return [stats.transform_channels(m) for m in mats], stats


@dataclass
class FeatureTensor:
    """Materialized sliding windows: inputs, final-step targets, provenance."""

    inputs: np.ndarray      # (windows, window_len, channels)
    targets: np.ndarray     # (windows, 1, len(TARGETS)), degrees Celsius
    provenance: list        # [(profile_id, end_index), ...]

    @property
    def n_windows(self) -> int:
        return self.inputs.shape[0]

    def gather(self, idx) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(idx, dtype=np.intp)
        return self.inputs[idx], self.targets[idx]


@dataclass
class WindowedDataset:
    """Window index over per-profile channel matrices.

    Windows are gathered on demand, so a long recording never has to hold
    every (window, channels) slice in memory at once.
    """

    channels: list          # per frame: (n_i, channels)
    targets: list           # per frame: (n_i, len(TARGETS)), degrees Celsius
    profile_ids: list
    window: int
    index: np.ndarray       # (windows, 2): frame index, start offset

    @property
    def n_windows(self) -> int:
        return len(self.index)

    def gather(self, idx) -> tuple[np.ndarray, np.ndarray]:
        """Materialize the requested windows as (inputs, targets) arrays."""
        idx = np.asarray(idx, dtype=np.intp)
        w = self.window
        inputs = np.empty((len(idx), w, self.channels[0].shape[1]))
        targets = np.empty((len(idx), 1, self.targets[0].shape[1]))
        for k, row in enumerate(idx):
            fi, start = self.index[row]
            inputs[k] = self.channels[fi][start:start + w]
            targets[k, 0] = self.targets[fi][start + w - 1]
        return inputs, targets

    def provenance(self) -> list:
        return [
            (self.profile_ids[fi], int(start) + self.window - 1)
            for fi, start in self.index
        ]

    def materialize(self) -> FeatureTensor:
        inputs, targets = self.gather(np.arange(self.n_windows))
        return FeatureTensor(inputs, targets, self.provenance())


def build_dataset(frames, config: FeatureConfig,
                  stats: Standardization = None) -> WindowedDataset:
    """Featurize frames into a window index, optionally standardized.

    Frames shorter than the window are skipped with a warning.  When
    ``stats`` is given the channel transform is applied; targets are always
    kept in degrees Celsius.
    """
    channels, targets, pids, index_rows = [], [], [], []
    for frame in frames:
        n = frame.n_samples
        if n < config.window:
            warnings.warn(
                f"profile {frame.profile_id}: {n} samples is shorter than "
                f"window {config.window}; skipped",
                stacklevel=2,
            )
            continue
        chan = channel_matrix(frame, config)
        if stats is not None:
            chan = stats.transform_channels(chan)
        fi = len(channels)
        channels.append(chan)
        targets.append(target_matrix(frame))
        pids.append(frame.profile_id)
        starts = np.arange(0, n - config.window + 1, config.stride)
        index_rows.append(
            np.column_stack([np.full(len(starts), fi), starts])
        )
    index = (
        np.concatenate(index_rows, axis=0)
        if index_rows else np.empty((0, 2), dtype=np.intp)
    ).astype(np.intp)
    return WindowedDataset(channels, targets, pids, config.window, index)


def windowize(frames, config: FeatureConfig,
              stats: Standardization = None) -> FeatureTensor:
    """Materialized sliding windows for a set of frames.

    Without ``stats`` the inputs are raw feature channels, which keeps the
    provenance invertible back to the source series.
    """
    return build_dataset(frames, config, stats=stats).materialize()
