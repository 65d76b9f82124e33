"""Held-out evaluation: error metrics, prediction traces, inference timing.

Note on naming: alongside the mean squared error the report carries the
maximum absolute error per target, the worst single deviation in degrees
Celsius.  That is the quantity a thermal protection engineer cares about,
since it bounds how far a derating controller could be misled.
"""

from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass

import numpy as np

from .features import TARGETS, Standardization
from .models import ModelParams, predict

__all__ = [
    "EvaluationError",
    "EvalReport",
    "compute_metrics",
    "collect_predictions",
    "evaluate",
    "emit_traces",
    "time_inference",
]


class EvaluationError(ValueError):
    """Evaluation was asked to run on unusable data."""


@dataclass
class EvalReport:
    """Per-target and pooled error metrics over a test set."""

    target_names: tuple
    mse: dict            # target -> mean squared error
    max_abs_error: dict  # target -> worst absolute deviation
    overall_mse: float
    overall_max_abs_error: float
    n_windows: int
    standardized_units: bool = False

    def to_dict(self) -> dict:
        return {
            "target_names": list(self.target_names),
            "mse": dict(self.mse),
            "max_abs_error": dict(self.max_abs_error),
            "overall_mse": self.overall_mse,
            "overall_max_abs_error": self.overall_max_abs_error,
            "n_windows": self.n_windows,
            "standardized_units": self.standardized_units,
        }

    def to_text(self) -> str:
        unit = "std units" if self.standardized_units else "degC"
        width = max(len(t) for t in self.target_names)
        lines = [
            f"evaluated {self.n_windows} windows ({unit})",
            f"{'target':<{width}}  {'mse':>12}  {'max |err|':>12}",
        ]
        for t in self.target_names:
            lines.append(
                f"{t:<{width}}  {self.mse[t]:>12.6f}  {self.max_abs_error[t]:>12.6f}"
            )
        lines.append(
            f"{'overall':<{width}}  {self.overall_mse:>12.6f}  "
            f"{self.overall_max_abs_error:>12.6f}"
        )
        return "\n".join(lines)


def compute_metrics(actual: np.ndarray, predicted: np.ndarray,
                    target_names=TARGETS,
                    standardized_units: bool = False) -> EvalReport:
    """Error metrics from aligned (n, targets) arrays.

    Per target: mean squared error and maximum absolute error.  Pooled
    across targets: the mean of squared errors over every entry, and the
    largest absolute error anywhere.
    """
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 2:
        raise EvaluationError(
            f"metrics need matching (n, targets) arrays, got {a.shape} and {p.shape}"
        )
    if a.shape[0] == 0:
        raise EvaluationError("metrics need at least one window")
    if a.shape[1] != len(target_names):
        raise EvaluationError(
            f"data has {a.shape[1]} targets, expected {len(target_names)}"
        )
    err = p - a
    per_mse = (err * err).mean(axis=0)
    per_max = np.abs(err).max(axis=0)
    return EvalReport(
        target_names=tuple(target_names),
        mse={t: float(per_mse[i]) for i, t in enumerate(target_names)},
        max_abs_error={t: float(per_max[i]) for i, t in enumerate(target_names)},
        overall_mse=float((err * err).mean()),
        overall_max_abs_error=float(np.abs(err).max()),
        n_windows=a.shape[0],
        standardized_units=standardized_units,
    )


def collect_predictions(params: ModelParams, dataset,
                        stats: Standardization | None,
                        batch_size: int = 256):
    """Run the model over a dataset in batches.

    ``dataset`` is anything with ``n_windows`` and ``gather`` (a
    WindowedDataset or FeatureTensor).  Returns (actual, predicted) in
    degrees Celsius, shape (n, targets) each.
    """
    n = dataset.n_windows
    if n == 0:
        raise EvaluationError("dataset holds no windows")
    actual, predicted = [], []
    for at in range(0, n, batch_size):
        idx = np.arange(at, min(at + batch_size, n))
        inputs, raw = dataset.gather(idx)
        pred = predict(params, inputs).reshape(len(idx), -1)
        if stats is not None:
            pred = stats.untransform_predictions(pred)
        actual.append(raw.reshape(len(idx), -1))
        predicted.append(pred)
    return np.concatenate(actual), np.concatenate(predicted)


def evaluate(params: ModelParams, dataset, stats: Standardization | None,
             batch_size: int = 256, standardized_units: bool = False) -> EvalReport:
    """Metrics for a model over held-out windows.

    By default errors are in degrees Celsius (predictions are mapped back
    through the target statistics).  With ``standardized_units`` both sides
    are transformed into standardized space instead.
    """
    actual, predicted = collect_predictions(params, dataset, stats, batch_size)
    if standardized_units:
        if stats is None:
            raise EvaluationError("standardized-unit metrics need statistics")
        actual = stats.transform_targets(actual)
        predicted = stats.transform_targets(predicted)
    return compute_metrics(actual, predicted, standardized_units=standardized_units)


def emit_traces(params: ModelParams, dataset, stats: Standardization | None,
                out_dir, batch_size: int = 256) -> list[str]:
    """Write per-target prediction and error traces as CSV files.

    For each target two files appear in ``out_dir``:
    ``<target>_trace.csv`` with (sample_id, actual_c, predicted_c) and
    ``<target>_error.csv`` with (sample_id, error_c), error = actual -
    predicted.  Floats are written with repr so the files parse back
    exactly.  Returns the paths written.
    """
    actual, predicted = collect_predictions(params, dataset, stats, batch_size)
    prov = getattr(dataset, "provenance", None)
    if callable(prov):
        prov = prov()
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, target in enumerate(TARGETS):
        trace_path = os.path.join(out_dir, f"{target}_trace.csv")
        error_path = os.path.join(out_dir, f"{target}_error.csv")
        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "actual_c", "predicted_c"])
            for k in range(len(actual)):
                sid = f"{prov[k][0]}:{prov[k][1]}" if prov else str(k)
                w.writerow([sid, repr(float(actual[k, i])),
                            repr(float(predicted[k, i]))])
        with open(error_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sample_id", "error_c"])
            for k in range(len(actual)):
                sid = f"{prov[k][0]}:{prov[k][1]}" if prov else str(k)
                w.writerow([sid, repr(float(actual[k, i] - predicted[k, i]))])
        paths.extend([trace_path, error_path])
    return paths


def time_inference(params: ModelParams, batch, repetitions: int = 10,
                   warmup: int = 2) -> float:
    """Mean wall-clock milliseconds per forward pass of one batch.

    Runs ``warmup`` unmeasured passes first.  At least 10 measured
    repetitions are required for a stable figure.
    """
    if repetitions < 10:
        raise ValueError("time_inference needs at least 10 repetitions")
    arr = np.asarray(batch, dtype=np.float64)
    for _ in range(warmup):
        predict(params, arr)
    times = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        predict(params, arr)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times) * 1000.0)
