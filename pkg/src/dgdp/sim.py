"""Noise-injection experiment harness for count vectors.

Privatises nonnegative integer counts with i.i.d. discrete Gaussian noise,
optionally clamps at zero (the simplest disclosure-avoidance style
post-processing), and reports MSE/MAE against the true counts.  Counts come
from a one-column CSV (optional header) or any integer sequence.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dgauss import DiscreteGaussian


@dataclass(frozen=True)
class CountsDataset:
    values: np.ndarray
    label: str = "counts"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        if values.ndim != 1:
            raise ValueError("counts must form a one-dimensional vector")
        if len(values) == 0:
            raise ValueError("empty dataset")
        if (values < 0).any():
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)


def synthetic_counts(size: int, mean: float, seed, label="synthetic") -> CountsDataset:
    """Poisson count vector, for running the harness without external data."""
    rng = np.random.default_rng(seed)
    return CountsDataset(rng.poisson(mean, size=size), label)


def read_counts_csv(path, label=None) -> CountsDataset:
    """One integer count per line; a non-numeric first line is a header."""
    values = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.reader(fh):
            if not row:
                continue
            token = row[0].strip()
            if not values and not _is_int(token):
                continue  # header
            if not _is_int(token):
                raise ValueError(f"non-integer count {token!r} in {path}")
            values.append(int(token))
    return CountsDataset(np.array(values), label or str(path))


def _is_int(token: str) -> bool:
    try:
        int(token)
        return True
    except ValueError:
        return False


def privatize(dataset: CountsDataset, sigma2, seed) -> np.ndarray:
    """counts + i.i.d. N_Z(0, sigma^2) noise; reproducible per seed."""
    sampler = DiscreteGaussian(sigma2).sampler(seed)
    noise = sampler.draw_array(len(dataset))
    return dataset.values + noise


def postprocess_nonneg(values) -> np.ndarray:
    """Entrywise max(0, v); idempotent."""
    return np.maximum(np.asarray(values, dtype=np.int64), 0)


@dataclass(frozen=True)
class ErrorReport:
    mse: float
    mae: float
    n_entries: int


def error_report(true_values, noisy_values) -> ErrorReport:
    true_values = np.asarray(true_values, dtype=np.float64)
    noisy_values = np.asarray(noisy_values, dtype=np.float64)
    if true_values.shape != noisy_values.shape:
        raise ValueError("length mismatch between true and noisy vectors")
    diff = noisy_values - true_values
    return ErrorReport(float(np.mean(diff**2)), float(np.mean(np.abs(diff))), len(diff))


SIM_REPORT_COLUMNS = ("dataset", "sigma2", "postproc", "mse", "mae", "n_entries", "seed")


def run_experiment(dataset: CountsDataset, sigma2, seed, postprocess: bool = False):
    """Privatise, optionally clamp, and measure; returns a report row dict."""
    noisy = privatize(dataset, sigma2, seed)
    if postprocess:
        noisy = postprocess_nonneg(noisy)
    report = error_report(dataset.values, noisy)
    return {
        "dataset": dataset.label,
        "sigma2": str(sigma2),
        "postproc": "nonneg" if postprocess else "none",
        "mse": repr(report.mse),
        "mae": repr(report.mae),
        "n_entries": report.n_entries,
        "seed": seed,
    }


def write_report_csv(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SIM_REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
