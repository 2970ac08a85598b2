"""Time-series ingestion, normalization, splitting, MAE and synthetic data."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

log = logging.getLogger(__name__)


@dataclass
class TimeSeries:
    columns: list[str]
    values: np.ndarray  # T x K
    target: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("value matrix does not match the column names")
        if self.values.shape[0] < 2:
            raise DataError("a series needs at least two rows")
        if not 0 <= self.target < len(self.columns):
            raise DataError(f"target index {self.target} out of range")
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains missing or non-finite values")

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def input_columns(self) -> list[int]:
        return [k for k in range(len(self.columns)) if k != self.target]

    @property
    def X(self) -> np.ndarray:
        return self.values[:, self.input_columns]

    @property
    def y(self) -> np.ndarray:
        return self.values[:, self.target]

    def split(self, train_fraction: float = 0.5) -> tuple["TimeSeries", "TimeSeries"]:
        """Contiguous split: the first ``train_fraction`` of rows, then the rest."""
        if not 0.0 < train_fraction < 1.0:
            raise DataError("train fraction must lie in (0, 1)")
        cut = int(round(self.length * train_fraction))
        if cut < 2 or self.length - cut < 2:
            raise DataError("split leaves fewer than two rows on one side")
        return (
            TimeSeries(list(self.columns), self.values[:cut].copy(), self.target),
            TimeSeries(list(self.columns), self.values[cut:].copy(), self.target),
        )


def load_csv(path: str | os.PathLike, target_column: str) -> TimeSeries:
    """Read a comma-separated file with a mandatory header row."""
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path} is empty")
        header = [h.strip() for h in header]
        if target_column not in header:
            raise DataError(
                f"target column {target_column!r} not found; available: {', '.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {lineno}: expected {len(header)} cells, got {len(row)}")
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise DataError(f"row {lineno}: {exc}") from exc
            if not all(np.isfinite(values)):
                raise DataError(f"row {lineno}: non-finite value")
            rows.append(values)
    if not rows:
        raise DataError(f"{path} has a header but no data rows")
    return TimeSeries(header, np.array(rows), header.index(target_column))


def write_csv(series: TimeSeries, path: str | os.PathLike, precision: int = 17) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(series.columns)
        for row in series.values:
            writer.writerow([f"{v:.{precision}g}" for v in row])


@dataclass(frozen=True)
class MinMax:
    minimum: np.ndarray
    maximum: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.maximum <= self.minimum

    def transform(self, values: np.ndarray) -> np.ndarray:
        span = np.where(self.constant, 1.0, self.maximum - self.minimum)
        out = (np.asarray(values, dtype=np.float64) - self.minimum) / span
        out[..., self.constant] = 0.0
        return out

    def inverse(self, values: np.ndarray) -> np.ndarray:
        span = np.where(self.constant, 0.0, self.maximum - self.minimum)
        return np.asarray(values, dtype=np.float64) * span + self.minimum


def min_max_normalize(series: TimeSeries, reference: MinMax | None = None) -> tuple[TimeSeries, MinMax]:
    """Map each column to [0, 1]; constant columns map to 0 with a warning.

    Pass ``reference`` to reuse bounds fitted on another series.
    """
    if reference is None:
        reference = MinMax(series.values.min(axis=0), series.values.max(axis=0))
        for k in np.flatnonzero(reference.constant):
            log.warning("column %r is constant; normalized to 0", series.columns[k])
    return TimeSeries(list(series.columns), reference.transform(series.values), series.target), reference


def mae(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1 or p.size == 0:
        raise ValueError(f"mae needs two equal-length non-empty series, got {p.shape} and {t.shape}")
    return float(np.mean(np.abs(p - t)))


SINE_PERIOD = 64
_SINE_DIVISORS = (64, 32, 16)


def _sine_mix(T: int, K: int, rng: np.random.Generator) -> np.ndarray:
    drivers = K - 1
    periods = np.array([_SINE_DIVISORS[k % len(_SINE_DIVISORS)] for k in range(drivers)])
    phases = rng.uniform(0.0, 2 * np.pi, drivers)
    coef = rng.uniform(0.5, 1.5, drivers) * rng.choice([-1.0, 1.0], drivers)
    lags = np.arange(drivers) % 3 + 1
    t = np.arange(T)[:, None]

    def wave(shift):
        # reduce the phase modulo the period so the series repeats bit for bit
        return np.sin(2 * np.pi * ((t - shift) % periods) / periods + phases)

    X = wave(0)
    lagged = wave(lags)
    y = np.tanh(lagged @ coef / np.sqrt(drivers)) + 0.3 * lagged[:, 0] * lagged[:, -1]
    return np.column_stack([X, y])


def _mackey_glass(T: int, K: int, rng: np.random.Generator) -> np.ndarray:
    tau, a, b = 17, 0.2, 0.1
    burn = 200
    drivers = K - 1
    lag_step = 2
    n = T + burn + lag_step * drivers + 1
    m = np.empty(n)
    m[: tau + 1] = 1.2 + rng.uniform(-0.1, 0.1, tau + 1)
    for t in range(tau, n - 1):
        m[t + 1] = m[t] + a * m[t - tau] / (1.0 + m[t - tau] ** 10) - b * m[t]
    start = burn + lag_step * drivers
    idx = np.arange(start, start + T)
    X = np.stack([m[idx - lag_step * k] for k in range(drivers)], axis=1)
    y = m[idx + 1]
    return np.column_stack([X, y])


def synth_series(kind: str, T: int, K: int, noise: float = 0.0, seed: int = 0) -> TimeSeries:
    """Seeded synthetic series with ``K - 1`` drivers and a target in the last column.

    ``sine_mix``: drivers are sinusoids with periods dividing 64; the target
    is a fixed nonlinear function of lagged drivers, so with zero noise the
    whole series repeats every 64 steps. ``mackey_glass_like``: drivers are
    lagged copies of a discrete Mackey-Glass recursion and the target is its
    next value.
    """
    if T < 16 or K < 2:
        raise DataError("synthetic series need T >= 16 and K >= 2")
    rng = np.random.default_rng(seed)
    if kind == "sine_mix":
        values = _sine_mix(T, K, rng)
    elif kind == "mackey_glass_like":
        values = _mackey_glass(T, K, rng)
    else:
        raise DataError(f"unknown synthetic series kind {kind!r}")
    if noise > 0:
        values = values + rng.normal(0.0, noise, values.shape)
    columns = [f"x{k}" for k in range(K - 1)] + ["y"]
    return TimeSeries(columns, values, K - 1)


@dataclass
class Dataset:
    """Normalized train/validation arrays handed to workers."""

    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray
    y_val: np.ndarray
    columns: list[str]
    scaler: MinMax | None = None

    @property
    def input_width(self) -> int:
        return self.X_train.shape[1]

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X_train, self.y_train

    @property
    def validation(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X_val, self.y_val


def prepare(series: TimeSeries, train_fraction: float = 0.5, normalize: bool = True) -> Dataset:
    """Split contiguously and min-max normalize with bounds from the training part."""
    train, val = series.split(train_fraction)
    scaler = None
    if normalize:
        train, scaler = min_max_normalize(train)
        val, _ = min_max_normalize(val, scaler)
    return Dataset(
        np.ascontiguousarray(train.X), train.y.copy(),
        np.ascontiguousarray(val.X), val.y.copy(),
        [series.columns[k] for k in series.input_columns] + [series.columns[series.target]],
        scaler,
    )


def constant_baseline(data: Dataset) -> float:
    """MAE on the validation split of predicting the validation target mean."""
    return mae(np.full_like(data.y_val, data.y_val.mean()), data.y_val)
