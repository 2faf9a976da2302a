"""CSV ingestion, chronological splits, sliding windows, and correlation estimates."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from olinear.errors import EstimationError, IngestionError, WindowError

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class TimeSeriesDataset:
    """N variates (rows) by M time steps (columns) with split boundaries.

    Columns ``[0, train_end)`` are training data, ``[train_end, val_end)``
    validation and ``[val_end, M)`` test.
    """

    names: tuple[str, ...]
    values: np.ndarray
    train_end: int
    val_end: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise IngestionError(f"values must be 2-D (variates x steps), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != v.shape[0]:
            raise IngestionError("number of names does not match number of variates")
        if not 0 < self.train_end <= self.val_end <= v.shape[1]:
            raise IngestionError(
                f"invalid split boundaries train_end={self.train_end}, "
                f"val_end={self.val_end} for {v.shape[1]} steps"
            )

    @property
    def n_variates(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]

    def bounds(self, split: str) -> tuple[int, int]:
        if split == "train":
            return 0, self.train_end
        if split == "val":
            return self.train_end, self.val_end
        if split == "test":
            return self.val_end, self.n_steps
        raise WindowError(f"unknown split {split!r}; expected one of {SPLITS}")

    def split_values(self, split: str) -> np.ndarray:
        lo, hi = self.bounds(split)
        return self.values[:, lo:hi]


def split_points(n_steps: int, train_ratio: float, val_ratio: float) -> tuple[int, int]:
    if not (0 < train_ratio <= 1 and 0 <= val_ratio and train_ratio + val_ratio <= 1 + 1e-12):
        raise IngestionError(f"bad split ratios {train_ratio}/{val_ratio}")
    # the small epsilon keeps 10 * 0.6 from flooring to 5
    train_end = int(math.floor(n_steps * train_ratio + 1e-9))
    val_end = int(math.floor(n_steps * (train_ratio + val_ratio) + 1e-9))
    return train_end, min(val_end, n_steps)


def from_array(values, train_ratio=0.7, val_ratio=0.1, names=None) -> TimeSeriesDataset:
    values = np.asarray(values, dtype=np.float64)
    if names is None:
        names = [f"v{i}" for i in range(values.shape[0])]
    train_end, val_end = split_points(values.shape[1], train_ratio, val_ratio)
    return TimeSeriesDataset(tuple(names), values, train_end, val_end)


@dataclass(frozen=True)
class CsvSchema:
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    # minimum training steps, normally lookback + horizon
    min_train_steps: int = 0
    columns: tuple[str, ...] | None = None


def _parse_timestamp(text: str):
    text = text.strip()
    for parse in (int, float, datetime.fromisoformat):
        try:
            return parse(text)
        except ValueError:
            continue
    return None


def load_csv(path, schema: CsvSchema | None = None) -> TimeSeriesDataset:
    """Read a header-first CSV whose first column is a timestamp.

    Row numbers in error messages count data rows from 1; the header is row 0.
    """
    schema = schema or CsvSchema()
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if len(header) < 2:
            raise IngestionError(f"{path}: need a timestamp column and at least one variate", row=0)
        names = header[1:]
        keep = list(range(len(names)))
        if schema.columns is not None:
            missing = [c for c in schema.columns if c not in names]
            if missing:
                raise IngestionError(f"{path}: columns not in header: {missing}", row=0)
            keep = [names.index(c) for c in schema.columns]
        rows = []
        prev_ts = None
        for row, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise IngestionError(
                    f"{path}: expected {len(header)} fields, found {len(rec)}", row=row
                )
            ts = _parse_timestamp(rec[0])
            if ts is None:
                raise IngestionError(f"{path}: unparseable timestamp {rec[0]!r}", row=row, column=header[0])
            if prev_ts is not None:
                try:
                    ok = ts > prev_ts
                except TypeError:
                    raise IngestionError(f"{path}: mixed timestamp formats", row=row, column=header[0]) from None
                if not ok:
                    raise IngestionError(f"{path}: timestamps not strictly increasing", row=row, column=header[0])
            prev_ts = ts
            vals = []
            for j in keep:
                cell = rec[j + 1].strip()
                try:
                    x = float(cell)
                except ValueError:
                    raise IngestionError(f"{path}: non-numeric cell {cell!r}", row=row, column=names[j]) from None
                if not math.isfinite(x):
                    raise IngestionError(f"{path}: non-finite cell {cell!r}", row=row, column=names[j])
                vals.append(x)
            rows.append(vals)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    values = np.array(rows, dtype=np.float64).T.copy()
    train_end, val_end = split_points(values.shape[1], schema.train_ratio, schema.val_ratio)
    if train_end < max(schema.min_train_steps, 1):
        raise IngestionError(
            f"{path}: training split has {train_end} steps, need at least {max(schema.min_train_steps, 1)}"
        )
    return TimeSeriesDataset(tuple(names[j] for j in keep), values, train_end, val_end)


@dataclass(frozen=True)
class WindowBatch:
    """``inputs`` is B x N x T, ``targets`` is B x N x tau; ``starts`` are absolute column offsets."""

    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return self.inputs.shape[0]

    def take(self, idx) -> "WindowBatch":
        return WindowBatch(self.inputs[idx], self.targets[idx], self.starts[idx])


def window_count(length: int, lookback: int, horizon: int, stride: int) -> int:
    if length < lookback + horizon:
        return 0
    return (length - lookback - horizon) // stride + 1


def make_windows(ds: TimeSeriesDataset, split: str, lookback: int, horizon: int, stride: int = 1) -> WindowBatch:
    """Enumerate (lookback, horizon) windows left to right inside one split."""
    if lookback < 1 or horizon < 1:
        raise WindowError("lookback and horizon must be >= 1")
    if stride < 1:
        raise WindowError(f"stride must be >= 1, got {stride}")
    lo, hi = ds.bounds(split)
    length = hi - lo
    count = window_count(length, lookback, horizon, stride)
    if count == 0:
        raise WindowError(
            f"{split} split has {length} steps, need at least lookback+horizon = {lookback + horizon}"
        )
    starts = lo + stride * np.arange(count, dtype=np.int64)
    span = np.arange(lookback + horizon)
    cols = starts[:, None] + span[None, :]
    block = ds.values[:, cols].transpose(1, 0, 2)
    return WindowBatch(
        np.ascontiguousarray(block[:, :, :lookback]),
        np.ascontiguousarray(block[:, :, lookback:]),
        starts,
    )


@dataclass(frozen=True)
class CorrEstimate:
    """A symmetric, unit-diagonal Pearson correlation matrix.

    ``window`` is the matrix size; ``skipped`` lists variates left out
    because they were constant over the source region.
    """

    matrix: np.ndarray
    window: int
    source_fraction: float
    skipped: tuple[int, ...] = ()


def _source_length(ds: TimeSeriesDataset, fraction: float) -> int:
    if not 0 < fraction <= 1:
        raise EstimationError(f"source_fraction must lie in (0, 1], got {fraction}")
    return int(math.floor(fraction * ds.train_end + 1e-9))


def _finish_corr(c: np.ndarray, what: str) -> np.ndarray:
    c = (c + c.T) * 0.5
    if np.max(np.abs(c)) > 1 + 1e-9:
        raise EstimationError(f"{what}: correlation entry outside [-1, 1] beyond rounding")
    c = np.clip(c, -1.0, 1.0)
    np.fill_diagonal(c, 1.0)
    return c


def pearson_rows(s: np.ndarray) -> np.ndarray:
    """Pearson correlation between the rows of ``s``; caller guarantees nonzero variance."""
    centred = s - s.mean(axis=1, keepdims=True)
    cov = centred @ centred.T
    sd = np.sqrt(np.diag(cov))
    return cov / np.outer(sd, sd)


def lagged_temporal_corr(ds: TimeSeriesDataset, window_len: int, source_fraction: float = 1.0) -> CorrEstimate:
    """Average over variates of the correlation matrix of lag-shifted copies.

    For each variate the lagged series are ``x[i : M' - window_len + i]`` for
    ``i = 0 .. window_len-1``, where ``M'`` is the length of the leading
    ``source_fraction`` of the training split.
    """
    if window_len < 2:
        raise EstimationError(f"window_len must be >= 2, got {window_len}")
    m = _source_length(ds, source_fraction)
    length = m - window_len
    if length < 2:
        raise EstimationError(
            f"training source region of {m} steps is too short for window {window_len}"
        )
    idx = np.arange(window_len)[:, None] + np.arange(length)[None, :]
    total = np.zeros((window_len, window_len))
    used = 0
    skipped = []
    for j in range(ds.n_variates):
        lagged = ds.values[j, :m][idx]
        if np.any(np.ptp(lagged, axis=1) == 0):
            skipped.append(j)
            continue
        total += pearson_rows(lagged)
        used += 1
    if used == 0:
        raise EstimationError("every variate is constant over the source region")
    return CorrEstimate(_finish_corr(total / used, "lagged_temporal_corr"), window_len, source_fraction, tuple(skipped))


def variate_corr(ds: TimeSeriesDataset, source_fraction: float = 1.0) -> CorrEstimate:
    """N x N Pearson correlation across variates over the training columns.

    Constant variates get zero correlation with everything else.
    """
    m = _source_length(ds, source_fraction)
    if m < 2:
        raise EstimationError("need at least two training steps for variate correlation")
    x = ds.values[:, :m]
    ok = np.ptp(x, axis=1) > 0
    if not np.any(ok):
        raise EstimationError("every variate is constant over the source region")
    n = ds.n_variates
    c = np.zeros((n, n))
    sub = np.flatnonzero(ok)
    c[np.ix_(sub, sub)] = pearson_rows(x[sub])
    skipped = tuple(int(j) for j in np.flatnonzero(~ok))
    return CorrEstimate(_finish_corr(c, "variate_corr"), n, source_fraction, skipped)
