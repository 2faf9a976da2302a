"""Synthetic series generators used by tests, benchmarks and examples."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np


def ar1(n_steps: int, n_variates: int, rho: float, rng: np.random.Generator, sigma: float = 1.0) -> np.ndarray:
    """Independent stationary AR(1) series, shape (n_variates, n_steps)."""
    if not abs(rho) < 1:
        raise ValueError("AR(1) coefficient must satisfy |rho| < 1")
    eps = rng.standard_normal((n_variates, n_steps)) * sigma
    out = np.empty((n_variates, n_steps))
    out[:, 0] = eps[:, 0] / np.sqrt(1.0 - rho * rho)
    for t in range(1, n_steps):
        out[:, t] = rho * out[:, t - 1] + eps[:, t]
    return out


def sinusoid(n_steps: int, n_variates: int, period: float, rng: np.random.Generator,
             snr: float | None = None) -> np.ndarray:
    """Unit-power sinusoids with random phases plus white noise at power ratio ``snr``."""
    t = np.arange(n_steps)
    phase = rng.uniform(0, 2 * np.pi, size=(n_variates, 1))
    x = np.sqrt(2.0) * np.sin(2 * np.pi * t / period + phase)
    if snr is not None:
        x = x + rng.standard_normal(x.shape) / np.sqrt(snr)
    return x


def write_csv(path, values, names=None, timestamps=None):
    """Write a (variates x steps) array as a header-first CSV with a leading timestamp column."""
    values = np.asarray(values, dtype=np.float64)
    n, m = values.shape
    names = names or [f"v{i}" for i in range(n)]
    timestamps = range(m) if timestamps is None else timestamps
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *names])
        for ts, col in zip(timestamps, values.T):
            w.writerow([ts, *(repr(float(v)) for v in col)])
