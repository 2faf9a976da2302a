"""Orthogonal bases along the time axis: eigen (OrthoTrans), real Fourier, identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from olinear.data import CorrEstimate, WindowBatch
from olinear.errors import ConfigError, EstimationError, ShapeError
from olinear.linalg import symmetric_eigendecomp

METHODS = ("eigen", "fourier", "identity")


@dataclass(frozen=True)
class OrthoBasis:
    """An n x n orthogonal matrix whose columns are the basis vectors.

    Projecting a length-n series ``x`` gives coefficients ``q.T @ x``.
    """

    q: np.ndarray
    method: str
    eigenvalues: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.q.shape[0]


def fourier_basis(n: int) -> np.ndarray:
    """Real orthonormal trigonometric basis: constant, (cos, sin) pairs, Nyquist if n is even."""
    t = np.arange(n)
    cols = [np.full(n, 1.0 / np.sqrt(n))]
    scale = np.sqrt(2.0 / n)
    for k in range(1, (n - 1) // 2 + 1):
        arg = 2.0 * np.pi * k * t / n
        cols.append(scale * np.cos(arg))
        cols.append(scale * np.sin(arg))
    if n % 2 == 0:
        cols.append(np.where(t % 2 == 0, 1.0, -1.0) / np.sqrt(n))
    return np.ascontiguousarray(np.stack(cols, axis=1))


def build_basis(corr: CorrEstimate | None, method: str, n: int) -> OrthoBasis:
    if n < 1:
        raise ConfigError(f"basis size must be >= 1, got {n}")
    if method == "identity":
        return OrthoBasis(np.eye(n), "identity")
    if method == "fourier":
        return OrthoBasis(fourier_basis(n), "fourier")
    if method == "eigen":
        if corr is None:
            raise ConfigError("eigen basis needs a correlation estimate")
        if corr.window != n:
            raise ConfigError(f"correlation window {corr.window} does not match basis size {n}")
        eig = symmetric_eigendecomp(corr.matrix)
        return OrthoBasis(eig.q, "eigen", eig.eigenvalues)
    raise ConfigError(f"unknown basis method {method!r}; expected one of {METHODS}")


def apply_temporal(x: np.ndarray, basis: OrthoBasis) -> np.ndarray:
    """Project the last axis onto the basis vectors."""
    if x.shape[-1] != basis.n:
        raise ShapeError(f"last axis {x.shape[-1]} does not match basis size {basis.n}")
    return x @ basis.q


def invert_temporal(x: np.ndarray, basis: OrthoBasis) -> np.ndarray:
    """Map coefficients on the last axis back to the time domain."""
    if x.shape[-1] != basis.n:
        raise ShapeError(f"last axis {x.shape[-1]} does not match basis size {basis.n}")
    return x @ basis.q.T


def decorrelation_score(windows: WindowBatch, basis: OrthoBasis) -> float:
    """Mean |off-diagonal| of the correlation matrix of transformed lookback windows.

    Each (window, variate) pair is one sample. Coefficients with zero variance
    across samples are left out.
    """
    x = np.asarray(windows.inputs, dtype=np.float64)
    samples = x.reshape(-1, x.shape[-1])
    if samples.shape[0] < 2:
        raise EstimationError("need at least two windows to estimate a correlation matrix")
    z = apply_temporal(samples, basis)
    z = z - z.mean(axis=0)
    var = np.einsum("ij,ij->j", z, z)
    keep = var > 1e-300
    if keep.sum() < 2:
        return 0.0
    z = z[:, keep]
    cov = z.T @ z
    sd = np.sqrt(np.diag(cov))
    c = cov / np.outer(sd, sd)
    k = c.shape[0]
    off = np.abs(c[~np.eye(k, dtype=bool)])
    return float(off.mean())
