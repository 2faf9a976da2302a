"""Forecast metrics, diagnostics, and mathematical oracles."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from olinear.errors import InputError, ShapeError
from olinear.linalg import rank_report, symmetric_eigendecomp
from olinear.model import OLinearConfig, OLinearParams, block_key, normlin_weight_full


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    mae: float
    r2: float
    pearson_r: float
    mase: float
    n_windows: int
    # (window, variate) pairs or variates left out of r / MASE / R2 because they were undefined
    r_excluded: int = 0
    mase_excluded: int = 0
    r2_excluded: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _mean_or_nan(x: np.ndarray) -> float:
    return float(x.mean()) if x.size else float("nan")


def metrics(preds, targets) -> MetricsReport:
    """MSE, MAE, R2, Pearson r and MASE for B x N x tau forecasts.

    R2 is computed per variate over every (window, step) and then averaged.
    Pearson r and MASE are computed per (window, variate) over the horizon and
    averaged over the pairs where they are defined. The MASE scale is the
    mean absolute one-step difference of the ground-truth horizon.
    """
    p = np.asarray(preds, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 3:
        raise ShapeError(f"preds {p.shape} and targets {y.shape} must share a B x N x tau shape")
    B, N, tau = y.shape
    if tau < 2:
        raise ShapeError("MASE needs a horizon of at least 2")
    err = p - y
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))

    yv = y.transpose(1, 0, 2).reshape(N, -1)
    ev = err.transpose(1, 0, 2).reshape(N, -1)
    tot = ((yv - yv.mean(axis=1, keepdims=True)) ** 2).sum(axis=1)
    ok = tot > 0
    r2_each = 1.0 - (ev * ev).sum(axis=1)[ok] / tot[ok]

    pc = p - p.mean(axis=2, keepdims=True)
    yc = y - y.mean(axis=2, keepdims=True)
    den = np.sqrt((pc * pc).sum(axis=2) * (yc * yc).sum(axis=2))
    r_ok = den > 0
    r_each = (pc * yc).sum(axis=2)[r_ok] / den[r_ok]

    scale = np.abs(np.diff(y, axis=2)).mean(axis=2)
    m_ok = scale > 0
    mase_each = np.abs(err).mean(axis=2)[m_ok] / scale[m_ok]

    return MetricsReport(
        mse=mse,
        mae=mae,
        r2=_mean_or_nan(r2_each),
        pearson_r=_mean_or_nan(r_each),
        mase=_mean_or_nan(mase_each),
        n_windows=B,
        r_excluded=int((~r_ok).sum()),
        mase_excluded=int((~m_ok).sum()),
        r2_excluded=int((~ok).sum()),
    )


METRIC_FIELDS = ("mse", "mae", "r2", "pearson_r", "mase", "n_windows")


def metrics_csv(rows: list[tuple[str, MetricsReport]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("split",) + METRIC_FIELDS)
    for label, rep in rows:
        w.writerow((label,) + tuple(_fmt(getattr(rep, f)) for f in METRIC_FIELDS))
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def text_table(header, rows) -> str:
    """Right-aligned plain-text table."""
    cells = [list(map(str, header))] + [
        [f"{v:.6f}" if isinstance(v, float) else str(v) for v in row] for row in rows
    ]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def metrics_table(rows: list[tuple[str, MetricsReport]]) -> str:
    return text_table(("split",) + METRIC_FIELDS, [(lbl,) + tuple(getattr(r, f) for f in METRIC_FIELDS) for lbl, r in rows])


# ---------------------------------------------------------------- FLOPs

@dataclass(frozen=True)
class FlopsEstimate:
    normlin_module: int
    mhsa: int
    n_variates: int
    model_dim: int
    heads: int


def flops_estimate(n_variates: int, model_dim: int, heads: int = 8) -> FlopsEstimate:
    """Leading-order FLOPs of the NormLin module (N^2 D + 2 N D^2) and of
    multi-head self-attention (2 N^2 D + 4 N D^2). ``heads`` affects memory, not FLOPs."""
    N, D = int(n_variates), int(model_dim)
    return FlopsEstimate(N * N * D + 2 * N * D * D, 2 * N * N * D + 4 * N * D * D, N, D, int(heads))


# ---------------------------------------------------------------- Gaussian oracle

def conditional_gaussian_mean(mu_x, mu_y: float, sigma_x, sigma_xy, x) -> float:
    """E[y | x] = mu_y + sigma_xy^T sigma_x^{-1} (x - mu_x) for a jointly Gaussian (x, y).

    The inverse goes through the eigendecomposition of ``sigma_x``, which must be
    symmetric positive definite.
    """
    mu_x = np.atleast_1d(np.asarray(mu_x, dtype=np.float64))
    sigma_x = np.atleast_2d(np.asarray(sigma_x, dtype=np.float64))
    sigma_xy = np.atleast_1d(np.asarray(sigma_xy, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    k = mu_x.size
    if sigma_x.shape != (k, k) or sigma_xy.shape != (k,) or x.shape != (k,):
        raise ShapeError("conditional_gaussian_mean: inconsistent dimensions")
    eig = symmetric_eigendecomp(sigma_x)
    if eig.eigenvalues[-1] <= 1e-12:
        raise InputError(f"sigma_x is not positive definite (min eigenvalue {eig.eigenvalues[-1]:.3e})")
    coef = eig.q.T @ sigma_xy / eig.eigenvalues
    return float(mu_y + (eig.q @ coef) @ (x - mu_x))


# ---------------------------------------------------------------- gradient checking

@dataclass
class GradCheckReport:
    per_tensor: dict = field(default_factory=dict)
    coords_checked: dict = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_tensor.values(), default=0.0)

    def worst(self) -> tuple[str, float]:
        if not self.per_tensor:
            return "", 0.0
        name = max(self.per_tensor, key=self.per_tensor.get)
        return name, self.per_tensor[name]


def _coords(size: int, limit: int | None) -> np.ndarray:
    if limit is None or size <= limit:
        return np.arange(size)
    return np.unique(np.linspace(0, size - 1, limit).round().astype(np.int64))


def finite_difference_check(
    forward_closure: Callable[[], tuple[float, dict]],
    params: dict,
    step: float = 1e-6,
    max_coords: int | None = None,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``forward_closure()`` evaluates the objective at the current contents of
    ``params`` (arrays mutated in place) and returns ``(value, grads)``.
    Tensors with more than ``max_coords`` entries are checked on an evenly
    spaced subset (at least 64 coordinates). The per-tensor error is
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|)``.
    """
    if max_coords is not None:
        max_coords = max(int(max_coords), 64)
    _, grads = forward_closure()
    grads = {k: np.array(v, dtype=np.float64) for k, v in grads.items()}
    report = GradCheckReport()
    for name, arr in params.items():
        flat = arr.reshape(-1)
        idx = _coords(flat.size, max_coords)
        num = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + step
            fp = forward_closure()[0]
            flat[i] = old - step
            fm = forward_closure()[0]
            flat[i] = old
            num[j] = (fp - fm) / (2.0 * step)
        ana = grads[name].reshape(-1)[idx]
        scale = max(float(np.max(np.abs(ana), initial=0.0)), float(np.max(np.abs(num), initial=0.0)))
        diff = float(np.max(np.abs(ana - num), initial=0.0))
        report.per_tensor[name] = 0.0 if scale == 0.0 else diff / scale
        report.coords_checked[name] = int(idx.size)
    return report


# ---------------------------------------------------------------- rank diagnostics

@dataclass(frozen=True)
class BlockRank:
    block: int
    numerical_rank: int
    effective_rank: float
    n_variates: int
    degenerate_rows: int


def effective_normlin_weights(params: OLinearParams, config: OLinearConfig) -> list[tuple[np.ndarray, int]]:
    out = []
    for layer in range(config.n_blocks):
        if config.variant == "olinear":
            nw = normlin_weight_full(params[block_key(layer, "normlin_w")], config.normlin_transform, config.normlin_norm)
            out.append((nw.matrix, int(nw.zero_rows.sum())))
        else:
            out.append((params[block_key(layer, "normlin_fixed")], 0))
    return out


def weight_rank_diagnostic(params: OLinearParams, config: OLinearConfig, tol: float = 1e-6) -> list[BlockRank]:
    """Numerical and effective rank of each block's row-normalised mixing matrix."""
    rows = []
    for layer, (m, zero) in enumerate(effective_normlin_weights(params, config)):
        rep = rank_report(m, tol)
        rows.append(BlockRank(layer, rep.numerical_rank, rep.effective_rank, m.shape[0], zero))
    return rows


def persistence_forecast(inputs, horizon: int) -> np.ndarray:
    """Repeat the last lookback value across the horizon."""
    x = np.asarray(inputs, dtype=np.float64)
    return np.repeat(x[..., -1:], horizon, axis=-1)


def mean_forecast(inputs, horizon: int) -> np.ndarray:
    """Repeat the lookback mean across the horizon."""
    x = np.asarray(inputs, dtype=np.float64)
    return np.repeat(x.mean(axis=-1, keepdims=True), horizon, axis=-1)
