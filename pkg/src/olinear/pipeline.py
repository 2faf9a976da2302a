"""Glue between data, bases and the model: everything a run needs before training."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from olinear.data import CorrEstimate, TimeSeriesDataset, lagged_temporal_corr, variate_corr
from olinear.model import OLinearConfig, build_olinear_c_weight
from olinear.transform import OrthoBasis, build_basis


@dataclass(frozen=True)
class Bases:
    q_in: OrthoBasis
    q_out: OrthoBasis
    corr_in: CorrEstimate | None = None
    corr_out: CorrEstimate | None = None
    corr_v: CorrEstimate | None = None
    corr_weight: np.ndarray | None = None


def _temporal_basis(ds, method, n, fraction):
    if method != "eigen":
        return build_basis(None, method, n), None
    if n == 1:
        return OrthoBasis(np.ones((1, 1)), "eigen", np.ones(1)), None
    corr = lagged_temporal_corr(ds, n, fraction)
    return build_basis(corr, "eigen", n), corr


def prepare_bases(ds: TimeSeriesDataset, config: OLinearConfig, q_source_fraction: float = 1.0) -> Bases:
    """Input/output bases from the training split, plus the frozen olinear_c weight when needed."""
    q_in, c_in = _temporal_basis(ds, config.basis_method, config.lookback, q_source_fraction)
    q_out, c_out = _temporal_basis(ds, config.basis_method, config.horizon, q_source_fraction)
    corr_v = weight = None
    if config.variant == "olinear_c":
        corr_v = variate_corr(ds, q_source_fraction)
        weight = build_olinear_c_weight(corr_v, config.corr_transform)
    return Bases(q_in, q_out, c_in, c_out, corr_v, weight)
