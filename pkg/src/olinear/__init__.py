"""OLinear: orthogonally decorrelated linear forecasting with NormLin variate mixing.

Pure numpy, with a compiled Jacobi eigensolver kernel when the extension is
built (``olinear.BACKEND`` says which one is active). The training loop is
``olinear.train.train``; the submodule is not shadowed by a function of the same name.
"""
from olinear._backend import BACKEND
from olinear.data import (
    CorrEstimate,
    CsvSchema,
    TimeSeriesDataset,
    WindowBatch,
    from_array,
    lagged_temporal_corr,
    load_csv,
    make_windows,
    variate_corr,
)
from olinear.evaluation import MetricsReport, conditional_gaussian_mean, flops_estimate, metrics
from olinear.linalg import EigenDecomposition, matmul, rank_report, symmetric_eigendecomp
from olinear.model import OLinearConfig, OLinearParams, backward, forward, normlin_weight
from olinear.pipeline import Bases, prepare_bases
from olinear.train import TrainConfig, TrainResult, load_checkpoint, save_checkpoint
from olinear.transform import OrthoBasis, apply_temporal, build_basis, invert_temporal

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Bases", "CorrEstimate", "CsvSchema", "EigenDecomposition", "MetricsReport",
    "OLinearConfig", "OLinearParams", "OrthoBasis", "TimeSeriesDataset", "TrainConfig", "WindowBatch",
    "apply_temporal", "backward", "build_basis", "conditional_gaussian_mean", "flops_estimate",
    "forward", "from_array", "invert_temporal", "lagged_temporal_corr", "load_checkpoint", "load_csv",
    "make_windows", "matmul", "metrics", "normlin_weight", "prepare_bases", "rank_report",
    "save_checkpoint", "symmetric_eigendecomp", "TrainResult", "variate_corr",
]
