"""Losses, Adam, the training loop, and model checkpoints."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from olinear import checkpoint
from olinear.data import TimeSeriesDataset, WindowBatch, make_windows
from olinear.errors import CheckpointError, ConfigError, DivergenceError, ShapeError, StateError
from olinear.evaluation import MetricsReport, metrics
from olinear.model import (
    OLinearConfig,
    OLinearParams,
    backward,
    check_shapes,
    expected_shapes,
    forward,
    init_params,
    predict,
)
from olinear.transform import OrthoBasis

log = logging.getLogger(__name__)

LOSSES = ("mae", "weighted_l1", "mse")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    # weighted_l1 uses a horizon decay (t+1)^-exponent normalised to mean 1; it stands
    # in for a weighting scheme whose exact form is not published
    loss: str = "weighted_l1"
    horizon_weight_exponent: float = 0.5
    seed: int = 2024
    clip_norm: float = 5.0
    stride: int = 1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be a finite positive number, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")
        if not 1 <= self.patience <= self.max_epochs:
            raise ConfigError(f"patience must lie in [1, max_epochs], got {self.patience}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.clip_norm < 0:
            raise ConfigError("clip_norm must be >= 0 (0 disables clipping)")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def horizon_weights(horizon: int, exponent: float) -> np.ndarray:
    w = (np.arange(horizon, dtype=np.float64) + 1.0) ** (-exponent)
    return w / w.mean()


def loss_and_grad(pred, target, kind: str = "mae", exponent: float = 0.5):
    """Scalar loss and its gradient w.r.t. ``pred`` (the last axis is the horizon)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target {target.shape}")
    err = pred - target
    count = err.size
    if kind == "mse":
        return float(np.mean(err * err)), 2.0 * err / count
    if kind == "mae":
        return float(np.mean(np.abs(err))), np.sign(err) / count
    if kind == "weighted_l1":
        w = horizon_weights(err.shape[-1], exponent)
        return float(np.mean(w * np.abs(err))), w * np.sign(err) / count
    raise ConfigError(f"unknown loss {kind!r}")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: OLinearParams, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """One bias-corrected Adam update of every learnable tensor, in place.

    Frozen buffers are never touched.
    """
    if set(grads) != set(params.tensors):
        raise StateError("gradient set does not match the learnable parameters")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.tensors.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        if lr != 0.0:
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    params.bump()
    return state


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``. Returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def make_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent Philox streams for initialisation and shuffling.

    Keeping them separate means every model setting sees the same batch order
    for a given seed, whatever its parameter count.
    """
    init_ss, shuffle_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.Generator(np.random.Philox(init_ss)), np.random.Generator(np.random.Philox(shuffle_ss))


def fisher_yates(n: int, rng: np.random.Generator) -> np.ndarray:
    perm = np.arange(n)
    if n < 2:
        return perm
    picks = rng.integers(0, np.arange(n, 1, -1))
    for i, j in zip(range(n - 1, 0, -1), picks.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_mse: float
    val_mae: float


@dataclass
class TrainResult:
    params: OLinearParams
    history: list
    best_epoch: int
    stopped_early: bool
    val_report: MetricsReport


HISTORY_FIELDS = ("epoch", "train_loss", "val_mse", "val_mae")


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HISTORY_FIELDS)
    for rec in history:
        w.writerow((rec.epoch, repr(rec.train_loss), repr(rec.val_mse), repr(rec.val_mae)))
    return buf.getvalue()


def evaluate_windows(params: OLinearParams, config: OLinearConfig, windows: WindowBatch,
                     batch_size: int = 256) -> tuple[MetricsReport, np.ndarray]:
    preds = predict(windows.inputs, params, config, batch_size)
    return metrics(preds, windows.targets), preds


def train(dataset: TimeSeriesDataset, model_config: OLinearConfig, train_config: TrainConfig,
          q_in: OrthoBasis, q_out: OrthoBasis, corr_weight=None,
          val_batch_size: int = 256) -> TrainResult:
    """Adam on shuffled training windows with early stopping on validation MAE.

    Returns the parameters from the epoch with the best validation MAE.
    """
    cfg, tc = model_config, train_config
    if dataset.n_variates != cfg.n_variates:
        raise ConfigError(f"dataset has {dataset.n_variates} variates, config says {cfg.n_variates}")
    train_w = make_windows(dataset, "train", cfg.lookback, cfg.horizon, tc.stride)
    val_w = make_windows(dataset, "val", cfg.lookback, cfg.horizon, 1)
    init_rng, shuffle_rng = make_rngs(tc.seed)
    params = init_params(cfg, init_rng, q_in.q, q_out.q, corr_weight)
    state = AdamState()
    history = []
    best = None
    best_mae = math.inf
    best_epoch = 0
    best_report = None
    wait = 0
    stopped_early = False
    n = len(train_w)
    for epoch in range(1, tc.max_epochs + 1):
        order = fisher_yates(n, shuffle_rng)
        total = 0.0
        for lo in range(0, n, tc.batch_size):
            idx = order[lo:lo + tc.batch_size]
            pred, cache = forward(train_w.inputs[idx], params, cfg)
            loss, dpred = loss_and_grad(pred, train_w.targets[idx], tc.loss, tc.horizon_weight_exponent)
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}, batch starting {lo}")
            grads = backward(cache, dpred)
            gnorm = clip_global_norm(grads, tc.clip_norm)
            if not math.isfinite(gnorm):
                raise DivergenceError(f"non-finite gradient norm at epoch {epoch}, batch starting {lo}")
            adam_step(params, grads, state, tc.learning_rate, tc.beta1, tc.beta2, tc.adam_eps)
            total += loss * idx.size
        report, _ = evaluate_windows(params, cfg, val_w, val_batch_size)
        if not math.isfinite(report.mae):
            raise DivergenceError(f"non-finite validation error at epoch {epoch}")
        history.append(EpochRecord(epoch, total / n, report.mse, report.mae))
        log.info("epoch %d train_loss %.6f val_mse %.6f val_mae %.6f", epoch, total / n, report.mse, report.mae)
        if report.mae < best_mae:
            best_mae = report.mae
            best = params.copy()
            best_epoch = epoch
            best_report = report
            wait = 0
        else:
            wait += 1
            if wait >= tc.patience:
                stopped_early = True
                break
    return TrainResult(best, history, best_epoch, stopped_early, best_report)


# ---------------------------------------------------------------- checkpoints

def _config_text(d: dict) -> dict:
    return {k: (str(v).lower() if isinstance(v, bool) else str(v)) for k, v in d.items()}


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value not in ("true", "false"):
            raise ValueError(value)
        return value == "true"
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def model_config_from_text(cfg: dict) -> OLinearConfig:
    defaults = OLinearConfig(1, 1, 1)
    kwargs = {}
    for f in fields(OLinearConfig):
        if f.name not in cfg:
            raise CheckpointError(f"checkpoint config lacks {f.name!r}")
        try:
            kwargs[f.name] = _coerce(cfg[f.name], getattr(defaults, f.name))
        except ValueError:
            raise CheckpointError(f"checkpoint config has bad value for {f.name!r}: {cfg[f.name]!r}") from None
    try:
        return OLinearConfig(**kwargs)
    except ConfigError as exc:
        raise CheckpointError(f"checkpoint config invalid: {exc}") from None


def save_checkpoint(params: OLinearParams, bases: tuple[OrthoBasis, OrthoBasis], config: OLinearConfig,
                    path, extra: dict | None = None):
    """Write parameters, frozen bases, and a config echo. ``extra`` entries are echoed as-is."""
    q_in, q_out = bases
    check_shapes(params, config)
    tensors = dict(params.tensors)
    tensors.update(params.frozen)
    for tag, basis in (("q_in", q_in), ("q_out", q_out)):
        if basis.eigenvalues is not None:
            tensors[f"{tag}.eigenvalues"] = basis.eigenvalues
    text = _config_text(config.to_dict())
    text["q_in.method"] = q_in.method
    text["q_out.method"] = q_out.method
    for k, v in (extra or {}).items():
        text[k] = str(v)
    checkpoint.write(path, tensors, text)


@dataclass
class LoadedCheckpoint:
    params: OLinearParams
    config: OLinearConfig
    bases: tuple
    echo: dict


def load_checkpoint(path) -> LoadedCheckpoint:
    tensors, echo = checkpoint.read(path)
    config = model_config_from_text(echo)
    learn, frozen = expected_shapes(config)
    for group in (learn, frozen):
        for name, shape in group.items():
            if name not in tensors:
                raise CheckpointError(f"checkpoint is missing tensor {name!r}")
            if tensors[name].shape != tuple(shape):
                raise CheckpointError(
                    f"tensor {name!r} has shape {tensors[name].shape}, config implies {tuple(shape)}"
                )
    known = set(learn) | set(frozen) | {"q_in.eigenvalues", "q_out.eigenvalues"}
    unknown = sorted(set(tensors) - known)
    if unknown:
        raise CheckpointError(f"checkpoint has unexpected tensors {unknown}")
    params = OLinearParams({k: tensors[k].copy() for k in learn}, {k: tensors[k] for k in frozen})
    bases = tuple(
        OrthoBasis(params.frozen[tag], echo.get(f"{tag}.method", config.basis_method), tensors.get(f"{tag}.eigenvalues"))
        for tag in ("q_in", "q_out")
    )
    return LoadedCheckpoint(params, config, bases, echo)
