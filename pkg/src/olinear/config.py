"""Flat ``key = value`` run configuration with command-line overrides."""
from __future__ import annotations

from dataclasses import MISSING, dataclass, fields
from pathlib import Path

from olinear.errors import ConfigError
from olinear.model import OLinearConfig
from olinear.train import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    data: str = ""
    output_dir: str = "olinear_out"
    train_ratio: float = 0.7
    val_ratio: float = 0.1
    q_source_fraction: float = 1.0
    eval_batch_size: int = 256
    # 0 means: take the variate count from the data file
    n_variates: int = 0
    lookback: int = 96
    horizon: int = 96
    embed_size: int = 16
    model_dim: int = 128
    n_blocks: int = 1
    normlin_transform: str = "softplus"
    normlin_norm: str = "l1"
    csl_pre_linear: bool = True
    csl_post_linear: bool = True
    variant: str = "olinear"
    basis_method: str = "eigen"
    corr_transform: str = "softmax"
    learning_rate: float = 5e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    loss: str = "weighted_l1"
    horizon_weight_exponent: float = 0.5
    seed: int = 2024
    clip_norm: float = 5.0
    stride: int = 1

    def validate(self, n_variates: int | None = None) -> "RunConfig":
        if not self.data:
            raise ConfigError("'data' (path to the input CSV) is required")
        if not 0 < self.train_ratio <= 1 or not 0 <= self.val_ratio or self.train_ratio + self.val_ratio > 1 + 1e-12:
            raise ConfigError(f"bad split ratios {self.train_ratio}/{self.val_ratio}")
        if not 0 < self.q_source_fraction <= 1:
            raise ConfigError("q_source_fraction must lie in (0, 1]")
        if self.eval_batch_size < 1:
            raise ConfigError("eval_batch_size must be >= 1")
        if self.n_variates < 0:
            raise ConfigError("n_variates must be >= 0")
        self.model_config(n_variates or self.n_variates or 1)
        self.train_config()
        return self

    def model_config(self, n_variates: int | None = None) -> OLinearConfig:
        n = n_variates if n_variates is not None else self.n_variates
        if self.n_variates and n != self.n_variates:
            raise ConfigError(f"config says n_variates={self.n_variates} but the data has {n}")
        kwargs = {f.name: getattr(self, f.name) for f in fields(OLinearConfig) if f.name != "n_variates"}
        return OLinearConfig(n_variates=n, **kwargs)

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in names if hasattr(self, k)})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    f = _FIELDS[key]
    default = f.default if f.default is not MISSING else None
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def parse_pairs(lines, origin: str = "<config>") -> dict:
    out = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line.strip()!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = _convert(key, value)
    return out


def load_run_config(path=None, overrides=()) -> RunConfig:
    """Read a config file (optional) and apply ``key=value`` overrides on top."""
    values = {}
    base_dir = None
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        values = parse_pairs(p.read_text(encoding="utf-8").splitlines(), str(p))
        base_dir = p.parent
    over = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip()
        if k not in _FIELDS:
            raise ConfigError(f"--set: unknown key {k!r}")
        over[k] = _convert(k, v)
    values.update(over)
    # relative data paths in a config file are resolved against the file's directory
    if base_dir is not None and "data" in values and "data" not in over:
        dp = Path(values["data"])
        if not dp.is_absolute():
            values["data"] = str(base_dir / dp)
    return RunConfig(**values)
