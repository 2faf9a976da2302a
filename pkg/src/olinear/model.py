"""The OLinear network with hand-written reverse-mode gradients.

Tensor layout inside the network is ``(B, N, d, D)``: batch, variate,
embedding channel, hidden feature. Linear layers store weights as
``(fan_in, fan_out)`` and compute ``x @ w + b`` on the last axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy.special import erf

from olinear.data import CorrEstimate
from olinear.errors import ConfigError, ShapeError, StateError
from olinear.transform import METHODS as BASIS_METHODS

TRANSFORMS = ("softplus", "softmax", "sigmoid", "relu", "identity")
NORMS = ("l1", "l2")
VARIANTS = ("olinear", "olinear_c")
LN_EPS = 1e-5
REVIN_EPS = 1e-5


@dataclass(frozen=True)
class OLinearConfig:
    n_variates: int
    lookback: int
    horizon: int
    embed_size: int = 16
    model_dim: int = 64
    n_blocks: int = 1
    normlin_transform: str = "softplus"
    normlin_norm: str = "l1"
    csl_pre_linear: bool = True
    csl_post_linear: bool = True
    variant: str = "olinear"
    basis_method: str = "eigen"
    # transform applied to the variate correlation matrix for olinear_c
    corr_transform: str = "softmax"

    def __post_init__(self):
        for name in ("n_variates", "lookback", "horizon", "embed_size", "model_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_blocks < 0:
            raise ConfigError(f"n_blocks must be >= 0, got {self.n_blocks}")
        if self.normlin_transform not in TRANSFORMS:
            raise ConfigError(f"normlin_transform must be one of {TRANSFORMS}")
        if self.corr_transform not in TRANSFORMS:
            raise ConfigError(f"corr_transform must be one of {TRANSFORMS}")
        if self.normlin_norm not in NORMS:
            raise ConfigError(f"normlin_norm must be one of {NORMS}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.basis_method not in BASIS_METHODS:
            raise ConfigError(f"basis_method must be one of {BASIS_METHODS}")

    def replace(self, **changes) -> "OLinearConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


class OLinearParams:
    """Learnable tensors plus frozen buffers, both keyed by name.

    ``version`` is bumped by every in-place update so that stale forward
    caches can be detected.
    """

    def __init__(self, tensors: dict, frozen: dict, version: int = 0):
        self.tensors = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
        self.frozen = {k: np.asarray(v, dtype=np.float64) for k, v in frozen.items()}
        for v in self.frozen.values():
            v.setflags(write=False)
        self.version = version

    def __getitem__(self, name):
        if name in self.tensors:
            return self.tensors[name]
        return self.frozen[name]

    def __contains__(self, name):
        return name in self.tensors or name in self.frozen

    def copy(self) -> "OLinearParams":
        return OLinearParams(
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.frozen.items()},
            self.version,
        )

    def bump(self):
        self.version += 1

    def n_learnable(self) -> int:
        return sum(v.size for v in self.tensors.values())


def block_key(layer: int, name: str) -> str:
    return f"blocks.{layer}.{name}"


def expected_shapes(config: OLinearConfig) -> tuple[dict, dict]:
    """(learnable, frozen) name -> shape maps implied by a config."""
    T, tau, d, D, N = config.lookback, config.horizon, config.embed_size, config.model_dim, config.n_variates
    learn = {"phi_d": (d,), "enc_w": (T, D), "enc_b": (D,)}
    frozen = {"q_in": (T, T), "q_out": (tau, tau)}
    for layer in range(config.n_blocks):
        k = lambda name: block_key(layer, name)  # noqa: E731
        if config.csl_pre_linear:
            learn[k("csl_pre_w")] = (D, D)
            learn[k("csl_pre_b")] = (D,)
        if config.variant == "olinear":
            learn[k("normlin_w")] = (N, N)
        else:
            frozen[k("normlin_fixed")] = (N, N)
        if config.csl_post_linear:
            learn[k("csl_post_w")] = (D, D)
            learn[k("csl_post_b")] = (D,)
        learn[k("csl_ln_g")] = (D,)
        learn[k("csl_ln_b")] = (D,)
        learn[k("isl_w1")] = (D, D)
        learn[k("isl_b1")] = (D,)
        learn[k("isl_w2")] = (D, D)
        learn[k("isl_b2")] = (D,)
        learn[k("isl_ln_g")] = (D,)
        learn[k("isl_ln_b")] = (D,)
    learn.update({"dec_w": (D, tau), "dec_b": (tau,), "flat_w": (d * tau, tau), "flat_b": (tau,)})
    return learn, frozen


def init_params(config: OLinearConfig, rng: np.random.Generator, q_in, q_out, corr_weight=None) -> OLinearParams:
    """Fresh parameters: uniform(+-1/sqrt(fan_in)) weights, zero biases, unit LayerNorm gains,
    all-ones phi_d and zero NormLin weights.

    ``corr_weight`` is the frozen mixing matrix required by the olinear_c variant.
    """
    learn_shapes, frozen_shapes = expected_shapes(config)
    tensors = {}
    for name, shape in learn_shapes.items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "phi_d" or leaf.endswith("ln_g"):
            tensors[name] = np.ones(shape)
        elif leaf == "normlin_w" or leaf.endswith("_b") or leaf.endswith(("_b1", "_b2")):
            tensors[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    frozen = {"q_in": np.asarray(q_in, dtype=np.float64), "q_out": np.asarray(q_out, dtype=np.float64)}
    if config.variant == "olinear_c":
        if corr_weight is None:
            raise ConfigError("olinear_c needs a frozen correlation weight")
        for layer in range(config.n_blocks):
            frozen[block_key(layer, "normlin_fixed")] = np.asarray(corr_weight, dtype=np.float64)
    params = OLinearParams(tensors, frozen)
    check_shapes(params, config)
    return params


def check_shapes(params: OLinearParams, config: OLinearConfig):
    learn, frozen = expected_shapes(config)
    for group, want in ((params.tensors, learn), (params.frozen, frozen)):
        if set(group) != set(want):
            missing = sorted(set(want) - set(group))
            extra = sorted(set(group) - set(want))
            raise ShapeError(f"parameter set mismatch: missing {missing}, unexpected {extra}")
        for name, shape in want.items():
            if group[name].shape != tuple(shape):
                raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {group[name].shape}")


# ---------------------------------------------------------------- primitives

def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax_rows(a):
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_jacobian(a) -> np.ndarray:
    c = softmax_rows(np.asarray(a, dtype=np.float64))
    return np.diag(c) - np.outer(c, c)


def normlin_row_jacobian(a) -> np.ndarray:
    """d c / d a for c = b / ||b||_1 with b = softplus(a).

    Closed form (1/||b||_1) (Diag(sigmoid(a)) - b_bar sigmoid(a)^T).
    """
    a = np.asarray(a, dtype=np.float64)
    b = softplus(a)
    s = b.sum()
    sig = sigmoid(a)
    return (np.diag(sig) - np.outer(b / s, sig)) / s


@dataclass
class NormLinWeight:
    """Effective mixing matrix plus what backward needs."""

    matrix: np.ndarray
    pre: np.ndarray          # transformed weight before row normalisation
    norms: np.ndarray        # per-row L1/L2 norm
    zero_rows: np.ndarray    # rows that fell back to uniform 1/N
    transform: str
    norm: str
    raw: np.ndarray

    @property
    def degenerate(self) -> bool:
        return bool(self.zero_rows.any())


def normlin_weight_full(w, transform: str = "softplus", norm: str = "l1") -> NormLinWeight:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ShapeError(f"NormLin weight must be square, got {w.shape}")
    if transform == "softplus":
        b = softplus(w)
    elif transform == "sigmoid":
        b = sigmoid(w)
    elif transform == "softmax":
        b = softmax_rows(w)
    elif transform == "relu":
        b = np.maximum(w, 0.0)
    elif transform == "identity":
        b = w.copy()
    else:
        raise ConfigError(f"unknown NormLin transform {transform!r}")
    if norm == "l1":
        nrm = np.abs(b).sum(axis=1)
    elif norm == "l2":
        nrm = np.sqrt((b * b).sum(axis=1))
    else:
        raise ConfigError(f"unknown NormLin norm {norm!r}")
    zero = nrm == 0.0
    safe = np.where(zero, 1.0, nrm)
    m = b / safe[:, None]
    if zero.any():
        m[zero] = 1.0 / w.shape[0]
    return NormLinWeight(m, b, nrm, zero, transform, norm, w)


def normlin_weight(w, transform: str = "softplus", norm: str = "l1") -> np.ndarray:
    """Entrywise transform followed by row-wise L1 or L2 normalisation.

    A row whose transformed entries are all zero (possible for relu and
    identity) is replaced by the uniform row 1/N.
    """
    return normlin_weight_full(w, transform, norm).matrix


def normlin_weight_backward(nw: NormLinWeight, g: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the raw weight given the gradient w.r.t. the effective matrix."""
    w, b, nrm = nw.raw, nw.pre, nw.norms
    safe = np.where(nw.zero_rows, 1.0, nrm)[:, None]
    if nw.transform == "softplus" and nw.norm == "l1":
        # closed-form row Jacobian: (1/s)(Diag(sig) - b_bar sig^T), applied transposed
        sig = sigmoid(w)
        bbar = b / safe
        gw = sig / safe * (g - (g * bbar).sum(axis=1, keepdims=True))
    else:
        dot = (g * b).sum(axis=1, keepdims=True)
        if nw.norm == "l1":
            gb = g / safe - np.sign(b) * dot / safe**2
        else:
            gb = g / safe - b * dot / safe**3
        if nw.transform == "softmax":
            # rows of softmax: Diag(c) - c c^T is symmetric
            gw = b * (gb - (gb * b).sum(axis=1, keepdims=True))
        elif nw.transform == "sigmoid":
            gw = gb * b * (1.0 - b)
        elif nw.transform == "relu":
            gw = gb * (w > 0)
        elif nw.transform == "identity":
            gw = gb
        else:  # softplus with l2
            gw = gb * sigmoid(w)
    gw = np.where(nw.zero_rows[:, None], 0.0, gw)
    return gw


def build_olinear_c_weight(corr_v: CorrEstimate, transform: str = "softmax") -> np.ndarray:
    """Frozen mixing matrix for olinear_c: row softmax (or another transform + L1) of CorrMat_v."""
    c = np.asarray(corr_v.matrix if isinstance(corr_v, CorrEstimate) else corr_v, dtype=np.float64)
    if transform == "softmax":
        return softmax_rows(c)
    return normlin_weight(c, transform, "l1")


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return cdf + x * pdf


def layernorm_fwd(x, g, b, eps=LN_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def layernorm_bwd(gy, g, cache):
    xhat, rstd = cache
    gxhat = gy * g
    gx = rstd * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                 - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
    lead = tuple(range(gy.ndim - 1))
    return gx, (gy * xhat).sum(axis=lead), gy.sum(axis=lead)


def _linear_grads(x, gy):
    fan_in, fan_out = x.shape[-1], gy.shape[-1]
    gw = x.reshape(-1, fan_in).T @ gy.reshape(-1, fan_out)
    gb = gy.reshape(-1, fan_out).sum(axis=0)
    return gw, gb


# ---------------------------------------------------------------- RevIN

@dataclass(frozen=True)
class RevInState:
    mean: np.ndarray   # (B, N)
    std: np.ndarray    # (B, N)
    eps: float = REVIN_EPS


def revin_normalize(x, eps: float = REVIN_EPS):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"RevIN expects B x N x T input, got {x.shape}")
    if x.shape[-1] < 2:
        raise ShapeError("RevIN needs a lookback of at least 2 steps")
    mean = x.mean(axis=-1)
    xc = x - mean[..., None]
    std = np.sqrt((xc * xc).mean(axis=-1) + eps)
    return xc / std[..., None], RevInState(mean, std, eps)


def revin_denormalize(y, state: RevInState):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[:2] != state.mean.shape:
        raise ShapeError(f"denormalize: leading shape {y.shape[:2]} does not match stats {state.mean.shape}")
    return y * state.std[..., None] + state.mean[..., None]


def dimension_extend(x, phi_d):
    """Outer product on a new embedding axis: out[b, n, k, t] = x[b, n, t] * phi_d[k]."""
    phi_d = np.asarray(phi_d, dtype=np.float64)
    if phi_d.ndim != 1:
        raise ShapeError("phi_d must be a vector")
    return x[..., None, :] * phi_d[:, None]


# ---------------------------------------------------------------- blocks

def csl_forward(h, params: OLinearParams, config: OLinearConfig, layer: int):
    """LayerNorm(h + Post(NormLin(Pre(h)))) with NormLin mixing the variate axis."""
    key = lambda name: block_key(layer, name)  # noqa: E731
    B, N, d, D = h.shape
    if N != config.n_variates:
        raise ShapeError(f"CSL block {layer}: expected {config.n_variates} variates, got {N}")
    cache = {"h": h}
    u = h
    if config.csl_pre_linear:
        u = h @ params[key("csl_pre_w")] + params[key("csl_pre_b")]
    cache["u"] = u
    if config.variant == "olinear":
        nw = normlin_weight_full(params[key("normlin_w")], config.normlin_transform, config.normlin_norm)
        mix = nw.matrix
        cache["nw"] = nw
    else:
        mix = params[key("normlin_fixed")]
    cache["mix"] = mix
    v = np.matmul(mix, u.reshape(B, N, d * D)).reshape(B, N, d, D)
    cache["v"] = v
    p = v
    if config.csl_post_linear:
        p = v @ params[key("csl_post_w")] + params[key("csl_post_b")]
    out, cache["ln"] = layernorm_fwd(h + p, params[key("csl_ln_g")], params[key("csl_ln_b")])
    return out, cache


def csl_backward(gout, cache, params: OLinearParams, config: OLinearConfig, layer: int, grads: dict):
    key = lambda name: block_key(layer, name)  # noqa: E731
    B, N, d, D = gout.shape
    gr, grads[key("csl_ln_g")], grads[key("csl_ln_b")] = layernorm_bwd(gout, params[key("csl_ln_g")], cache["ln"])
    gh = gr.copy()
    gv = gr
    if config.csl_post_linear:
        grads[key("csl_post_w")], grads[key("csl_post_b")] = _linear_grads(cache["v"], gr)
        gv = gr @ params[key("csl_post_w")].T
    mix = cache["mix"]
    gv3 = gv.reshape(B, N, d * D)
    u3 = cache["u"].reshape(B, N, d * D)
    gu = np.matmul(mix.T, gv3).reshape(B, N, d, D)
    if config.variant == "olinear":
        gmix = np.einsum("bnf,bmf->nm", gv3, u3)
        grads[key("normlin_w")] = normlin_weight_backward(cache["nw"], gmix)
    if config.csl_pre_linear:
        grads[key("csl_pre_w")], grads[key("csl_pre_b")] = _linear_grads(cache["h"], gu)
        gh += gu @ params[key("csl_pre_w")].T
    else:
        gh += gu
    return gh


def isl_forward(h, params: OLinearParams, layer: int):
    """LayerNorm(h + Lin2(GELU(Lin1(h)))) along the hidden axis."""
    key = lambda name: block_key(layer, name)  # noqa: E731
    a = h @ params[key("isl_w1")] + params[key("isl_b1")]
    g = gelu(a)
    o = g @ params[key("isl_w2")] + params[key("isl_b2")]
    out, ln = layernorm_fwd(h + o, params[key("isl_ln_g")], params[key("isl_ln_b")])
    return out, {"h": h, "a": a, "g": g, "ln": ln}


def isl_backward(gout, cache, params: OLinearParams, layer: int, grads: dict):
    key = lambda name: block_key(layer, name)  # noqa: E731
    gr, grads[key("isl_ln_g")], grads[key("isl_ln_b")] = layernorm_bwd(gout, params[key("isl_ln_g")], cache["ln"])
    grads[key("isl_w2")], grads[key("isl_b2")] = _linear_grads(cache["g"], gr)
    ga = (gr @ params[key("isl_w2")].T) * gelu_grad(cache["a"])
    grads[key("isl_w1")], grads[key("isl_b1")] = _linear_grads(cache["h"], ga)
    return gr + ga @ params[key("isl_w1")].T


# ---------------------------------------------------------------- network

@dataclass
class ForwardCache:
    params: OLinearParams
    config: OLinearConfig
    version: int
    revin: RevInState
    xn: np.ndarray
    z: np.ndarray
    blocks: list = field(default_factory=list)
    h_last: np.ndarray | None = None
    yt_flat: np.ndarray | None = None


def forward(inputs, params: OLinearParams, config: OLinearConfig):
    """Predict B x N x tau from B x N x T lookback windows. Returns (predictions, cache)."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (config.n_variates, config.lookback):
        raise ShapeError(
            f"input stage: expected B x {config.n_variates} x {config.lookback}, got {x.shape}"
        )
    B = x.shape[0]
    N, T, tau, d = config.n_variates, config.lookback, config.horizon, config.embed_size
    xn, state = revin_normalize(x)
    e = dimension_extend(xn, params["phi_d"])
    z = e @ params["q_in"]
    h = z @ params["enc_w"] + params["enc_b"]
    cache = ForwardCache(params, config, params.version, state, xn, z)
    for layer in range(config.n_blocks):
        h, c_csl = csl_forward(h, params, config, layer)
        h, c_isl = isl_forward(h, params, layer)
        cache.blocks.append((c_csl, c_isl))
    cache.h_last = h
    y = h @ params["dec_w"] + params["dec_b"]
    yt = y @ params["q_out"].T
    yt_flat = yt.reshape(B, N, d * tau)
    cache.yt_flat = yt_flat
    f = yt_flat @ params["flat_w"] + params["flat_b"]
    if f.shape != (B, N, tau):
        raise ShapeError(f"flatten stage produced {f.shape}, expected {(B, N, tau)}")
    return revin_denormalize(f, state), cache


def backward(cache: ForwardCache, d_predictions) -> dict:
    """Gradients of every learnable tensor, keyed like ``params.tensors``."""
    params, config = cache.params, cache.config
    if params.version != cache.version:
        raise StateError("forward cache is stale: parameters changed since the forward pass")
    g = np.asarray(d_predictions, dtype=np.float64)
    B = cache.xn.shape[0]
    N, T, tau, d, D = config.n_variates, config.lookback, config.horizon, config.embed_size, config.model_dim
    if g.shape != (B, N, tau):
        raise StateError(f"upstream gradient shape {g.shape} does not match cached batch {(B, N, tau)}")
    grads = {}
    gf = g * cache.revin.std[..., None]
    grads["flat_w"], grads["flat_b"] = _linear_grads(cache.yt_flat, gf)
    gyt = (gf @ params["flat_w"].T).reshape(B, N, d, tau)
    gy = gyt @ params["q_out"]
    grads["dec_w"], grads["dec_b"] = _linear_grads(cache.h_last, gy)
    gh = gy @ params["dec_w"].T
    for layer in reversed(range(config.n_blocks)):
        c_csl, c_isl = cache.blocks[layer]
        gh = isl_backward(gh, c_isl, params, layer, grads)
        gh = csl_backward(gh, c_csl, params, config, layer, grads)
    grads["enc_w"], grads["enc_b"] = _linear_grads(cache.z, gh)
    gz = gh @ params["enc_w"].T
    ge = gz @ params["q_in"].T
    grads["phi_d"] = np.einsum("bnkt,bnt->k", ge, cache.xn)
    return {name: grads[name] for name in params.tensors}


def predict(inputs, params: OLinearParams, config: OLinearConfig, batch_size: int = 256) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    out = [forward(x[i:i + batch_size], params, config)[0] for i in range(0, x.shape[0], batch_size)]
    if not out:
        return np.zeros((0, config.n_variates, config.horizon))
    return np.concatenate(out, axis=0)
