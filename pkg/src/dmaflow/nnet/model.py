"""CNN -> recurrent -> dense regression network with analytic gradients."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import InvalidConfig, ShapeMismatch
from . import layers

FORMAT = "dmaflow.model"
FORMAT_VERSION = 1

# parameters that receive the L2 penalty; biases are not regularized
WEIGHTS = ("conv_w", "rnn_wx", "rnn_wh", "dense_w", "out_w")


@dataclass(frozen=True)
class NetConfig:
    input_channels: int = 1
    window: int = 15
    conv_filters: int = 16
    conv_kernel: int = 3
    cell: str = "LSTM"
    hidden: int = 32
    dense_hidden: int = 16
    dropout_rate: float = 0.2
    l2_lambda: float = 1e-4
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    patience: int = 5
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        cell = str(self.cell).upper()
        if cell not in layers.RECURRENT:
            raise InvalidConfig(f"cell must be LSTM or GRU, got {self.cell!r}")
        object.__setattr__(self, "cell", cell)
        for name in ("input_channels", "window", "conv_filters", "conv_kernel", "hidden",
                     "dense_hidden", "epochs", "batch_size", "patience"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.conv_kernel > self.window:
            raise InvalidConfig(f"conv_kernel {self.conv_kernel} exceeds window {self.window}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.l2_lambda < 0:
            raise InvalidConfig(f"l2_lambda must be non-negative, got {self.l2_lambda}")
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.clip_norm > 0:
            raise InvalidConfig(f"clip_norm must be positive, got {self.clip_norm}")

    def replace(self, **changes) -> "NetConfig":
        return NetConfig(**{**asdict(self), **changes})

    @property
    def conv_length(self) -> int:
        return self.window - self.conv_kernel + 1

    def shapes(self) -> dict[str, tuple[int, ...]]:
        gates = layers.RECURRENT[self.cell][0]
        K, k, F = self.conv_kernel, self.input_channels, self.conv_filters
        H, D = self.hidden, self.dense_hidden
        return {
            "conv_w": (K, k, F),
            "conv_b": (F,),
            "rnn_wx": (F, gates * H),
            "rnn_wh": (H, gates * H),
            "rnn_b": (gates * H,),
            "dense_w": (H, D),
            "dense_b": (D,),
            "out_w": (D, 1),
            "out_b": (1,),
        }


def glorot_bound(name: str, shape: tuple[int, ...]) -> float:
    if name == "conv_w":
        K, k, F = shape
        fan_in, fan_out = K * k, K * F
    else:
        fan_in, fan_out = shape
    return math.sqrt(6.0 / (fan_in + fan_out))


@dataclass
class ModelParams:
    config: NetConfig
    arrays: dict

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self):
        return iter(self.arrays)

    def items(self):
        return self.arrays.items()

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def n_params(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "config": asdict(self.config),
            "params": {name: {"shape": list(a.shape), "data": a.ravel().tolist()}
                       for name, a in self.arrays.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
            raise InvalidConfig(f"not a {FORMAT} v{FORMAT_VERSION} artifact")
        known = {f.name for f in fields(NetConfig)}
        config = NetConfig(**{k: v for k, v in doc["config"].items() if k in known})
        arrays = {}
        for name, shape in config.shapes().items():
            entry = doc["params"][name]
            if tuple(entry["shape"]) != shape:
                raise ShapeMismatch(f"{name}: stored shape {entry['shape']} != {list(shape)}")
            arrays[name] = np.array(entry["data"], dtype=float).reshape(shape)
        return cls(config, arrays)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        return cls.from_dict(json.loads(text))


def init(config: NetConfig) -> ModelParams:
    rng = np.random.default_rng([config.seed, 0])
    arrays = {}
    for name, shape in config.shapes().items():
        if name in WEIGHTS:
            bound = glorot_bound(name, shape)
            arrays[name] = rng.uniform(-bound, bound, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    return ModelParams(config, arrays)


def _check_input(config: NetConfig, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (config.input_channels, config.window):
        raise ShapeMismatch(f"expected windows of shape (k={config.input_channels}, "
                            f"W={config.window}), got {x.shape[-2:] if x.ndim >= 2 else x.shape}")
    return x


def forward_batch(params: ModelParams, x, training: bool = False, rng=None):
    """Predictions for a batch of windows x (B, k, W).

    Dropout is applied after the conv block and after the recurrent block
    only when ``training`` is set.
    """
    cfg = params.config
    x = _check_input(cfg, x)
    p = params.arrays
    drop = training and cfg.dropout_rate > 0
    if drop and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")

    z1, conv_cache = layers.conv1d_forward(x, p["conv_w"], p["conv_b"])
    a1 = layers.relu_forward(z1)
    m1 = layers.dropout_mask(a1.shape, cfg.dropout_rate, rng) if drop else None
    d1 = a1 * m1 if drop else a1

    _, rnn_fwd, _ = layers.RECURRENT[cfg.cell]
    h, rnn_cache = rnn_fwd(d1, p["rnn_wx"], p["rnn_wh"], p["rnn_b"])
    m2 = layers.dropout_mask(h.shape, cfg.dropout_rate, rng) if drop else None
    d2 = h * m2 if drop else h

    z3 = d2 @ p["dense_w"] + p["dense_b"]
    a3 = layers.relu_forward(z3)
    yhat = (a3 @ p["out_w"] + p["out_b"])[:, 0]
    cache = (conv_cache, z1, m1, rnn_cache, m2, d2, z3, a3)
    return yhat, cache


def backward_batch(params: ModelParams, cache, yhat, targets) -> dict:
    """Gradient of mean_b (y_b - yhat_b)^2 + lambda * sum(w^2)."""
    cfg = params.config
    p = params.arrays
    conv_cache, z1, m1, rnn_cache, m2, d2, z3, a3 = cache
    targets = np.asarray(targets, dtype=float).reshape(-1)
    B = yhat.shape[0]

    dy = (-2.0 / B) * (targets - yhat)
    grads = {"out_w": a3.T @ dy[:, None], "out_b": np.array([dy.sum()])}
    da3 = dy[:, None] * p["out_w"][:, 0]
    dz3 = layers.relu_backward(da3, z3)
    grads["dense_w"] = d2.T @ dz3
    grads["dense_b"] = dz3.sum(axis=0)
    dd2 = dz3 @ p["dense_w"].T
    dh = dd2 * m2 if m2 is not None else dd2

    _, _, rnn_bwd = layers.RECURRENT[cfg.cell]
    dd1, g = rnn_bwd(dh, rnn_cache, p["rnn_wx"], p["rnn_wh"])
    grads["rnn_wx"], grads["rnn_wh"], grads["rnn_b"] = g["wx"], g["wh"], g["b"]
    da1 = dd1 * m1 if m1 is not None else dd1
    dz1 = layers.relu_backward(da1, z1)
    _, g = layers.conv1d_backward(dz1, conv_cache, p["conv_w"], need_dx=False)
    grads["conv_w"], grads["conv_b"] = g["w"], g["b"]

    if cfg.l2_lambda:
        for name in WEIGHTS:
            grads[name] = grads[name] + 2.0 * cfg.l2_lambda * p[name]
    return {name: grads[name] for name in p}


def forward(params: ModelParams, window, training: bool = False, rng=None):
    """Single-window forward; ``window`` is a FeatureWindow or a (k, W) array."""
    values = getattr(window, "values", window)
    yhat, cache = forward_batch(params, np.asarray(values)[None], training, rng)
    return float(yhat[0]), (cache, yhat)


def backward(params: ModelParams, cache, target: float) -> dict:
    inner, yhat = cache
    return backward_batch(params, inner, yhat, [target])


def loss(params: ModelParams, x, targets, training=False, rng=None) -> float:
    """Mean squared error plus the L2 penalty (the objective ``backward`` differentiates)."""
    yhat, _ = forward_batch(params, x, training, rng)
    targets = np.asarray(targets, dtype=float).reshape(-1)
    l2 = sum(float(np.sum(params[n] ** 2)) for n in WEIGHTS)
    return float(np.mean((targets - yhat) ** 2)) + params.config.l2_lambda * l2


def sgd_step(params: ModelParams, grads: dict, learning_rate: float) -> ModelParams:
    arrays = {}
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ShapeMismatch(f"{name}: gradient shape {g.shape} != parameter shape {w.shape}")
        arrays[name] = w - learning_rate * g
    return ModelParams(params.config, arrays)


def predict_batch(params: ModelParams, x, batch_size: int = 4096) -> np.ndarray:
    x = _check_input(params.config, x)
    out = [forward_batch(params, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.empty(0)


def predict(params: ModelParams, window) -> float:
    return forward(params, window)[0]
