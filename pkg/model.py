"""Global forecaster and baseline.

The forecaster is a simplified NHITS: stacks of MLP blocks linked by residual
connections. Each block reads the running residual of the (optionally mean-scaled)
input window, optionally max-pooled with its stack's kernel, and emits a backcast and
a forecast. Both are produced on a coarse grid and linearly interpolated back to q and
h points when the kernel is larger than 1. The residual loses the backcast, the
forecasts add up. Everything is float64 numpy with hand-written gradients.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from errors import ModelNumericsError, ShapeMismatchError

logger = logging.getLogger(__name__)

LOSSES = ("mae", "smape")
SCALINGS = ("none", "mean")
ACTIVATIONS = ("relu",)
SCALE_EPS = 1e-8
SMAPE_EPS = 1e-8
CHECKPOINT_FORMAT = "ondat-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_size: int
    horizon: int
    n_stacks: int = 3
    blocks_per_stack: int = 1
    hidden_layers: int = 2
    hidden_units: int = 512
    activation: str = "relu"
    pooling_kernels: tuple[int, ...] = (1, 1, 1)
    loss: str = "mae"
    window_scaling: str = "mean"

    def __post_init__(self) -> None:
        object.__setattr__(self, "pooling_kernels", tuple(int(k) for k in self.pooling_kernels))
        for name in ("input_size", "horizon", "n_stacks", "blocks_per_stack", "hidden_layers", "hidden_units"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if len(self.pooling_kernels) != self.n_stacks:
            raise ValueError(
                f"pooling_kernels has {len(self.pooling_kernels)} entries for {self.n_stacks} stacks"
            )
        if any(k < 1 for k in self.pooling_kernels):
            raise ValueError("pooling kernels must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.window_scaling not in SCALINGS:
            raise ValueError(f"window_scaling must be one of {SCALINGS}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["pooling_kernels"] = list(self.pooling_kernels)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


def _interpolation_matrix(n_out: int, n_in: int) -> np.ndarray:
    """(n_out, n_in) matrix mapping n_in evenly spaced knots onto n_out points by linear interpolation."""
    if n_in == n_out:
        return np.eye(n_out)
    if n_in == 1:
        return np.ones((n_out, 1))
    knots = np.linspace(0.0, n_out - 1.0, n_in)
    grid = np.arange(n_out, dtype=np.float64)
    basis = np.eye(n_in)
    return np.column_stack([np.interp(grid, knots, basis[c]) for c in range(n_in)])


@dataclass(frozen=True, eq=False)
class _BlockSpec:
    prefix: str
    kernel: int
    pooled_size: int
    backcast_interp: np.ndarray
    forecast_interp: np.ndarray


def _block_specs(config: ModelConfig) -> list[_BlockSpec]:
    specs = []
    q, h = config.input_size, config.horizon
    for s, kernel in enumerate(config.pooling_kernels):
        pooled = math.ceil(q / kernel)
        backcast_interp = _interpolation_matrix(q, pooled)
        forecast_interp = _interpolation_matrix(h, math.ceil(h / kernel))
        for b in range(config.blocks_per_stack):
            specs.append(_BlockSpec(f"stack{s}.block{b}", kernel, pooled, backcast_interp, forecast_interp))
    return specs


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    for spec in _block_specs(config):
        fan_in = spec.pooled_size
        for i in range(config.hidden_layers):
            shapes[f"{spec.prefix}.hidden{i}.weight"] = (fan_in, config.hidden_units)
            shapes[f"{spec.prefix}.hidden{i}.bias"] = (config.hidden_units,)
            fan_in = config.hidden_units
        shapes[f"{spec.prefix}.backcast.weight"] = (fan_in, spec.backcast_interp.shape[1])
        shapes[f"{spec.prefix}.backcast.bias"] = (spec.backcast_interp.shape[1],)
        shapes[f"{spec.prefix}.forecast.weight"] = (fan_in, spec.forecast_interp.shape[1])
        shapes[f"{spec.prefix}.forecast.bias"] = (spec.forecast_interp.shape[1],)
    return shapes


class ForecastModel:
    """Parameters of the residual-stack forecaster plus the score that justified them."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray],
                 validation_score: float | None = None):
        expected = parameter_shapes(config)
        if set(expected) != set(params):
            raise ShapeMismatchError("parameter names do not match the model config")
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise ShapeMismatchError(f"{name} has shape {params[name].shape}, expected {shape}")
        self.config = config
        self.params = {name: np.asarray(params[name], dtype=np.float64) for name in expected}
        self.validation_score = validation_score
        self.blocks = _block_specs(config)

    def copy(self) -> "ForecastModel":
        return ForecastModel(self.config, {k: v.copy() for k, v in self.params.items()}, self.validation_score)

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def assert_finite(self) -> None:
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ModelNumericsError("non-finite parameter", layer=name)


def init_model(config: ModelConfig, rng: np.random.Generator | int | None = 0) -> ForecastModel:
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) initialisation for weights and biases."""
    rng = np.random.default_rng(rng)
    params = {}
    fan_in = None
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".weight"):
            fan_in = shape[0]
        bound = math.sqrt(1.0 / fan_in)
        params[name] = rng.uniform(-bound, bound, size=shape)
    return ForecastModel(config, params)


@dataclass(eq=False)
class _BlockCache:
    pool_index: np.ndarray | None
    activations: list[np.ndarray]
    pre_activations: list[np.ndarray]
    backcast: np.ndarray


@dataclass(eq=False)
class ForwardCache:
    """Everything backward() needs from a forward pass."""

    scaled_inputs: np.ndarray
    scale: np.ndarray
    blocks: list[_BlockCache]
    residual: np.ndarray
    forecast: np.ndarray

    @property
    def backcasts(self) -> list[np.ndarray]:
        return [b.backcast for b in self.blocks]


def _max_pool(x: np.ndarray, kernel: int) -> tuple[np.ndarray, np.ndarray | None]:
    if kernel == 1:
        return x, None
    rows, width = x.shape
    pooled_size = math.ceil(width / kernel)
    padded = np.pad(x, ((0, 0), (0, pooled_size * kernel - width)), constant_values=-np.inf)
    windows = padded.reshape(rows, pooled_size, kernel)
    arg = windows.argmax(axis=2)
    pooled = np.take_along_axis(windows, arg[..., None], axis=2)[..., 0]
    return pooled, arg + np.arange(pooled_size) * kernel


def _unpool(grad: np.ndarray, index: np.ndarray | None, width: int) -> np.ndarray:
    if index is None:
        return grad
    out = np.zeros((grad.shape[0], width))
    np.put_along_axis(out, index, grad, axis=1)
    return out


def _check_finite(values: np.ndarray, layer: str) -> None:
    if not np.all(np.isfinite(values)):
        row = int(np.flatnonzero(~np.all(np.isfinite(values), axis=1))[0])
        raise ModelNumericsError("non-finite activation", layer=layer, row=row)


def forward(model: ForecastModel, inputs) -> tuple[np.ndarray, ForwardCache]:
    """Forecast a (B, q) batch of input windows; returns (B, h) forecasts and the backprop cache."""
    config = model.config
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] != config.input_size:
        raise ShapeMismatchError(f"inputs must have shape (B >= 1, {config.input_size}), got {x.shape}")
    _check_finite(x, "input")

    if config.window_scaling == "mean":
        row_mean = x.mean(axis=1)
        scale = np.where(row_mean > SCALE_EPS, row_mean, 1.0)
    else:
        scale = np.ones(x.shape[0])
    scaled = x / scale[:, None]

    residual = scaled
    forecast = np.zeros((x.shape[0], config.horizon))
    caches = []
    p = model.params
    for spec in model.blocks:
        pooled, pool_index = _max_pool(residual, spec.kernel)
        activations, pre_activations = [pooled], []
        a = pooled
        for i in range(config.hidden_layers):
            z = a @ p[f"{spec.prefix}.hidden{i}.weight"] + p[f"{spec.prefix}.hidden{i}.bias"]
            a = np.maximum(z, 0.0)
            _check_finite(a, f"{spec.prefix}.hidden{i}")
            pre_activations.append(z)
            activations.append(a)
        theta_backcast = a @ p[f"{spec.prefix}.backcast.weight"] + p[f"{spec.prefix}.backcast.bias"]
        theta_forecast = a @ p[f"{spec.prefix}.forecast.weight"] + p[f"{spec.prefix}.forecast.bias"]
        backcast = theta_backcast @ spec.backcast_interp.T
        block_forecast = theta_forecast @ spec.forecast_interp.T
        _check_finite(backcast, f"{spec.prefix}.backcast")
        _check_finite(block_forecast, f"{spec.prefix}.forecast")

        caches.append(_BlockCache(pool_index, activations, pre_activations, backcast))
        residual = residual - backcast
        forecast = forecast + block_forecast

    out = forecast * scale[:, None]
    _check_finite(out, "output")
    return out, ForwardCache(scaled, scale, caches, residual, out)


def predict(model: ForecastModel, inputs) -> np.ndarray:
    return forward(model, inputs)[0]


def _loss_and_grad(forecast: np.ndarray, targets: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    diff = forecast - targets
    n = diff.size
    if kind == "mae":
        return float(np.abs(diff).mean()), np.sign(diff) / n
    raw = (np.abs(forecast) + np.abs(targets)) / 2.0
    clamped = raw <= SMAPE_EPS
    denom = np.where(clamped, SMAPE_EPS, raw)
    loss = float((np.abs(diff) / denom).mean())
    grad = np.sign(diff) / denom
    grad = grad - np.where(clamped, 0.0, np.abs(diff) * np.sign(forecast) / (2.0 * denom ** 2))
    return loss, grad / n


def compute_loss(forecast, targets, kind: str = "mae") -> float:
    """Mean MAE or SMAPE loss over all cells."""
    forecast = np.asarray(forecast, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if forecast.shape != targets.shape:
        raise ShapeMismatchError(f"forecast {forecast.shape} and targets {targets.shape} differ")
    return _loss_and_grad(forecast, targets, kind)[0]


def backward(model: ForecastModel, cache: ForwardCache, targets) -> dict[str, np.ndarray]:
    """Exact gradients of the configured mean loss with respect to every parameter."""
    config = model.config
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != cache.forecast.shape:
        raise ShapeMismatchError(f"targets {targets.shape} do not match forecast {cache.forecast.shape}")
    if len(cache.blocks) != len(model.blocks):
        raise ShapeMismatchError("cache was produced by a model with a different block layout")

    _, d_out = _loss_and_grad(cache.forecast, targets, config.loss)
    d_forecast = d_out * cache.scale[:, None]
    d_residual = np.zeros_like(cache.scaled_inputs)
    p = model.params
    grads = {}
    for spec, block in reversed(list(zip(model.blocks, cache.blocks))):
        d_theta_forecast = d_forecast @ spec.forecast_interp
        # the backcast is subtracted from the residual handed to the next block
        d_theta_backcast = -d_residual @ spec.backcast_interp
        a = block.activations[-1]
        grads[f"{spec.prefix}.forecast.weight"] = a.T @ d_theta_forecast
        grads[f"{spec.prefix}.forecast.bias"] = d_theta_forecast.sum(axis=0)
        grads[f"{spec.prefix}.backcast.weight"] = a.T @ d_theta_backcast
        grads[f"{spec.prefix}.backcast.bias"] = d_theta_backcast.sum(axis=0)
        d_a = (d_theta_forecast @ p[f"{spec.prefix}.forecast.weight"].T
               + d_theta_backcast @ p[f"{spec.prefix}.backcast.weight"].T)
        for i in reversed(range(config.hidden_layers)):
            d_z = d_a * (block.pre_activations[i] > 0)
            grads[f"{spec.prefix}.hidden{i}.weight"] = block.activations[i].T @ d_z
            grads[f"{spec.prefix}.hidden{i}.bias"] = d_z.sum(axis=0)
            d_a = d_z @ p[f"{spec.prefix}.hidden{i}.weight"].T
        d_residual = d_residual + _unpool(d_a, block.pool_index, config.input_size)

    return {name: grads[name] for name in p}


@dataclass
class OptimizerState:
    """Adam moments plus a step-decay learning-rate schedule."""

    learning_rate: float = 1e-3
    max_steps: int | None = None
    n_decays: int = 3
    decay_factor: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def decay_boundaries(self) -> list[int]:
        if not self.max_steps:
            return []
        return [self.max_steps * i // (self.n_decays + 1) for i in range(1, self.n_decays + 1)]

    def current_lr(self) -> float:
        passed = sum(1 for b in self.decay_boundaries() if b > 0 and self.step >= b)
        return self.learning_rate * self.decay_factor ** passed

    def to_dict(self) -> dict:
        data = {k: getattr(self, k) for k in (
            "learning_rate", "max_steps", "n_decays", "decay_factor", "beta1", "beta2", "eps", "step")}
        data["m"] = {k: _encode_array(v) for k, v in self.m.items()}
        data["v"] = {k: _encode_array(v) for k, v in self.v.items()}
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "OptimizerState":
        data = dict(data)
        m = {k: _decode_array(v) for k, v in data.pop("m", {}).items()}
        v = {k: _decode_array(v) for k, v in data.pop("v", {}).items()}
        return cls(**data, m=m, v=v)


def adam_step(model: ForecastModel, gradients: dict[str, np.ndarray],
              opt: OptimizerState) -> tuple[ForecastModel, OptimizerState]:
    """One Adam update in place; nothing is written unless every new value is finite."""
    for name, g in gradients.items():
        if not np.all(np.isfinite(g)):
            raise ModelNumericsError("non-finite gradient", layer=name)

    lr = opt.current_lr()
    t = opt.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, param in model.params.items():
        g = gradients[name]
        m = opt.beta1 * opt.m.get(name, 0.0) + (1.0 - opt.beta1) * g
        v = opt.beta2 * opt.v.get(name, 0.0) + (1.0 - opt.beta2) * g * g
        m_hat = m / (1.0 - opt.beta1 ** t)
        v_hat = v / (1.0 - opt.beta2 ** t)
        updated = param - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        if not np.all(np.isfinite(updated)):
            raise ModelNumericsError(f"non-finite update at step {t} (lr={lr:g})", layer=name)
        new_params[name], new_m[name], new_v[name] = updated, m, v

    model.params.update(new_params)
    opt.m, opt.v, opt.step = new_m, new_v, t
    return model, opt


def seasonal_naive(series_history, period: int, horizon: int) -> np.ndarray:
    """Repeat the last observed seasonal cycle: forecast[i] = history[t - m + (i mod m)]."""
    history = np.asarray(series_history, dtype=np.float64)
    t = history.size
    if period < 1:
        raise ValueError("period must be >= 1")
    if t < period:
        raise ValueError(f"seasonal naive needs at least {period} observations, got {t}")
    return history[t - period + np.arange(horizon) % period]


def _encode_array(value: np.ndarray) -> dict:
    value = np.asarray(value, dtype=np.float64)
    return {"shape": list(value.shape), "values": value.ravel().tolist()}


def _decode_array(data: dict) -> np.ndarray:
    return np.asarray(data["values"], dtype=np.float64).reshape(data["shape"])


def save_checkpoint(path, model: ForecastModel, opt: OptimizerState | None = None) -> Path:
    """Versioned JSON container: config, float64 parameters, optimizer state, validation score."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "validation_score": model.validation_score,
        "parameters": {name: _encode_array(value) for name, value in model.params.items()},
        "optimizer": opt.to_dict() if opt is not None else None,
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def load_checkpoint(path) -> tuple[ForecastModel, OptimizerState | None]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT or payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")
    config = ModelConfig.from_dict(payload["config"])
    params = {name: _decode_array(value) for name, value in payload["parameters"].items()}
    model = ForecastModel(config, params, payload.get("validation_score"))
    opt = OptimizerState.from_dict(payload["optimizer"]) if payload.get("optimizer") else None
    return model, opt
