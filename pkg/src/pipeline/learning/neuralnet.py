"""Pilha mínima de rede neural em float64 (numpy), com backprop exato.

Topologia (kind):
  - "cnn":      conv(8, 5x5, s2) -> ReLU -> conv(16, 3x3, s2) -> ReLU -> flatten -> dense(128) -> ReLU -> cabeças
  - "cnn-lstm": igual, com célula LSTM(64) antes das cabeças
  - "mlp":      dense(64) -> ReLU -> dense(64) -> ReLU -> cabeças, sobre o vetor de estado de 7 valores

Cabeças: média gaussiana (2), log-std independente do estado (2, limitado a
[-5, 2]) e valor escalar. Toda a rede trabalha em lote: (N, C, H, W) ou (N, 7).
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from modules.exceptions import ConfigError, ContractViolationError, ShapeError

Tensor = np.ndarray
Params = Dict[str, Tensor]

NET_KINDS = ("cnn", "cnn-lstm", "mlp")
LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_2PI = math.log(2.0 * math.pi)
ENTROPY_PER_DIM = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class NetConfig:
    kind: str = "cnn-lstm"
    obs_channels: int = 3
    obs_height: int = 27
    obs_width: int = 48
    conv1_filters: int = 8
    conv1_kernel: int = 5
    conv1_stride: int = 2
    conv2_filters: int = 16
    conv2_kernel: int = 3
    conv2_stride: int = 2
    dense_units: int = 128
    lstm_units: int = 64
    mlp_units: int = 64
    state_size: int = 7
    action_dim: int = 2
    init_log_std: float = 0.0
    seed: int = 0

    @property
    def recurrent(self) -> bool:
        return self.kind == "cnn-lstm"

    @property
    def input_shape(self) -> Tuple[int, ...]:
        if self.kind == "mlp":
            return (self.state_size,)
        return (self.obs_channels, self.obs_height, self.obs_width)

    def conv_output_hw(self) -> Tuple[int, int, int, int]:
        h1 = (self.obs_height - self.conv1_kernel) // self.conv1_stride + 1
        w1 = (self.obs_width - self.conv1_kernel) // self.conv1_stride + 1
        h2 = (h1 - self.conv2_kernel) // self.conv2_stride + 1
        w2 = (w1 - self.conv2_kernel) // self.conv2_stride + 1
        return h1, w1, h2, w2

    def validate(self) -> "NetConfig":
        if self.kind not in NET_KINDS:
            raise ConfigError(f"Tipo de rede inválido: {self.kind!r} (use {NET_KINDS})")
        if self.kind != "mlp":
            h1, w1, h2, w2 = self.conv_output_hw()
            if min(h1, w1, h2, w2) < 1:
                raise ConfigError(
                    f"Observação {self.obs_height}x{self.obs_width} pequena demais para as convoluções"
                )
        if not (LOG_STD_MIN <= self.init_log_std <= LOG_STD_MAX):
            raise ConfigError("init_log_std fora de [-5, 2]")
        return self


# ===================== INICIALIZAÇÃO =====================

def orthogonal(shape, gain: float, rng: np.random.Generator) -> Tensor:
    rows = shape[0]
    cols = int(np.prod(shape[1:]))
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q.reshape(shape)


def sigmoid(x: Tensor) -> Tensor:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ===================== CAMADAS =====================

class Dense:
    def __init__(self, name: str, n_in: int, n_out: int, gain: float = math.sqrt(2.0)):
        self.name, self.n_in, self.n_out, self.gain = name, n_in, n_out, gain
        self.w, self.b = f"{name}.w", f"{name}.b"

    def shapes(self):
        return {self.w: (self.n_in, self.n_out), self.b: (self.n_out,)}

    def init(self, rng) -> Params:
        return {self.w: orthogonal((self.n_in, self.n_out), self.gain, rng), self.b: np.zeros(self.n_out)}

    def forward(self, p: Params, x: Tensor):
        return x @ p[self.w] + p[self.b], x

    def backward(self, p: Params, cache, dy: Tensor, need_dx: bool = True):
        x = cache
        grads = {self.w: x.T @ dy, self.b: dy.sum(axis=0)}
        return (dy @ p[self.w].T if need_dx else None), grads


class Conv2D:
    """Convolução 'valid' com stride, via im2col (sliding_window_view)."""

    def __init__(self, name: str, in_ch: int, out_ch: int, kernel: int, stride: int, gain: float = math.sqrt(2.0)):
        self.name, self.in_ch, self.out_ch = name, in_ch, out_ch
        self.kernel, self.stride, self.gain = kernel, stride, gain
        self.w, self.b = f"{name}.w", f"{name}.b"

    def shapes(self):
        return {self.w: (self.out_ch, self.in_ch, self.kernel, self.kernel), self.b: (self.out_ch,)}

    def init(self, rng) -> Params:
        return {self.w: orthogonal(self.shapes()[self.w], self.gain, rng), self.b: np.zeros(self.out_ch)}

    def forward(self, p: Params, x: Tensor):
        k, s = self.kernel, self.stride
        win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        n, _, ho, wo = win.shape[:4]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, -1)
        wmat = p[self.w].reshape(self.out_ch, -1)
        y = cols @ wmat.T + p[self.b]
        y = y.reshape(n, ho, wo, self.out_ch).transpose(0, 3, 1, 2)
        return y, (cols, x.shape, ho, wo)

    def backward(self, p: Params, cache, dy: Tensor, need_dx: bool = True):
        cols, x_shape, ho, wo = cache
        k, s = self.kernel, self.stride
        n = x_shape[0]
        dy2 = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, self.out_ch)
        wmat = p[self.w].reshape(self.out_ch, -1)
        grads = {self.w: (dy2.T @ cols).reshape(p[self.w].shape), self.b: dy2.sum(axis=0)}
        if not need_dx:
            return None, grads
        dcols = (dy2 @ wmat).reshape(n, ho, wo, self.in_ch, k, k)
        dx = np.zeros(x_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx, grads


class ReLU:
    def forward(self, x: Tensor):
        mask = x > 0.0
        return np.where(mask, x, 0.0), mask

    def backward(self, mask, dy: Tensor):
        return np.where(mask, dy, 0.0)


class LSTMCell:
    """Célula LSTM (gates i, f, g, o concatenados em 4H)."""

    def __init__(self, name: str, n_in: int, hidden: int):
        self.name, self.n_in, self.hidden = name, n_in, hidden
        self.wx, self.wh, self.b = f"{name}.wx", f"{name}.wh", f"{name}.b"

    def shapes(self):
        return {self.wx: (self.n_in, 4 * self.hidden), self.wh: (self.hidden, 4 * self.hidden), self.b: (4 * self.hidden,)}

    def init(self, rng) -> Params:
        return {
            self.wx: orthogonal((self.n_in, 4 * self.hidden), 1.0, rng),
            self.wh: orthogonal((self.hidden, 4 * self.hidden), 1.0, rng),
            self.b: np.zeros(4 * self.hidden),
        }

    def forward(self, p: Params, x: Tensor, h: Tensor, c: Tensor):
        H = self.hidden
        z = x @ p[self.wx] + h @ p[self.wh] + p[self.b]
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = sigmoid(z[:, 3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, c_new, (x, h, c, i, f, g, o, tc)

    def backward(self, p: Params, cache, dh_new: Tensor, dc_new: Tensor):
        x, h, c, i, f, g, o, tc = cache
        do = dh_new * tc
        dc = dc_new + dh_new * o * (1.0 - tc * tc)
        dz = np.concatenate(
            [dc * g * i * (1.0 - i), dc * c * f * (1.0 - f), dc * i * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        grads = {self.wx: x.T @ dz, self.wh: h.T @ dz, self.b: dz.sum(axis=0)}
        return dz @ p[self.wx].T, dz @ p[self.wh].T, dc * f, grads


# ===================== ESTADO / SAÍDAS =====================

@dataclass(frozen=True)
class RecurrentState:
    hidden: Tensor
    cell: Tensor

    @classmethod
    def zeros(cls, size: int, batch: Optional[int] = None) -> "RecurrentState":
        shape = (size,) if batch is None else (batch, size)
        return cls(np.zeros(shape), np.zeros(shape))

    def reset_rows(self, rows) -> "RecurrentState":
        h, c = self.hidden.copy(), self.cell.copy()
        h[rows] = 0.0
        c[rows] = 0.0
        return RecurrentState(h, c)


@dataclass(frozen=True)
class PolicyOutput:
    mean: Tensor
    log_std: Tensor
    value: Tensor
    state: Optional[RecurrentState]


@dataclass
class ForwardCache:
    version: int
    batched: bool
    n: int
    steps: list = field(default_factory=list)
    used: bool = False


class PolicyNetwork:
    def __init__(self, config: NetConfig = NetConfig(), params: Optional[Params] = None):
        self.config = config.validate()
        self._build_layers()
        if params is None:
            params = self._init_params(np.random.default_rng(config.seed))
        self._check_params(params)
        self.params: Params = OrderedDict((k, np.array(params[k], dtype=np.float64)) for k in self.param_shapes())
        self.version = 0

    # --- montagem ---
    def _build_layers(self):
        cfg = self.config
        self.relu = ReLU()
        if cfg.kind == "mlp":
            self.trunk = [Dense("fc1", cfg.state_size, cfg.mlp_units), Dense("fc2", cfg.mlp_units, cfg.mlp_units)]
            feat = cfg.mlp_units
        else:
            _, _, h2, w2 = cfg.conv_output_hw()
            self.trunk = [
                Conv2D("conv1", cfg.obs_channels, cfg.conv1_filters, cfg.conv1_kernel, cfg.conv1_stride),
                Conv2D("conv2", cfg.conv1_filters, cfg.conv2_filters, cfg.conv2_kernel, cfg.conv2_stride),
                Dense("fc", cfg.conv2_filters * h2 * w2, cfg.dense_units),
            ]
            feat = cfg.dense_units
        self.lstm = LSTMCell("lstm", feat, cfg.lstm_units) if cfg.recurrent else None
        if self.lstm is not None:
            feat = cfg.lstm_units
        self.mean_head = Dense("pi", feat, cfg.action_dim, gain=0.01)
        self.value_head = Dense("v", feat, 1, gain=1.0)
        self.log_std_name = "log_std"

    def _init_params(self, rng) -> Params:
        params: Params = OrderedDict()
        for layer in self._param_layers():
            params.update(layer.init(rng))
        params[self.log_std_name] = np.full(self.config.action_dim, self.config.init_log_std)
        return params

    def param_shapes(self) -> "OrderedDict[str, Tuple[int, ...]]":
        shapes = OrderedDict()
        for layer in self._param_layers():
            shapes.update(layer.shapes())
        shapes[self.log_std_name] = (self.config.action_dim,)
        return shapes

    def _param_layers(self):
        layers = list(self.trunk)
        if self.lstm is not None:
            layers.append(self.lstm)
        return layers + [self.mean_head, self.value_head]

    def _check_params(self, params: Params):
        for name, shape in self.param_shapes().items():
            if name not in params:
                raise ShapeError(f"Parâmetro ausente: {name}")
            if tuple(np.shape(params[name])) != shape:
                raise ShapeError(f"Parâmetro {name} com shape {np.shape(params[name])}, esperado {shape}")

    @property
    def parameter_count(self) -> int:
        return int(sum(int(np.prod(s)) for s in self.param_shapes().values()))

    def initial_state(self, batch: Optional[int] = None) -> Optional[RecurrentState]:
        if not self.config.recurrent:
            return None
        return RecurrentState.zeros(self.config.lstm_units, batch)

    def snapshot(self) -> Params:
        return OrderedDict((k, v.copy()) for k, v in self.params.items())

    def set_params(self, params: Params):
        self._check_params(params)
        self.params = OrderedDict((k, np.array(params[k], dtype=np.float64)) for k in self.params)
        self.version += 1

    def copy(self) -> "PolicyNetwork":
        return PolicyNetwork(self.config, self.snapshot())

    # --- forward / backward ---
    def forward(self, obs: Tensor, state: Optional[RecurrentState] = None):
        cfg = self.config
        obs = np.asarray(obs, dtype=np.float64)
        in_shape = cfg.input_shape
        if obs.shape == in_shape:
            batched, x = False, obs[None]
        elif obs.ndim == len(in_shape) + 1 and obs.shape[1:] == in_shape:
            batched, x = True, obs
        else:
            raise ShapeError(f"Observação com shape {obs.shape}, esperado {in_shape} (ou lote)")
        n = x.shape[0]
        p = self.params
        cache = ForwardCache(version=self.version, batched=batched, n=n)

        for layer in self.trunk:
            if isinstance(layer, Dense) and x.ndim > 2:
                cache.steps.append(("flatten", x.shape))
                x = x.reshape(n, -1)
            x, lc = layer.forward(p, x)
            cache.steps.append(("layer", layer, lc))
            x, mask = self.relu.forward(x)
            cache.steps.append(("relu", mask))

        new_state = state
        if self.lstm is not None:
            if state is None:
                state = RecurrentState.zeros(cfg.lstm_units, n if batched else None)
            h = np.asarray(state.hidden, dtype=np.float64).reshape(n, cfg.lstm_units)
            c = np.asarray(state.cell, dtype=np.float64).reshape(n, cfg.lstm_units)
            h_new, c_new, lc = self.lstm.forward(p, x, h, c)
            cache.steps.append(("lstm", lc))
            x = h_new
            new_state = RecurrentState(h_new if batched else h_new[0], c_new if batched else c_new[0])

        feat = x
        mean, mc = self.mean_head.forward(p, feat)
        value, vc = self.value_head.forward(p, feat)
        raw = p[self.log_std_name]
        log_std = np.broadcast_to(np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), mean.shape).copy()
        cache.steps.append(("heads", mc, vc, (raw >= LOG_STD_MIN) & (raw <= LOG_STD_MAX)))

        value = value[:, 0]
        if not batched:
            out = PolicyOutput(mean[0], log_std[0], float(value[0]), new_state)
        else:
            out = PolicyOutput(mean, log_std, value, new_state)
        return out, cache

    def backward(self, cache: ForwardCache, d_mean, d_log_std, d_value) -> Params:
        if cache.used:
            raise ContractViolationError("Cache de forward já consumido por um backward")
        if cache.version != self.version:
            raise ContractViolationError("Cache de forward obsoleto: parâmetros mudaram desde o forward")
        cache.used = True
        cfg, p, n = self.config, self.params, cache.n
        d_mean = np.asarray(d_mean, dtype=np.float64).reshape(n, cfg.action_dim)
        d_log_std = np.asarray(d_log_std, dtype=np.float64).reshape(n, cfg.action_dim)
        d_value = np.asarray(d_value, dtype=np.float64).reshape(n, 1)

        grads: Params = {}
        steps = list(cache.steps)
        _, mc, vc, inside = steps.pop()
        d_feat, g = self.mean_head.backward(p, mc, d_mean)
        grads.update(g)
        d_feat_v, g = self.value_head.backward(p, vc, d_value)
        grads.update(g)
        d_feat = d_feat + d_feat_v
        grads[self.log_std_name] = np.where(inside, d_log_std.sum(axis=0), 0.0)

        dx = d_feat
        while steps:
            step = steps.pop()
            kind = step[0]
            if kind == "lstm":
                # estado recorrente armazenado: o gradiente não atravessa para o passo anterior
                dx, _, _, g = self.lstm.backward(p, step[1], dx, np.zeros_like(dx))
                grads.update(g)
            elif kind == "relu":
                dx = self.relu.backward(step[1], dx)
            elif kind == "flatten":
                dx = dx.reshape(step[1])
            else:
                layer, lc = step[1], step[2]
                first = not steps
                dx, g = layer.backward(p, lc, dx, need_dx=not first)
                grads.update(g)
        return OrderedDict((k, grads[k]) for k in p)


# ===================== DISTRIBUIÇÃO GAUSSIANA =====================

def gaussian_log_prob(mean, log_std, action) -> Tensor:
    mean, log_std, action = (np.asarray(a, dtype=np.float64) for a in (mean, log_std, action))
    z = (action - mean) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std, axis=-1) - 0.5 * mean.shape[-1] * LOG_2PI


def gaussian_log_prob_grads(mean, log_std, action):
    """Derivadas de log N(a; m, s) em relação a m e a log s."""
    inv_var = np.exp(-2.0 * np.asarray(log_std, dtype=np.float64))
    diff = np.asarray(action, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    return diff * inv_var, diff * diff * inv_var - 1.0


def gaussian_entropy(log_std) -> Tensor:
    log_std = np.asarray(log_std, dtype=np.float64)
    return np.sum(ENTROPY_PER_DIM + log_std, axis=-1)


def sample_action(mean, log_std, rng: np.random.Generator) -> Tensor:
    mean = np.asarray(mean, dtype=np.float64)
    return mean + np.exp(log_std) * rng.standard_normal(mean.shape)


# ===================== OTIMIZAÇÃO =====================

@dataclass
class AdamState:
    step: int
    m: Params
    v: Params
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamState":
        return cls(0, OrderedDict((k, np.zeros_like(v)) for k, v in params.items()),
                   OrderedDict((k, np.zeros_like(v)) for k, v in params.items()))


def adam_step(params: Params, grads: Params, opt: AdamState, lr: float):
    if set(params) != set(grads) or set(params) != set(opt.m):
        raise ShapeError("Parâmetros, gradientes e estado do Adam com chaves diferentes")
    t = opt.step + 1
    b1, b2 = opt.beta1, opt.beta2
    new_p, new_m, new_v = OrderedDict(), OrderedDict(), OrderedDict()
    for k, p in params.items():
        g = grads[k]
        if np.shape(g) != np.shape(p) or np.shape(opt.m[k]) != np.shape(p):
            raise ShapeError(f"Shape divergente em {k}: param {np.shape(p)}, grad {np.shape(g)}")
        m = b1 * opt.m[k] + (1.0 - b1) * g
        v = b2 * opt.v[k] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + opt.eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(t, new_m, new_v, b1, b2, opt.eps)


def global_norm(grads: Params) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_grad_norm(grads: Params, max_norm: float) -> Params:
    if max_norm <= 0:
        raise ValueError("max_norm deve ser positivo")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return OrderedDict((k, g * scale) for k, g in grads.items())


def config_to_dict(config: NetConfig) -> dict:
    return asdict(config)
