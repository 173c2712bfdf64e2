"""The CARN network and its gated (GCARN) variant.

Six stride-(1,2) convolutional encoder blocks, a two-layer LSTM bridge on the
flattened bottleneck, six attention-gated transposed-convolution decoder
blocks, and a final frequency-wise linear head that emits the two mask
planes.  Time padding is causal everywhere (past side only), so the mask at
frame t never depends on frames after t; frequency padding is symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn_ops as N
from .mask import Mask
from .tensor import (Parameter, Tensor, add, concat, mul, reshape, sigmoid,
                     transpose)

KERNEL = (3, 3)
STRIDE = (1, 2)


@dataclass
class CarnConfig:
    enc_channels: tuple = (16, 32, 64, 128, 128, 128)
    kernel: tuple = KERNEL
    stride: tuple = STRIDE
    input_channels: int = 2
    lstm_layers: int = 2
    lstm_hidden: int = 512
    variant: str = "plain"
    freq_bins: int = 256
    seed: int = 0
    # resolution of the gate wiring: the sigmoid gate multiplies the encoder
    # skip ("skip", default) or the decoder-side feature ("context")
    gate_target: str = "skip"

    def __post_init__(self):
        self.enc_channels = tuple(int(c) for c in self.enc_channels)
        self.kernel = tuple(self.kernel)
        self.stride = tuple(self.stride)
        if len(self.enc_channels) != 6:
            raise ValueError(
                f"encoder must have exactly 6 blocks, got {len(self.enc_channels)}")
        if any(c < 1 for c in self.enc_channels):
            raise ValueError("encoder channel counts must be positive")
        if self.freq_bins % 64 != 0:
            raise ValueError(
                f"freq_bins must be divisible by 2^6, got {self.freq_bins}")
        bottleneck_width = self.enc_channels[-1] * (self.freq_bins // 64)
        if bottleneck_width != self.lstm_hidden:
            raise ValueError(
                f"lstm_hidden ({self.lstm_hidden}) must equal bottleneck width "
                f"{self.enc_channels[-1]} x {self.freq_bins // 64} = {bottleneck_width}")
        if self.lstm_layers < 1:
            raise ValueError("need at least one LSTM layer")
        if self.variant not in ("plain", "gated"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.gate_target not in ("skip", "context"):
            raise ValueError(f"unknown gate_target {self.gate_target!r}")


class _Registrar:
    """Ordered parameter/buffer registry shared by all layers of one model."""

    def __init__(self, rng: np.random.Generator, dtype):
        self.rng = rng
        self.dtype = dtype
        self.params: dict[str, Parameter] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def param(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=self.dtype))
        self.params[name] = Parameter(name, t)
        return t

    def uniform(self, name: str, shape: tuple, fan_in: int) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self.param(name, self.rng.uniform(-bound, bound, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.param(name, np.zeros(shape))

    def buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        if name in self.buffers:
            raise ValueError(f"duplicate buffer name {name!r}")
        arr = np.asarray(data, dtype=self.dtype).copy()
        self.buffers[name] = arr
        return arr


class Conv2dLayer:
    def __init__(self, reg: _Registrar, name: str, c_in: int, c_out: int,
                 kernel=KERNEL, stride=STRIDE, padding=(0, 1)):
        kT, kF = kernel
        self.stride, self.padding = stride, padding
        self.causal_pad = kT - 1
        self.weight = reg.uniform(f"{name}.weight", (c_out, c_in, kT, kF),
                                  fan_in=c_in * kT * kF)
        self.bias = reg.zeros(f"{name}.bias", c_out)

    def __call__(self, x: Tensor) -> Tensor:
        x = N.pad2d(x, (self.causal_pad, 0), (0, 0))
        return N.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2dLayer:
    def __init__(self, reg: _Registrar, name: str, c_in: int, c_out: int,
                 kernel=KERNEL, stride=STRIDE, padding=(0, 1), output_padding=(0, 1)):
        kT, kF = kernel
        self.stride, self.padding, self.output_padding = stride, padding, output_padding
        self.causal_trim = kT - 1
        self.weight = reg.uniform(f"{name}.weight", (c_in, c_out, kT, kF),
                                  fan_in=c_in * kT * kF)
        self.bias = reg.zeros(f"{name}.bias", c_out)

    def __call__(self, x: Tensor) -> Tensor:
        T = x.shape[2]
        y = N.conv_transpose2d(x, self.weight, self.bias, self.stride,
                               self.padding, self.output_padding)
        # drop the trailing kT-1 frames so frame t only sees inputs <= t
        return y[:, :, :T, :]


class BatchNorm2dLayer:
    def __init__(self, reg: _Registrar, name: str, channels: int,
                 momentum: float = 0.1, eps: float = 1e-5):
        self.momentum, self.eps = momentum, eps
        self.gamma = reg.param(f"{name}.gamma", np.ones(channels))
        self.beta = reg.zeros(f"{name}.beta", channels)
        self.running_mean = reg.buffer(f"{name}.running_mean", np.zeros(channels))
        self.running_var = reg.buffer(f"{name}.running_var", np.ones(channels))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return N.batchnorm2d(x, self.gamma, self.beta, self.running_mean,
                             self.running_var, training, self.momentum, self.eps)


class PReLULayer:
    def __init__(self, reg: _Registrar, name: str, channels: int, init: float = 0.25):
        self.slope = reg.param(f"{name}.slope", np.full(channels, init))

    def __call__(self, x: Tensor) -> Tensor:
        return N.prelu(x, self.slope)


class _ConvBlock:
    """conv (or GLU-gated conv pair) -> batch norm -> PReLU."""

    def __init__(self, reg, name, c_in, c_out, gated: bool, transposed: bool):
        layer_cls = ConvTranspose2dLayer if transposed else Conv2dLayer
        self.gated = gated
        self.conv = layer_cls(reg, f"{name}.conv", c_in, c_out)
        if gated:
            self.gate = layer_cls(reg, f"{name}.gate", c_in, c_out)
        self.bn = BatchNorm2dLayer(reg, f"{name}.bn", c_out)
        self.act = PReLULayer(reg, f"{name}.act", c_out)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        h = self.conv(x)
        if self.gated:
            h = mul(h, sigmoid(self.gate(x)))
        return self.act(self.bn(h, training))


class AttentionGate:
    """Learned sigmoid gate on a skip connection.

    Two 3x3 convs lift the encoder feature and the decoder-side feature to
    twice the channel count; their sigmoid-squashed sum is projected back to
    the skip width by a third conv, and the resulting (0,1) gate multiplies
    the skip (or, optionally, the decoder-side feature).
    """

    def __init__(self, reg: _Registrar, name: str, channels: int,
                 gate_target: str = "skip"):
        self.gate_target = gate_target
        self.w_g = Conv2dLayer(reg, f"{name}.w_g", channels, 2 * channels,
                               stride=(1, 1))
        self.w_x = Conv2dLayer(reg, f"{name}.w_x", channels, 2 * channels,
                               stride=(1, 1))
        self.w_f = Conv2dLayer(reg, f"{name}.w_f", 2 * channels, channels,
                               stride=(1, 1))

    def __call__(self, skip: Tensor, context: Tensor) -> Tensor:
        if skip.shape != context.shape:
            raise ValueError(
                f"attention gate inputs must match: {skip.shape} vs {context.shape}")
        lifted = sigmoid(add(self.w_g(skip), self.w_x(context)))
        gate = sigmoid(self.w_f(lifted))
        return mul(gate, skip if self.gate_target == "skip" else context)


class LstmBridge:
    """Reshape [B,C,T,F] to a [B,T,C*F] sequence, run the LSTM stack, reshape back."""

    def __init__(self, reg: _Registrar, name: str, width: int, hidden: int, layers: int):
        self.hidden = hidden
        self.layers = []
        for l in range(layers):
            d_in = width if l == 0 else hidden
            w_ih = reg.uniform(f"{name}.{l}.w_ih", (4 * hidden, d_in), fan_in=d_in)
            w_hh = reg.uniform(f"{name}.{l}.w_hh", (4 * hidden, hidden), fan_in=hidden)
            b_ih = reg.zeros(f"{name}.{l}.b_ih", 4 * hidden)
            b_ih.data[hidden:2 * hidden] = 1.0  # forget-gate bias
            b_hh = reg.zeros(f"{name}.{l}.b_hh", 4 * hidden)
            self.layers.append((w_ih, w_hh, b_ih, b_hh))

    def __call__(self, x: Tensor) -> Tensor:
        B, C, T, F = x.shape
        seq = reshape(transpose(x, (0, 2, 1, 3)), (B, T, C * F))
        out, _ = N.lstm_forward(seq, self.layers, self.hidden)
        return transpose(reshape(out, (B, T, C, F)), (0, 2, 1, 3))


class CarnModel:
    """Full network; forward maps [B, 2, T, F] to the stacked mask planes."""

    def __init__(self, config: CarnConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.training = False
        reg = _Registrar(np.random.default_rng(config.seed), self.dtype)
        gated = config.variant == "gated"
        enc = config.enc_channels

        self.encoder_blocks = []
        c_prev = config.input_channels
        for i, c in enumerate(enc):
            self.encoder_blocks.append(
                _ConvBlock(reg, f"encoder.{i}", c_prev, c, gated, transposed=False))
            c_prev = c

        width = enc[-1] * (config.freq_bins // 64)
        self.bridge = LstmBridge(reg, "bridge.lstm", width,
                                 config.lstm_hidden, config.lstm_layers)

        self.attention_gates = [
            AttentionGate(reg, f"attention.{i}", enc[i], config.gate_target)
            for i in range(6)
        ]

        self.decoder_blocks = []
        for i in range(6):
            c_out = enc[i - 1] if i > 0 else config.input_channels
            self.decoder_blocks.append(
                _ConvBlock(reg, f"decoder.{i}", 2 * enc[i], c_out, gated,
                           transposed=True))

        out_width = config.input_channels * config.freq_bins
        self.out_weight = reg.uniform("output.linear.weight",
                                      (out_width, out_width), fan_in=out_width)
        self.out_bias = reg.zeros("output.linear.bias", out_width)

        self._params = reg.params
        self._buffers = reg.buffers

    # -- mode -------------------------------------------------------------
    def train(self) -> "CarnModel":
        self.training = True
        return self

    def eval(self) -> "CarnModel":
        self.training = False
        return self

    # -- registry ---------------------------------------------------------
    def parameters(self) -> list[Parameter]:
        return list(self._params.values())

    def named_parameters(self) -> dict[str, Parameter]:
        return dict(self._params)

    def buffers(self) -> dict[str, np.ndarray]:
        return self._buffers

    # -- forward pieces ---------------------------------------------------
    def encoder_forward(self, x: Tensor):
        """Returns (bottleneck, list of 6 skip features)."""
        if x.shape[1] != self.config.input_channels or x.shape[3] != self.config.freq_bins:
            raise ValueError(
                f"expected input [B, {self.config.input_channels}, T, "
                f"{self.config.freq_bins}], got {x.shape}")
        skips = []
        h = x
        for block in self.encoder_blocks:
            h = block(h, self.training)
            skips.append(h)
        return h, skips

    def bridge_forward(self, bottleneck: Tensor) -> Tensor:
        return self.bridge(bottleneck)

    def decoder_forward(self, bridge_out: Tensor, skips) -> Tensor:
        cur = bridge_out
        for i in range(5, -1, -1):
            gated_skip = self.attention_gates[i](skips[i], cur)
            cur = self.decoder_blocks[i](concat([gated_skip, cur], axis=1),
                                         self.training)
        return cur

    def output_head(self, decoder_out: Tensor) -> Tensor:
        """Frequency-wise affine map on the flattened (channel x freq) axis."""
        B, C, T, F = decoder_out.shape
        flat = reshape(transpose(decoder_out, (0, 2, 1, 3)), (B, T, C * F))
        mapped = N.linear(flat, self.out_weight, self.out_bias)
        return transpose(reshape(mapped, (B, T, C, F)), (0, 2, 1, 3))

    def forward(self, x: Tensor) -> Tensor:
        bottleneck, skips = self.encoder_forward(x)
        bridged = self.bridge_forward(bottleneck)
        decoded = self.decoder_forward(bridged, skips)
        return self.output_head(decoded)

    __call__ = forward


def carn_forward(x: Tensor, model: CarnModel) -> list[Mask]:
    """Run the network and unpack the output planes into one Mask per batch item."""
    out = model.forward(x)
    return [Mask(out.data[b, 0].astype(np.float64),
                 out.data[b, 1].astype(np.float64))
            for b in range(out.shape[0])]


def count_parameters(model: CarnModel) -> int:
    return sum(p.tensor.size for p in model.parameters())
