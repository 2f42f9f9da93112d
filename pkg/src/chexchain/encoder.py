"""Densely connected convolutional encoder.

Layout: 7x7 stride-2 stem conv, 3x3 stride-2 max pool, then
[DenseBlock -> TransitionBlock] x num_dense_blocks with the final block's
transition omitted, then global average pooling down to x_enc.

ConvBlock = batch_norm -> relu -> 3x3 conv producing K channels, whose input
is the channel concatenation of the block input and every previous ConvBlock
output in the same block. TransitionBlock = batch_norm -> relu -> 1x1 conv
to floor(compression * channels) -> 2x2 average pool stride 2.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Tensor
from .errors import ConfigurationError
from .rng import substream


@dataclass(frozen=True)
class EncoderConfig:
    input_resolution: int
    growth_rate: int
    num_dense_blocks: int
    convblocks_per_dense_block: int
    initial_channels: int = 16
    transition_compression: float = 1.0
    encoded_dim: int = None  # derived when None; validated when given

    def validate(self) -> None:
        if self.input_resolution < 1 or self.growth_rate < 1:
            raise ConfigurationError("encoder: resolution and growth rate must be positive")
        if self.num_dense_blocks < 1 or self.convblocks_per_dense_block < 1:
            raise ConfigurationError("encoder: block counts must be positive")
        if self.initial_channels < 1:
            raise ConfigurationError("encoder: initial_channels must be positive")
        if not (0.0 < self.transition_compression <= 1.0):
            raise ConfigurationError("encoder: transition_compression must be in (0, 1]")


def _channel_trace(config: EncoderConfig):
    """Channels entering each dense block and the final encoded dimension."""
    d = config.initial_channels
    entering = []
    for b in range(config.num_dense_blocks):
        entering.append(d)
        d += config.convblocks_per_dense_block * config.growth_rate
        if b < config.num_dense_blocks - 1:
            d = math.floor(config.transition_compression * d)
    return entering, d


def _spatial_trace(config: EncoderConfig):
    """Spatial side lengths after stem and after each transition."""
    r = config.input_resolution
    r = (r + 2 * 3 - 7) // 2 + 1  # stem conv, pad 3
    r = (r + 2 * 1 - 3) // 2 + 1  # stem max pool, pad 1
    sides = [r]
    for _ in range(config.num_dense_blocks - 1):
        if r < 2 or r % 2 != 0:
            raise ConfigurationError(
                f"encoder: resolution {config.input_resolution} does not halve cleanly "
                f"through the pooling chain (stuck at {r})"
            )
        r = r // 2
        sides.append(r)
    if r < 1:
        raise ConfigurationError("encoder: pooling chain bottoms out below 1 pixel")
    return sides


def derived_encoded_dim(config: EncoderConfig) -> int:
    return _channel_trace(config)[1]


class EncoderParams:
    """All learnable tensors plus batch-norm running states, per block."""

    def __init__(self, config: EncoderConfig):
        config.validate()
        dim = derived_encoded_dim(config)
        if config.encoded_dim is not None and config.encoded_dim != dim:
            raise ConfigurationError(
                f"encoder: encoded_dim {config.encoded_dim} != channel arithmetic {dim}"
            )
        _spatial_trace(config)  # raises if pooling bottoms out
        self.config = config
        self.encoded_dim = dim
        self.tensors = {}  # name -> Tensor, insertion-ordered
        self.bn_states = {}  # name -> ops.BNState

    def add_param(self, name: str, arr: np.ndarray) -> Tensor:
        t = Tensor(arr, requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def parameters(self):
        return list(self.tensors.items())

    def param_count(self) -> int:
        return param_count(self)


def build_encoder(config: EncoderConfig, seed: int) -> EncoderParams:
    """Deterministic He fan-in initialization from the init substream."""
    params = EncoderParams(config)
    rng = substream(seed, "init")

    def conv_init(name, f, c, kh, kw):
        fan_in = c * kh * kw
        w = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(f, c, kh, kw))
        params.add_param(f"{name}.w", w)
        params.add_param(f"{name}.b", np.zeros(f))

    def bn_init(name, c):
        params.add_param(f"{name}.gamma", np.ones(c))
        params.add_param(f"{name}.beta", np.zeros(c))
        params.bn_states[name] = ops.BNState(c)

    conv_init("stem", config.initial_channels, 1, 7, 7)
    d = config.initial_channels
    for b in range(config.num_dense_blocks):
        for k in range(config.convblocks_per_dense_block):
            prefix = f"block{b}.conv{k}"
            bn_init(f"{prefix}.bn", d)
            conv_init(f"{prefix}.conv", config.growth_rate, d, 3, 3)
            d += config.growth_rate
        if b < config.num_dense_blocks - 1:
            prefix = f"block{b}.transition"
            dout = math.floor(config.transition_compression * d)
            bn_init(f"{prefix}.bn", d)
            conv_init(f"{prefix}.conv", dout, d, 1, 1)
            d = dout
    return params


def encode(params: EncoderParams, images: Tensor, mode: str) -> Tensor:
    """images: Tensor[N,1,R,R] -> x_enc: Tensor[N, encoded_dim]."""
    cfg = params.config
    if images.data.ndim != 4 or images.data.shape[1] != 1:
        raise ConfigurationError(f"encode: expected (N,1,R,R), got {images.data.shape}")
    if images.data.shape[2] != cfg.input_resolution or images.data.shape[3] != cfg.input_resolution:
        raise ConfigurationError(
            f"encode: resolution {images.data.shape[2:]} != config {cfg.input_resolution}"
        )
    t = params.tensors

    def bn(name, x):
        return ops.batch_norm(
            x, t[f"{name}.gamma"], t[f"{name}.beta"], params.bn_states[name], mode
        )

    x = ops.conv2d(images, t["stem.w"], t["stem.b"], stride=2, padding=3)
    x = ops.pool2d(ops.pad2d(x, 1), "max", window=3, stride=2)
    for b in range(cfg.num_dense_blocks):
        feats = [x]
        for k in range(cfg.convblocks_per_dense_block):
            prefix = f"block{b}.conv{k}"
            inp = feats[0] if len(feats) == 1 else ops.concat_channels(*feats)
            h = ops.relu(bn(f"{prefix}.bn", inp))
            h = ops.conv2d(h, t[f"{prefix}.conv.w"], t[f"{prefix}.conv.b"], stride=1, padding=1)
            feats.append(h)
        x = ops.concat_channels(*feats)
        if b < cfg.num_dense_blocks - 1:
            prefix = f"block{b}.transition"
            h = ops.relu(bn(f"{prefix}.bn", x))
            h = ops.conv2d(h, t[f"{prefix}.conv.w"], t[f"{prefix}.conv.b"], stride=1, padding=0)
            x = ops.pool2d(h, "avg", window=2, stride=2)
    return ops.global_avg_pool(x)


def param_count(params) -> int:
    """Exact count of scalar learnables (running stats excluded).

    Accepts an EncoderParams or anything exposing parameters() -> [(name, Tensor)].
    """
    return sum(int(t.data.size) for _, t in params.parameters())
