"""Multi-stage encoder-decoder heatmap network with cross-stage aggregation.

Layout (C = base_channels, L = num_levels, k_l = kernel_sizes[l]):

* stem: 2x2 max pool -> conv k_0 (3 -> C) -> relu -> 2x2 max pool, giving
  features at 1/4 of the input resolution (the heatmap grid).
* each stage, on input x:
    encoder  e_l = relu(conv_{k_l}(a_l)) [+ D'_l],  a_0 = x, a_{l+1} = pool(e_l)
    decoder  D_{L-1} = e_{L-1};  D_l = upsample(relu(conv_{k_{l+1}}(D_{l+1}))) + e_l
    head     p = relu(conv_{k_0}(D_0));  heatmaps = conv_1x1(p) -> 29 channels
  where D'_l are the previous stage's decoder features (only when
  aggregation is enabled).
* stage s > 1 takes x_s = stem + p_{s-1}.

Every stage emits heatmaps so all stages can be supervised.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, fields

import numpy as np

from goalienet.schema import NUM_KEYPOINTS
from goalienet.tensor import (
    ShapeError,
    Tensor,
    add,
    conv2d,
    max_pool2d,
    mse_masked,
    relu,
    upsample_nearest2x,
)

HEATMAP_DOWNSAMPLE = 4
IMAGE_CHANNELS = 3
# Output convs start near zero: He-scaled heads produce large initial maps,
# and the first optimiser steps then silence the relus feeding them.
HEAD_INIT_STD = 1e-3


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    num_stages: int = 2
    num_levels: int = 3
    base_channels: int = 32
    kernel_sizes: tuple[int, ...] = (3, 5, 7)
    input_size: tuple[int, int] = (256, 256)
    heatmap_channels: int = NUM_KEYPOINTS
    aggregation_enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kernel_sizes", tuple(int(k) for k in self.kernel_sizes))
        object.__setattr__(self, "input_size", tuple(int(s) for s in self.input_size))
        self.validate()

    def validate(self) -> None:
        if self.num_stages < 1:
            raise ConfigError("num_stages must be >= 1")
        if self.num_levels < 2:
            raise ConfigError("num_levels must be >= 2")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be >= 1")
        if len(self.kernel_sizes) != self.num_levels:
            raise ConfigError(f"kernel_sizes has {len(self.kernel_sizes)} entries for "
                              f"{self.num_levels} levels")
        if any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ConfigError(f"kernel sizes must be odd, got {self.kernel_sizes}")
        if len(self.input_size) != 2:
            raise ConfigError("input_size must be (H, W)")
        # the stem quarters the input, then each extra level halves it again
        div = HEATMAP_DOWNSAMPLE * 2 ** (self.num_levels - 1)
        if any(s <= 0 or s % div for s in self.input_size):
            raise ConfigError(f"input size {self.input_size} must be divisible by {div}")
        if self.heatmap_channels != NUM_KEYPOINTS:
            raise ConfigError(f"heatmap_channels is fixed at {NUM_KEYPOINTS}")

    @property
    def heatmap_size(self) -> tuple[int, int]:
        h, w = self.input_size
        return h // HEATMAP_DOWNSAMPLE, w // HEATMAP_DOWNSAMPLE

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def conv_shapes(config: ModelConfig) -> "OrderedDict[str, tuple[int, int, int]]":
    """Every conv of the network as name -> (cin, cout, k), in build order."""
    c, ks = config.base_channels, config.kernel_sizes
    shapes = OrderedDict()
    shapes["stem"] = (IMAGE_CHANNELS, c, ks[0])
    for s in range(config.num_stages):
        for lvl in range(config.num_levels):
            shapes[f"stage{s}.enc{lvl}"] = (c, c, ks[lvl])
        for lvl in range(config.num_levels - 1, 0, -1):
            shapes[f"stage{s}.dec{lvl}"] = (c, c, ks[lvl])
        shapes[f"stage{s}.pre"] = (c, c, ks[0])
        shapes[f"stage{s}.head"] = (c, config.heatmap_channels, 1)
    return shapes


def build(config: ModelConfig, seed: int = 0) -> "OrderedDict[str, Tensor]":
    """Seeded He-normal weights (std sqrt(2 / fan_in)) and zero biases.

    The 1x1 heatmap heads use std ``HEAD_INIT_STD`` instead.
    """
    config.validate()
    rng = np.random.Generator(np.random.Philox(key=seed))
    state = OrderedDict()
    for name, (cin, cout, k) in conv_shapes(config).items():
        std = HEAD_INIT_STD if name.endswith(".head") else np.sqrt(2.0 / (cin * k * k))
        w = (rng.standard_normal((cout, cin, k, k)) * std).astype(np.float32)
        state[f"{name}.weight"] = Tensor(w, requires_grad=True, name=f"{name}.weight")
        state[f"{name}.bias"] = Tensor(np.zeros(cout, np.float32), requires_grad=True, name=f"{name}.bias")
    return state


def state_astype(state, dtype) -> "OrderedDict[str, Tensor]":
    return OrderedDict((k, Tensor(v.data.astype(dtype), requires_grad=True, name=k)) for k, v in state.items())


def param_count(state) -> int:
    return sum(t.size for t in state.values())


def _conv(state, name, x):
    k = state[f"{name}.weight"].shape[-1]
    return conv2d(x, state[f"{name}.weight"], state[f"{name}.bias"], stride=1, padding=k // 2)


def stem(state, x: Tensor) -> Tensor:
    return max_pool2d(relu(_conv(state, "stem", max_pool2d(x))))


def run_stage(state, config: ModelConfig, s: int, x: Tensor, prev: list[Tensor] | None = None):
    """One stage. Returns (heatmaps, pre-output features, decoder features per level).

    ``prev`` holds the previous stage's decoder features, added to this
    stage's encoder output at each level.
    """
    enc = []
    a = x
    for lvl in range(config.num_levels):
        e = relu(_conv(state, f"stage{s}.enc{lvl}", a))
        if prev is not None:
            e = add(e, prev[lvl])
        enc.append(e)
        if lvl + 1 < config.num_levels:
            a = max_pool2d(e)
    dec = [None] * config.num_levels
    dec[-1] = enc[-1]
    for lvl in range(config.num_levels - 2, -1, -1):
        up = upsample_nearest2x(relu(_conv(state, f"stage{s}.dec{lvl + 1}", dec[lvl + 1])))
        dec[lvl] = add(up, enc[lvl])
    pre = relu(_conv(state, f"stage{s}.pre", dec[0]))
    heat = _conv(state, f"stage{s}.head", pre)
    return heat, pre, dec


def forward(state, config: ModelConfig, batch: Tensor) -> list[Tensor]:
    """Heatmaps ``[N, 29, H/4, W/4]`` from every stage, first to last."""
    if batch.data.ndim != 4 or batch.shape[1] != IMAGE_CHANNELS or batch.shape[2:] != config.input_size:
        raise ShapeError(f"batch shape {batch.shape} does not match "
                         f"[N, {IMAGE_CHANNELS}, {config.input_size[0]}, {config.input_size[1]}]")
    base = stem(state, batch)
    outputs = []
    x, prev = base, None
    for s in range(config.num_stages):
        heat, pre, dec = run_stage(state, config, s, x, prev if config.aggregation_enabled else None)
        outputs.append(heat)
        x, prev = add(base, pre), dec
    return outputs


def loss(stage_outputs: list[Tensor], targets: Tensor, presence_mask: Tensor) -> Tensor:
    """Sum over stages of the masked heatmap MSE, all against the same targets."""
    if not stage_outputs:
        raise ShapeError("no stage outputs")
    total = None
    for out in stage_outputs:
        term = mse_masked(out, targets, presence_mask)
        total = term if total is None else add(total, term)
    return total


def state_arrays(state) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((k, v.data) for k, v in state.items())


def state_from_arrays(config: ModelConfig, arrays) -> "OrderedDict[str, Tensor]":
    """Rebuild a state from named arrays, checking names and shapes against ``config``."""
    expected = build_shapes(config)
    if list(arrays) != list(expected):
        missing = set(expected) - set(arrays)
        extra = set(arrays) - set(expected)
        raise ShapeError(f"parameter names do not match config (missing {sorted(missing)}, "
                         f"unexpected {sorted(extra)})")
    state = OrderedDict()
    for name, shape in expected.items():
        arr = np.asarray(arrays[name], dtype=np.float32)
        if arr.shape != shape:
            raise ShapeError(f"{name}: shape {arr.shape} != {shape}")
        state[name] = Tensor(arr.copy(), requires_grad=True, name=name)
    return state


def build_shapes(config: ModelConfig) -> "OrderedDict[str, tuple[int, ...]]":
    out = OrderedDict()
    for name, (cin, cout, k) in conv_shapes(config).items():
        out[f"{name}.weight"] = (cout, cin, k, k)
        out[f"{name}.bias"] = (cout,)
    return out


__all__ = [
    "ConfigError",
    "ModelConfig",
    "build",
    "build_shapes",
    "conv_shapes",
    "forward",
    "loss",
    "param_count",
    "run_stage",
    "state_arrays",
    "state_astype",
    "state_from_arrays",
    "stem",
]
