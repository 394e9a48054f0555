"""Five-stage convolutional encoder (VGG-shaped, randomly initialised)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .config import EncoderConfig
from .params import Params, conv_params
from .tensor import ShapeError, Tensor

PAG_STAGES = (3, 4, 5)


@dataclass
class FeaturePyramid:
    """Encoder outputs for one image group.

    ``pag[s]`` holds every layer of stages 3-5 (inputs to the association
    branch); ``dec[s]`` holds the last layer of stages 1-5 (decoder inputs).
    """

    pag: dict[int, list[Tensor]]
    dec: dict[int, Tensor]


def stage_size(size: int, stage: int) -> int:
    return size // 2 ** (stage - 1)


def init_encoder(cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64) -> Params:
    params: Params = {}
    cin = 3
    for s, (cout, n_layers) in enumerate(zip(cfg.channels, cfg.layers), start=1):
        for l in range(1, n_layers + 1):
            conv_params(params, f"enc.s{s}.l{l}", rng, 3, 3, cin, cout, dtype)
            cin = cout
    return params


def encode(images: Tensor, cfg: EncoderConfig, params: Params) -> FeaturePyramid:
    if images.ndim != 4 or images.shape[-1] != 3:
        raise ShapeError(f"images must be [N,H,W,3], got {images.shape}")
    h, w = images.shape[1:3]
    if h % 16 or w % 16:
        raise ShapeError(f"input size {h}x{w} must be divisible by 16")
    if images.data.min() < 0 or images.data.max() > 1:
        raise ValueError("images must lie in [0, 1]")

    pag: dict[int, list[Tensor]] = {}
    dec: dict[int, Tensor] = {}
    x = images
    for s in range(1, 6):
        if s > 1:
            x = ops.max_pool2d(x, 2)
        layers = []
        for l in range(1, cfg.layers[s - 1] + 1):
            pre = ops.conv2d(x, params[f"enc.s{s}.l{l}.w"], params[f"enc.s{s}.l{l}.b"])
            x = ops.relu(pre)
            layers.append(pre if cfg.pre_relu_features else x)
        dec[s] = x
        if s in PAG_STAGES:
            pag[s] = layers
            if not cfg.pre_relu_features:
                # the decoder reads the same object the association branch reads
                dec[s] = layers[-1]
    return FeaturePyramid(pag=pag, dec=dec)
