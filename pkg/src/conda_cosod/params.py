"""Parameter creation helpers.  Parameters live in flat ``{name: Tensor}`` dicts."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

Params = dict[str, Tensor]


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> Tensor:
    bound = np.sqrt(6.0 / fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros(shape, dtype=np.float64) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def conv_params(params: Params, name: str, rng, kh: int, kw: int, cin: int, cout: int,
                dtype=np.float64) -> None:
    params[f"{name}.w"] = he_uniform(rng, (kh, kw, cin, cout), kh * kw * cin, dtype)
    params[f"{name}.b"] = zeros((cout,), dtype)


def count(params: Params) -> int:
    return int(sum(p.size for p in params.values()))
